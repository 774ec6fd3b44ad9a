"""Community detection on weighted undirected graphs.

Graphs are any object with ``nodes`` (sequence of hashables) and ``edges``
(iterable of ``(u, v, w)``). Edges with zero weight are treated as absent.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InconsistencyError, InvalidInputError, SizeLimitError, UndefinedModularityError
from .rng import stream

BRUTE_FORCE_MAX_NODES = 12


@dataclass
class Partition:
    """Node -> community label; labels are relabelled 0, 1, ... by first
    appearance in the assignment's (node) order."""

    assignment: dict

    def __post_init__(self):
        relabel = {}
        out = {}
        for node, lab in self.assignment.items():
            if lab not in relabel:
                relabel[lab] = len(relabel)
            out[node] = relabel[lab]
        self.assignment = out

    @classmethod
    def from_labels(cls, nodes, labels) -> "Partition":
        return cls(dict(zip(nodes, labels)))

    @classmethod
    def from_communities(cls, nodes, communities) -> "Partition":
        lab = {}
        for k, c in enumerate(communities):
            for n in c:
                if n in lab:
                    raise InvalidInputError(f"node {n} in two communities")
                lab[n] = k
        missing = [n for n in nodes if n not in lab]
        if missing:
            raise InvalidInputError(f"node {missing[0]} not in any community")
        return cls({n: lab[n] for n in nodes})

    @classmethod
    def singletons(cls, nodes) -> "Partition":
        return cls({n: i for i, n in enumerate(nodes)})

    @classmethod
    def one_community(cls, nodes) -> "Partition":
        return cls({n: 0 for n in nodes})

    def __getitem__(self, node):
        return self.assignment[node]

    def __len__(self):
        return len(self.assignment)

    @property
    def num_communities(self) -> int:
        return len(set(self.assignment.values()))

    def communities(self) -> list[list]:
        out: list[list] = [[] for _ in range(self.num_communities)]
        for n, c in self.assignment.items():
            out[c].append(n)
        return out


@dataclass(frozen=True)
class ModularityParams:
    resolution: float = 1.0
    min_gain: float = 1e-7
    max_passes: int = 50
    refine: bool = True  # Louvain only: let finer levels move after the last aggregation

    def __post_init__(self):
        if not self.resolution > 0:
            raise InvalidInputError("resolution must be positive")
        if not self.min_gain > 0:
            raise InvalidInputError("min_gain must be positive")
        if self.max_passes < 1:
            raise InvalidInputError("max_passes must be >= 1")


def _positive_edges(graph):
    return [(u, v, float(w)) for u, v, w in graph.edges if w > 0]


def modularity(graph, partition: Partition, resolution: float = 1.0) -> float:
    """Weighted Newman modularity computed from per-community sums."""
    nodes = list(graph.nodes)
    for n in nodes:
        if n not in partition.assignment:
            raise InconsistencyError(f"partition does not cover node {n}")
    internal: dict[int, float] = {}
    degree: dict[int, float] = {}
    m = 0.0
    for u, v, w in _positive_edges(graph):
        cu, cv = partition[u], partition[v]
        m += w
        degree[cu] = degree.get(cu, 0.0) + w
        degree[cv] = degree.get(cv, 0.0) + w
        if cu == cv:
            internal[cu] = internal.get(cu, 0.0) + w
    if m <= 0:
        raise UndefinedModularityError("graph has zero total edge weight")
    two_m = 2.0 * m
    return math.fsum(
        internal.get(c, 0.0) / m - resolution * (d / two_m) ** 2 for c, d in degree.items()
    )


class _Adjacency:
    """Index-based adjacency: ``adj[i]`` maps neighbour -> weight (i excluded),
    ``loops[i]`` holds self-loop weight counted once."""

    def __init__(self, graph):
        self.nodes = list(graph.nodes)
        index = {n: i for i, n in enumerate(self.nodes)}
        if len(index) != len(self.nodes):
            raise InvalidInputError("duplicate node")
        n = len(self.nodes)
        self.adj: list[dict[int, float]] = [{} for _ in range(n)]
        self.loops = [0.0] * n
        for u, v, w in _positive_edges(graph):
            try:
                i, j = index[u], index[v]
            except KeyError as exc:
                raise InconsistencyError(f"edge endpoint {exc.args[0]} is not a node") from None
            if i == j:
                self.loops[i] += w
            else:
                self.adj[i][j] = self.adj[i].get(j, 0.0) + w
                self.adj[j][i] = self.adj[j].get(i, 0.0) + w


def _degrees(adj, loops):
    return [sum(a.values()) + 2.0 * l for a, l in zip(adj, loops)]


@dataclass
class LouvainPass:
    level: int
    partition: Partition
    modularity: float  # tracked incrementally through the node moves
    moves: int


def _level_q(adj, loops, comm, k, m, gamma):
    internal: dict[int, float] = {}
    tot: dict[int, float] = {}
    for i, nbrs in enumerate(adj):
        c = comm[i]
        tot[c] = tot.get(c, 0.0) + k[i]
        internal[c] = internal.get(c, 0.0) + loops[i]
        for j, w in nbrs.items():
            if j > i and comm[j] == c:
                internal[c] += w
    return math.fsum(internal[c] / m - gamma * (tot[c] / (2.0 * m)) ** 2 for c in tot)


def _one_level(adj, loops, m, gamma, min_gain, rng, init=None):
    n = len(adj)
    two_m = 2.0 * m
    k = _degrees(adj, loops)
    comm = list(range(n)) if init is None else list(init)
    tot = [0.0] * n
    for i in range(n):
        tot[comm[i]] += k[i]
    q = _level_q(adj, loops, comm, k, m, gamma)
    order = [int(i) for i in rng.permutation(n)]
    moves = 0
    while True:
        q_sweep = q
        moved = False
        for i in order:
            ki = k[i]
            if ki == 0.0:
                continue
            ci = comm[i]
            links: dict[int, float] = {}
            for j, w in adj[i].items():
                cj = comm[j]
                links[cj] = links.get(cj, 0.0) + w
            tot[ci] -= ki
            stay = links.get(ci, 0.0) - gamma * tot[ci] * ki / two_m
            best_c, best = ci, -math.inf
            for c, w in links.items():
                if c == ci:
                    continue
                gain = w - gamma * tot[c] * ki / two_m
                if gain > best or (gain == best and c < best_c):
                    best_c, best = c, gain
            if best_c != ci and best - stay > 1e-10 * ki:
                comm[i] = best_c
                tot[best_c] += ki
                q += (best - stay) / m
                moved = True
                moves += 1
            else:
                tot[ci] += ki
        if not moved or q - q_sweep < min_gain:
            break
    return comm, q, moves


def _aggregate(adj, loops, labels, n_comm):
    new_adj: list[dict[int, float]] = [{} for _ in range(n_comm)]
    new_loops = [0.0] * n_comm
    for i, nbrs in enumerate(adj):
        ci = labels[i]
        new_loops[ci] += loops[i]
        for j, w in nbrs.items():
            if j <= i:
                continue
            cj = labels[j]
            if ci == cj:
                new_loops[ci] += w
            else:
                new_adj[ci][cj] = new_adj[ci].get(cj, 0.0) + w
                new_adj[cj][ci] = new_adj[cj].get(ci, 0.0) + w
    return new_adj, new_loops


def _compact(labels):
    remap = {}
    return [remap.setdefault(c, len(remap)) for c in labels], remap


def louvain_passes(graph, params: ModularityParams | None = None, seed: int = 0) -> list[LouvainPass]:
    """Run Louvain and return the partition after every aggregation level."""
    params = params or ModularityParams()
    g = _Adjacency(graph)
    m = sum(g.loops) + sum(sum(a.values()) for a in g.adj) / 2.0
    if not g.nodes or m <= 0:
        raise UndefinedModularityError("graph has zero total edge weight")
    rng = stream(seed, "louvain")
    adj, loops = g.adj, g.loops
    membership = list(range(len(g.nodes)))  # original node -> current super-node
    passes: list[LouvainPass] = []
    levels = []  # (adj, loops, labels) for every level that was aggregated
    q_prev = None
    for level in range(params.max_passes):
        comm, q, moves = _one_level(adj, loops, m, params.resolution, params.min_gain, rng)
        labels, _ = _compact(comm)
        membership = [labels[s] for s in membership]
        passes.append(LouvainPass(level, Partition.from_labels(g.nodes, membership), q, moves))
        if moves == 0 or (q_prev is not None and q - q_prev < params.min_gain):
            break
        q_prev = q
        levels.append((adj, loops, labels))
        adj, loops = _aggregate(adj, loops, labels, max(labels) + 1)
    if params.refine and levels:
        passes.extend(_refine(levels, labels, g.nodes, m, params, rng, len(passes)))
    return passes


def _pair_moves(adj, loops, comm, m, gamma, rng, max_sweeps=20):
    """Move two adjacent same-community nodes together when that raises modularity.

    Catches the case where neither node gains by moving alone but the pair
    does, e.g. a strongly tied pair held back only by each other.
    """
    n = len(adj)
    two_m = 2.0 * m
    k = _degrees(adj, loops)
    tot = [0.0] * n
    for i in range(n):
        tot[comm[i]] += k[i]
    moves = 0
    for _ in range(max_sweeps):
        moved = False
        for i in [int(x) for x in rng.permutation(n)]:
            c = comm[i]
            for j in sorted(adj[i]):
                if comm[j] != c or comm[i] != c:
                    continue
                ks = k[i] + k[j]
                links: dict[int, float] = {}
                for u in (i, j):
                    for v, w in adj[u].items():
                        if v != i and v != j:
                            links[comm[v]] = links.get(comm[v], 0.0) + w
                stay = links.get(c, 0.0) - gamma * ks * (tot[c] - ks) / two_m
                best_d, best = c, -math.inf
                for d, w in links.items():
                    if d == c:
                        continue
                    gain = w - gamma * ks * tot[d] / two_m
                    if gain > best or (gain == best and d < best_d):
                        best_d, best = d, gain
                if best_d != c and best - stay > 1e-10 * ks:
                    comm[i] = comm[j] = best_d
                    tot[c] -= ks
                    tot[best_d] += ks
                    moved = True
                    moves += 1
                    break
        if not moved:
            break
    return comm, moves


def _refine(levels, top, nodes, m, params, rng, first_level):
    """Walk back down the hierarchy, letting super-nodes of every finer level move.

    Plain Louvain never splits a community once it has been aggregated; this
    pass can, and it only accepts moves that raise modularity.
    """
    comm = top  # communities of the nodes one level up
    total_moves = 0
    for adj, loops, labels in reversed(levels):
        init = [comm[c] for c in labels]
        comm, q, moves = _one_level(adj, loops, m, params.resolution, params.min_gain, rng, init=init)
        total_moves += moves
    adj, loops, _ = levels[0]
    comm, moves = _pair_moves(adj, loops, comm, m, params.resolution, rng)
    if moves:
        total_moves += moves
        comm, q, _ = _one_level(adj, loops, m, params.resolution, params.min_gain, rng, init=comm)
    if total_moves == 0:
        return []
    labels, _ = _compact(comm)
    return [LouvainPass(first_level, Partition.from_labels(nodes, labels), q, total_moves)]


def louvain(graph, params: ModularityParams | None = None, seed: int = 0) -> Partition:
    """Two-phase Louvain modularity maximisation (best-gain moves, seeded order)."""
    return louvain_passes(graph, params, seed)[-1].partition


def label_propagation(graph, seed: int = 0, max_iters: int = 100) -> Partition:
    """Asynchronous weighted label propagation.

    Each node adopts the label with the largest summed incident weight among
    its neighbours (ties -> smallest label); nodes without edges keep their own.
    """
    g = _Adjacency(graph)
    n = len(g.nodes)
    if n == 0:
        raise InvalidInputError("empty graph")
    labels = list(range(n))
    rng = stream(seed, "label-propagation")
    for _ in range(max_iters):
        changed = False
        for i in rng.permutation(n):
            nbrs = g.adj[i]
            if not nbrs:
                continue
            sums: dict[int, float] = {}
            for j, w in nbrs.items():
                sums[labels[j]] = sums.get(labels[j], 0.0) + w
            best = max(sums.items(), key=lambda kv: (kv[1], -kv[0]))[0]
            if best != labels[i]:
                labels[i] = best
                changed = True
        if not changed:
            break
    return Partition.from_labels(g.nodes, labels)


def cnm_greedy(graph, resolution: float = 1.0) -> Partition:
    """Clauset-Newman-Moore agglomeration from singletons.

    Merges the pair with the largest modularity gain while that gain is
    positive; equal gains go to the smallest (label, label) pair. The merged
    community keeps the smaller label.
    """
    g = _Adjacency(graph)
    n = len(g.nodes)
    m = sum(g.loops) + sum(sum(a.values()) for a in g.adj) / 2.0
    if n == 0 or m <= 0:
        raise UndefinedModularityError("graph has zero total edge weight")
    two_m_sq = 2.0 * m * m
    tot = _degrees(g.adj, g.loops)
    nbr = [dict(a) for a in g.adj]
    alive = [True] * n
    version = [0] * n
    members = [[i] for i in range(n)]

    def gain(a, b):
        return nbr[a][b] / m - resolution * tot[a] * tot[b] / two_m_sq

    heap = []
    for a in range(n):
        for b in nbr[a]:
            if a < b:
                heap.append((-gain(a, b), a, b, 0, 0))
    heapq.heapify(heap)
    while heap:
        neg, a, b, va, vb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or version[a] != va or version[b] != vb:
            continue
        if -neg <= 0:
            break
        # merge b into a (a < b)
        alive[b] = False
        members[a].extend(members[b])
        members[b] = []
        tot[a] += tot[b]
        del nbr[a][b]
        del nbr[b][a]
        for c, w in nbr[b].items():
            nbr[a][c] = nbr[a].get(c, 0.0) + w
            del nbr[c][b]
            nbr[c][a] = nbr[a][c]
        nbr[b] = {}
        version[a] += 1
        for c in nbr[a]:
            lo, hi = (a, c) if a < c else (c, a)
            heapq.heappush(heap, (-gain(lo, hi), lo, hi, version[lo], version[hi]))
    labels = [0] * n
    for c in range(n):
        for i in members[c]:
            labels[i] = c
    return Partition.from_labels(g.nodes, labels)


# -- exhaustive oracle ------------------------------------------------------------


@lru_cache(maxsize=None)
def _restricted_growth_strings(n: int) -> np.ndarray:
    """All set partitions of n items as label rows (Bell(n) x n, int8)."""
    rows = np.zeros((1, 1), dtype=np.int8)
    mx = np.zeros(1, dtype=np.int8)
    for _ in range(1, n):
        counts = mx.astype(np.int64) + 2
        parent = np.repeat(np.arange(len(rows)), counts)
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        vals = (np.arange(parent.size) - starts).astype(np.int8)
        rows = np.concatenate([rows[parent], vals[:, None]], axis=1)
        mx = np.maximum(mx[parent], vals)
    rows.setflags(write=False)
    return rows


def brute_force_optimal(graph, resolution: float = 1.0, chunk: int = 65536):
    """Enumerate every set partition; return (best partition, best Q)."""
    nodes = list(graph.nodes)
    n = len(nodes)
    if n > BRUTE_FORCE_MAX_NODES:
        raise SizeLimitError(f"{n} nodes exceeds the exhaustive-search limit of {BRUTE_FORCE_MAX_NODES}")
    index = {v: i for i, v in enumerate(nodes)}
    A = np.zeros((n, n))
    for u, v, w in graph.edges:
        if w > 0:
            A[index[u], index[v]] += w
            A[index[v], index[u]] += w
    two_m = A.sum()
    if n == 0 or two_m <= 0:
        raise UndefinedModularityError("graph has zero total edge weight")
    k = A.sum(axis=1)
    B = ((A - resolution * np.outer(k, k) / two_m) / two_m).ravel()
    rgs = _restricted_growth_strings(n)
    best_q, best_row = -math.inf, None
    for start in range(0, len(rgs), chunk):
        L = rgs[start: start + chunk]
        same = (L[:, :, None] == L[:, None, :]).reshape(len(L), n * n)
        q = same @ B
        i = int(np.argmax(q))
        if q[i] > best_q:
            best_q, best_row = float(q[i]), L[i]
    return Partition.from_labels(nodes, best_row.tolist()), best_q


CLUSTERERS = ("louvain", "lp", "cnm")


def cluster(graph, method: str = "louvain", seed: int = 0, params: ModularityParams | None = None,
            max_iters: int = 100) -> Partition:
    params = params or ModularityParams()
    if method == "louvain":
        return louvain(graph, params, seed)
    if method == "lp":
        return label_propagation(graph, seed, max_iters)
    if method == "cnm":
        return cnm_greedy(graph, params.resolution)
    raise InvalidInputError(f"unknown clusterer {method!r}; expected one of {CLUSTERERS}")
