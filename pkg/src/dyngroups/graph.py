"""Framewise and temporal groupness graphs, k-NN pair pruning, static aggregation."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InconsistencyError, InvalidInputError

STATIC_FRAME = 0  # frame index carried by nodes of an aggregated static graph


class NodeId(NamedTuple):
    frame: int
    person: int


@dataclass
class WeightedGraph:
    """Undirected weighted graph; what the clusterers consume."""

    nodes: list
    edges: list  # (u, v, w)


@dataclass
class TemporalGroupnessGraph:
    nodes: list = field(default_factory=list)  # sorted NodeIds
    spatial_edges: list = field(default_factory=list)
    temporal_edges: list = field(default_factory=list)

    @property
    def edges(self) -> list:
        return self.spatial_edges + self.temporal_edges

    @property
    def frames(self) -> list[int]:
        return sorted({n.frame for n in self.nodes})

    def nodes_at(self, frame: int) -> list[NodeId]:
        return [n for n in self.nodes if n.frame == frame]

    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    def audit(self) -> None:
        """Raise InconsistencyError unless the graph is simple and well-formed."""
        nodes = set(self.nodes)
        if len(nodes) != len(self.nodes):
            raise InconsistencyError("duplicate node")
        seen = set()
        for kind, edges in (("spatial", self.spatial_edges), ("temporal", self.temporal_edges)):
            for u, v, w in edges:
                if u not in nodes or v not in nodes:
                    raise InconsistencyError(f"{kind} edge ({u}, {v}) has an unknown endpoint")
                if u == v:
                    raise InconsistencyError(f"self-loop at {u}")
                if not w >= 0:
                    raise InconsistencyError(f"negative or NaN weight on ({u}, {v})")
                key = (u, v) if u < v else (v, u)
                if key in seen:
                    raise InconsistencyError(f"duplicate edge {key}")
                seen.add(key)
                gap = abs(u.frame - v.frame)
                if kind == "spatial" and gap != 0:
                    raise InconsistencyError(f"spatial edge ({u}, {v}) crosses frames")
                if kind == "temporal" and gap != 1:
                    raise InconsistencyError(f"temporal edge ({u}, {v}) spans {gap} frames")


def build_framewise(frame: int, observations, persons_present: Iterable[int], tau: float = 0.0):
    """One node per present person, one edge per observation weighted by P_g.

    Observations with P_g below ``tau`` are dropped (``tau = 0`` keeps all).
    """
    present = sorted(set(int(p) for p in persons_present))
    pset = set(present)
    g = TemporalGroupnessGraph(nodes=[NodeId(frame, p) for p in present])
    seen = set()
    for o in observations:
        if o.frame != frame:
            raise InconsistencyError(f"observation for frame {o.frame} given to frame {frame}")
        a, b = sorted((o.person_a, o.person_b))
        for p in (a, b):
            if p not in pset:
                raise InconsistencyError(f"observation references person {p} absent at frame {frame}")
        if a == b:
            raise InconsistencyError(f"self pair ({a}, {b}) at frame {frame}")
        if (a, b) in seen:
            raise InconsistencyError(f"duplicate observation ({a}, {b}) at frame {frame}")
        seen.add((a, b))
        if o.p_g < tau:
            continue
        g.spatial_edges.append((NodeId(frame, a), NodeId(frame, b), float(o.p_g)))
    return g


def link_temporal(framewise_graphs: Sequence[TemporalGroupnessGraph], links, lambda_t: float = 1.0):
    """Union of framewise graphs plus temporal edges of weight lambda_t * P_t."""
    if lambda_t < 0:
        raise InvalidInputError("lambda_t must be non-negative")
    frames = []
    out = TemporalGroupnessGraph()
    for g in framewise_graphs:
        fs = g.frames
        if len(fs) > 1:
            raise InconsistencyError("framewise graph spans several frames")
        if fs:
            if frames and fs[0] <= frames[-1]:
                raise InconsistencyError("framewise graphs must have strictly increasing frames")
            frames.append(fs[0])
        out.nodes.extend(g.nodes)
        out.spatial_edges.extend(g.spatial_edges)
    nodes = set(out.nodes)
    used_src, used_dst = set(), set()
    for l in links:
        u, v = NodeId(l.frame, l.a), NodeId(l.frame + 1, l.b)
        for n in (u, v):
            if n not in nodes:
                raise InconsistencyError(f"link references missing node {tuple(n)}")
        if u in used_src or v in used_dst:
            raise InconsistencyError(f"more than one link at {tuple(u)} -> {tuple(v)}")
        used_src.add(u)
        used_dst.add(v)
        w = lambda_t * float(l.p_t)
        if w > 0:
            out.temporal_edges.append((u, v, w))
    out.nodes.sort()
    return out


def knn_pairs(states: dict, k: int) -> dict[int, list[tuple[int, int]]]:
    """Per frame, pairs where either member is among the other's k nearest.

    ``states`` maps frame -> {person: PersonState}. Distance ties go to the
    smaller person id.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    out = {}
    for f in sorted(states):
        ids = sorted(states[f])
        n = len(ids)
        if n < 2:
            out[f] = []
            continue
        pos = np.array([states[f][p].position for p in ids], dtype=float)
        d = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        kk = min(k, n - 1)
        pairs = set()
        for i in range(n):
            # lexsort: last key is primary; ids are sorted so index order == id order
            order = np.lexsort((np.arange(n), d[i]))
            for j in order[:kk]:
                a, b = (i, j) if i < j else (j, i)
                pairs.add((ids[a], ids[b]))
        out[f] = sorted(pairs)
    return out


def aggregate_static_graph(framewise_graphs: Sequence[TemporalGroupnessGraph]) -> TemporalGroupnessGraph:
    """Single graph over person ids; edge weight = mean P_g over frames where observed."""
    if not framewise_graphs:
        raise InvalidInputError("no framewise graphs to aggregate")
    persons = set()
    sums = defaultdict(float)
    counts = defaultdict(int)
    for g in framewise_graphs:
        persons.update(n.person for n in g.nodes)
        for u, v, w in g.spatial_edges:
            key = tuple(sorted((u.person, v.person)))
            sums[key] += w
            counts[key] += 1
    nodes = [NodeId(STATIC_FRAME, p) for p in sorted(persons)]
    edges = [
        (NodeId(STATIC_FRAME, a), NodeId(STATIC_FRAME, b), sums[(a, b)] / counts[(a, b)])
        for a, b in sorted(sums)
    ]
    return TemporalGroupnessGraph(nodes=nodes, spatial_edges=edges)


def build_temporal_graph(observations, persons_by_frame: dict, links, lambda_t: float = 1.0, tau: float = 0.0):
    """Convenience: group observations by frame, build framewise graphs, link them."""
    by_frame = defaultdict(list)
    for o in observations:
        by_frame[o.frame].append(o)
    unknown = set(by_frame) - set(persons_by_frame)
    if unknown:
        raise InconsistencyError(f"observations for unknown frame {min(unknown)}")
    framewise = [build_framewise(f, by_frame.get(f, ()), persons_by_frame[f], tau) for f in sorted(persons_by_frame)]
    return framewise, link_temporal(framewise, links, lambda_t)


# -- JSON Lines -----------------------------------------------------------------


def write_graph(path, graph: TemporalGroupnessGraph) -> None:
    lines = [json.dumps({"frame": n.frame, "person": n.person}) for n in graph.nodes]
    for kind, edges in (("spatial", graph.spatial_edges), ("temporal", graph.temporal_edges)):
        for u, v, w in edges:
            lines.append(json.dumps({"kind": kind, "u": list(u), "v": list(v), "w": w}))
    Path(path).write_text("".join(l + "\n" for l in lines))


def read_graph(path) -> TemporalGroupnessGraph:
    g = TemporalGroupnessGraph()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            r = json.loads(line)
            if "kind" in r:
                e = (NodeId(*r["u"]), NodeId(*r["v"]), float(r["w"]))
                if r["kind"] == "spatial":
                    g.spatial_edges.append(e)
                elif r["kind"] == "temporal":
                    g.temporal_edges.append(e)
                else:
                    raise InvalidInputError(f"unknown edge kind {r['kind']!r} at line {lineno}")
            else:
                g.nodes.append(NodeId(int(r["frame"]), int(r["person"])))
    g.nodes.sort()
    g.audit()
    return g
