import itertools

import pytest

from dyngroups.graph import NodeId, WeightedGraph


def triangles():
    """Two disjoint unit-weight triangles on nodes 0..5."""
    edges = [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0), (3, 4, 1.0), (3, 5, 1.0), (4, 5, 1.0)]
    return WeightedGraph(list(range(6)), edges)


def complete(n, w=1.0):
    return WeightedGraph(list(range(n)), [(i, j, w) for i, j in itertools.combinations(range(n), 2)])


def two_pair_temporal(p_in=0.95, p_out=0.05, p_t=1.0, frames=(1, 2)):
    """Frames x 4 persons, groups {1,2} and {3,4}, identity temporal links."""
    nodes = [NodeId(f, p) for f in frames for p in (1, 2, 3, 4)]
    edges = []
    for f in frames:
        for a, b in itertools.combinations((1, 2, 3, 4), 2):
            same = (a, b) in ((1, 2), (3, 4))
            edges.append((NodeId(f, a), NodeId(f, b), p_in if same else p_out))
    for f, g in zip(frames, frames[1:]):
        for p in (1, 2, 3, 4):
            edges.append((NodeId(f, p), NodeId(g, p), p_t))
    return WeightedGraph(nodes, edges)


@pytest.fixture
def tri():
    return triangles()
