import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_pair_temporal
from dyngroups.clustering import Partition, cluster
from dyngroups.errors import InconsistencyError, InvalidInputError
from dyngroups.graph import NodeId, WeightedGraph
from dyngroups.groups import (
    DynamicGroups,
    StaticGroups,
    constant_dynamic,
    dynamic_to_static,
    partition_to_dynamic,
    read_dynamic,
    read_partition,
    read_static,
    write_dynamic,
    write_partition,
    write_static,
)


def fs(*groups):
    return tuple(frozenset(g) for g in groups)


def test_projection_of_two_stable_pairs():
    g = two_pair_temporal()
    part = Partition({n: 0 if n.person in (1, 2) else 1 for n in g.nodes})
    d = partition_to_dynamic(part, g)
    assert d.per_frame == {1: fs({1, 2}, {3, 4}), 2: fs({1, 2}, {3, 4})}


def test_projection_reflects_membership_change():
    g = two_pair_temporal()
    lab = {n: 0 if n.person in (1, 2) else 1 for n in g.nodes}
    lab[NodeId(2, 3)] = 0
    d = partition_to_dynamic(Partition(lab), g)
    assert d.per_frame[1] == fs({1, 2}, {3, 4})
    assert d.per_frame[2] == fs({1, 2, 3}, {4})


def test_projection_all_singletons():
    g = WeightedGraph([NodeId(1, p) for p in (1, 2, 3)], [])
    d = partition_to_dynamic(Partition.singletons(g.nodes), g)
    assert d.per_frame == {1: fs({1}, {2}, {3})}


def test_projection_uncovered_node_raises():
    g = two_pair_temporal()
    part = Partition({n: 0 for n in g.nodes[:-1]})
    with pytest.raises(InconsistencyError):
        partition_to_dynamic(part, g)


def test_static_selection_by_frame_count():
    # A={1,2} in 5 frames, B={3} in 4, C={1,2,3} in 2
    per_frame = {f: [{1, 2}, {3}] for f in range(1, 5)}
    per_frame[5] = [{1, 2}]
    per_frame[6] = per_frame[7] = [{1, 2, 3}]
    assert dynamic_to_static(DynamicGroups(per_frame)).groups == fs({1, 2}, {3})


def test_static_of_constant_groups_is_identity():
    d = DynamicGroups({f: [{1, 2}, {3, 4, 5}, {6}] for f in range(1, 8)})
    assert dynamic_to_static(d).groups == d.per_frame[1]


def test_static_skips_intersecting_group():
    # A={1,2} in 5 frames, C={2,3} in 3 frames, 3 otherwise alone
    per_frame = {f: [{1, 2}, {3}] for f in range(1, 3)}
    per_frame.update({f: [{1, 2}] for f in range(3, 6)})
    per_frame.update({f: [{2, 3}, {1}] for f in range(6, 9)})
    per_frame[2] = [{1, 2}]
    s = dynamic_to_static(DynamicGroups(per_frame))
    assert s.groups == fs({1, 2}, {3})


def test_static_empty_raises():
    with pytest.raises(InvalidInputError):
        dynamic_to_static(DynamicGroups({}))


def test_overlapping_groups_rejected():
    with pytest.raises(InvalidInputError):
        DynamicGroups({1: [{1, 2}, {2, 3}]})
    with pytest.raises(InvalidInputError):
        StaticGroups(({1}, {1, 4}))


def test_constant_dynamic_restricts_to_present():
    s = StaticGroups(({1, 2}, {3, 4}))
    d = constant_dynamic(s, {1: [1, 2, 3, 4], 2: [1, 3]})
    assert d.per_frame == {1: fs({1, 2}, {3, 4}), 2: fs({1}, {3})}


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.integers(1, 20), st.permutations(range(1, 7)), min_size=1))
def test_static_always_covers_everyone_disjointly(perms):
    per_frame = {f: [set(p[:2]), set(p[2:3]), set(p[3:])] for f, p in perms.items()}
    s = dynamic_to_static(DynamicGroups(per_frame))
    members = [p for g in s.groups for p in g]
    assert sorted(members) == list(range(1, 7))


def test_dynamic_static_partition_round_trip(tmp_path):
    d = DynamicGroups({1: [{1, 2}, {3}], 2: [{1, 2, 3}]})
    write_dynamic(tmp_path / "d.jsonl", d)
    assert read_dynamic(tmp_path / "d.jsonl") == d
    s = StaticGroups(({1, 2}, {3}))
    write_static(tmp_path / "s.json", s)
    assert read_static(tmp_path / "s.json") == s
    g = two_pair_temporal()
    part = Partition({n: n.person % 2 for n in g.nodes})
    write_partition(tmp_path / "p.jsonl", part)
    assert read_partition(tmp_path / "p.jsonl") == part


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["louvain", "lp", "cnm"]))
def test_any_clusterer_projects_to_framewise_partitions(seed, method):
    rng = np.random.default_rng(seed)
    present = {f: sorted(rng.choice(range(1, 8), size=int(rng.integers(1, 8)), replace=False).tolist())
               for f in (1, 2, 3)}
    nodes = [NodeId(f, p) for f in present for p in present[f]]
    edges = [(u, v, float(rng.random())) for i, u in enumerate(nodes) for v in nodes[i + 1:]
             if abs(u.frame - v.frame) <= 1 and rng.random() < 0.5 and (u.frame == v.frame or u.person == v.person)]
    if not edges:
        return
    g = WeightedGraph(nodes, edges)
    d = partition_to_dynamic(cluster(g, method, seed), g)
    for f, groups in d.per_frame.items():
        assert sorted(p for grp in groups for p in grp) == present[f]
