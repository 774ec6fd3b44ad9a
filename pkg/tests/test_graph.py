import numpy as np
import pytest

from dyngroups.errors import InconsistencyError, InvalidInputError
from dyngroups.graph import (
    STATIC_FRAME,
    NodeId,
    TemporalGroupnessGraph,
    aggregate_static_graph,
    build_framewise,
    build_temporal_graph,
    knn_pairs,
    link_temporal,
    read_graph,
    write_graph,
)
from dyngroups.groupness import PairObservation
from dyngroups.scenario import PersonState, TemporalLink


def obs(f, a, b, pg):
    return PairObservation(f, a, b, 1.0 - pg, pg)


def at(x, y=0.0, pid=0):
    return PersonState(pid, (x, y), (0.0, 0.0), 0.0, False)


def test_framewise_three_people():
    g = build_framewise(1, [obs(1, 1, 2, 0.9), obs(1, 1, 3, 0.1), obs(1, 2, 3, 0.2)], {1, 2, 3})
    assert g.nodes == [NodeId(1, 1), NodeId(1, 2), NodeId(1, 3)]
    assert {(u.person, v.person): w for u, v, w in g.spatial_edges} == {(1, 2): 0.9, (1, 3): 0.1, (2, 3): 0.2}


def test_framewise_singleton():
    g = build_framewise(4, [], {7})
    assert g.nodes == [NodeId(4, 7)] and g.edges == []


def test_framewise_absent_person_raises():
    with pytest.raises(InconsistencyError):
        build_framewise(1, [obs(1, 1, 9, 0.5)], {1, 2})


def test_framewise_threshold_drops_weak_edges():
    g = build_framewise(1, [obs(1, 1, 2, 0.9), obs(1, 1, 3, 0.1)], {1, 2, 3}, tau=0.5)
    assert len(g.spatial_edges) == 1


def two_frames():
    return [build_framewise(f, [], {1, 2}) for f in (1, 2)]


def test_link_identity_links():
    g = link_temporal(two_frames(), [TemporalLink(1, 1, 1, 1.0), TemporalLink(1, 2, 2, 1.0)], 1.0)
    assert len(g.nodes) == 4
    assert g.temporal_edges == [(NodeId(1, 1), NodeId(2, 1), 1.0), (NodeId(1, 2), NodeId(2, 2), 1.0)]
    g.audit()


def test_link_zero_confidence_emits_nothing():
    g = link_temporal(two_frames(), [TemporalLink(1, 1, 1, 0.0)], 1.0)
    assert g.temporal_edges == []


def test_link_weight_is_scaled():
    g = link_temporal(two_frames(), [TemporalLink(1, 1, 2, 0.8)], 0.5)
    assert g.temporal_edges == [(NodeId(1, 1), NodeId(2, 2), pytest.approx(0.4))]


def test_link_to_missing_node_raises():
    with pytest.raises(InconsistencyError):
        link_temporal(two_frames(), [TemporalLink(1, 1, 3, 1.0)], 1.0)


def test_link_rejects_negative_multiplier():
    with pytest.raises(InvalidInputError):
        link_temporal(two_frames(), [], -1.0)


def test_knn_collinear():
    states = {1: {1: at(0.0), 2: at(1.0), 3: at(3.0)}}
    assert knn_pairs(states, 1) == {1: [(1, 2), (2, 3)]}


def test_knn_saturates_to_all_pairs():
    states = {1: {p: at(float(p * p)) for p in range(1, 6)}}
    assert len(knn_pairs(states, 4)[1]) == 10
    assert len(knn_pairs(states, 40)[1]) == 10


def test_knn_single_person():
    assert knn_pairs({3: {1: at(0.0)}}, 2) == {3: []}


def test_knn_tie_goes_to_smaller_id():
    # person 2 is equidistant from 1 and 3; everyone else has a closer partner
    states = {1: {0: at(-1.5), 1: at(-1.0), 2: at(0.0), 3: at(1.0), 4: at(1.5)}}
    assert knn_pairs(states, 1)[1] == [(0, 1), (1, 2), (3, 4)]


def test_aggregate_mean_over_observed_frames():
    gs = [build_framewise(1, [obs(1, 1, 2, 0.8)], {1, 2}), build_framewise(2, [obs(2, 1, 2, 0.6)], {1, 2})]
    s = aggregate_static_graph(gs)
    assert s.nodes == [NodeId(STATIC_FRAME, 1), NodeId(STATIC_FRAME, 2)]
    assert s.spatial_edges[0][2] == pytest.approx(0.7)


def test_aggregate_ignores_unobserved_frames():
    gs = [build_framewise(f, [obs(f, 1, 2, 0.9)] if f == 3 else [], {1, 2}) for f in range(1, 11)]
    assert aggregate_static_graph(gs).spatial_edges[0][2] == 0.9


def test_aggregate_single_frame_is_projection():
    g = build_framewise(5, [obs(5, 1, 2, 0.3), obs(5, 2, 3, 0.6)], {1, 2, 3})
    s = aggregate_static_graph([g])
    assert [(u.person, v.person, w) for u, v, w in s.spatial_edges] == [
        (u.person, v.person, w) for u, v, w in g.spatial_edges
    ]


def test_aggregate_empty_raises():
    with pytest.raises(InvalidInputError):
        aggregate_static_graph([])


def test_audit_catches_bad_edges():
    n1, n2, n3 = NodeId(1, 1), NodeId(1, 2), NodeId(3, 1)
    with pytest.raises(InconsistencyError):
        TemporalGroupnessGraph([n1, n2], [(n1, n2, 1.0), (n2, n1, 1.0)]).audit()
    with pytest.raises(InconsistencyError):
        TemporalGroupnessGraph([n1, n3], [], [(n1, n3, 1.0)]).audit()
    with pytest.raises(InconsistencyError):
        TemporalGroupnessGraph([n1, n2], [(n1, n2, -0.1)]).audit()


def test_temporal_graph_write_read(tmp_path):
    observations = [obs(1, 1, 2, 0.9), obs(2, 1, 2, 0.7), obs(2, 2, 3, 0.1)]
    links = [TemporalLink(1, 1, 1, 1.0), TemporalLink(1, 2, 3, 0.6)]
    _, g = build_temporal_graph(observations, {1: [1, 2], 2: [1, 2, 3]}, links, lambda_t=0.5)
    write_graph(tmp_path / "g.jsonl", g)
    back = read_graph(tmp_path / "g.jsonl")
    assert back == g
    assert g.total_weight() == pytest.approx(0.9 + 0.7 + 0.1 + 0.5 + 0.3)


def test_knn_pairs_grow_with_k():
    rng = np.random.default_rng(0)
    states = {f: {p: at(*rng.uniform(0, 10, size=2)) for p in range(1, 12)} for f in range(1, 6)}
    prev = None
    for k in range(1, 11):
        cur = knn_pairs(states, k)
        if prev is not None:
            for f in states:
                assert set(prev[f]) <= set(cur[f])
        prev = cur
    assert all(len(v) == 55 for v in prev.values())
