"""Generator oracles: turn indicators, geometric route networks, layered
unrollings and the composite-choice DAG bijection."""

import itertools

import numpy as np
import pytest

from rlogit.errors import InvalidBounds
from rlogit.generators import (
    DEST_STATE,
    ORIGIN_STATE,
    bic_dag,
    composite_from_path,
    layered_dag_from_undirected,
    layered_origin,
    muc_dag,
    project_layered_path,
    random_geometric_network,
    turn_indicators,
)
from rlogit.network import build_network, enumerate_paths, reachable_from


@pytest.mark.parametrize(
    "angle, expected",
    [
        (0.0, (0, 0, 0)),
        (29.9, (0, 0, 0)),
        (30.0, (1, 0, 0)),
        (90.0, (1, 0, 0)),
        (150.0, (1, 0, 0)),
        (150.1, (0, 0, 1)),
        (-30.0, (0, 1, 0)),
        (-150.0, (0, 1, 0)),
        (-179.0, (0, 0, 1)),
        (179.0, (0, 0, 1)),
    ],
)
def test_turn_indicators(angle, expected):
    assert turn_indicators(angle) == expected


def test_geometric_network_deterministic_and_valid():
    net1 = random_geometric_network(20, 0.35, seed=1)
    net2 = random_geometric_network(20, 0.35, seed=1)
    assert net1.states == net2.states
    np.testing.assert_array_equal(net1.attrs, net2.attrs)
    assert net1.destination == DEST_STATE
    assert ORIGIN_STATE in net1.states
    # every state lies on an origin-to-destination corridor
    assert reachable_from(net1, ORIGIN_STATE) == set(net1.states)
    assert net1.attribute_names == ("TT", "LT", "RT", "UT")
    # TT nonnegative, indicators in {0, 1} and mutually exclusive
    tt = net1.attrs[:, 0]
    ind = net1.attrs[:, 1:]
    assert np.all(tt >= 0)
    assert set(np.unique(ind)) <= {0.0, 1.0}
    assert np.all(ind.sum(axis=1) <= 1)


def test_geometric_network_acyclic():
    net = random_geometric_network(25, 0.3, seed=3, acyclic=True)
    # DFS cycle check over the state graph
    color = {s: 0 for s in net.states}

    def dfs(s):
        color[s] = 1
        for t in net.successors(s):
            if color[t] == 1:
                return False
            if color[t] == 0 and not dfs(t):
                return False
        color[s] = 2
        return True

    assert all(dfs(s) for s in net.states if color[s] == 0)


def test_geometric_network_extra_attributes():
    net = random_geometric_network(15, 0.4, seed=2, extra_attributes=2)
    assert net.attribute_names[-2:] == ("X0", "X1")
    extra = net.attrs[:, 4:]
    assert extra.shape[1] == 2
    assert np.all((extra >= 0) & (extra <= 1))


def test_geometric_cyclic_variant_has_both_directions():
    net = random_geometric_network(15, 0.4, seed=5, acyclic=False)
    pairs = {(net.states[u], net.states[v]) for u, v, _ in zip(net.arc_from, net.arc_to, net.attrs)}
    # at least one reciprocal state pair exists (u-turn transitions)
    recip = [(a, b) for (a, b) in pairs if (b, a) in pairs]
    assert recip


def test_layered_unrolling_path_counts(cycle_net):
    layered = layered_dag_from_undirected(cycle_net, "s0")
    # walks of length <= n_states - 1 = 3 transitions from s0:
    # s0 -> s1 -> d and s0 -> s2 -> d only (longer walks revisit s0 and
    # cannot exit within the layer budget)
    paths = [project_layered_path(p) for p in enumerate_paths(layered, layered_origin("s0"))]
    assert sorted(tuple(p) for p in paths) == [("s0", "s1", "d"), ("s0", "s2", "d")]


def test_layered_origin_naming():
    assert layered_origin("s0") == "s0@0"
    assert project_layered_path(["s0@0", "s1@1", "d@2", "d@3"]) == ["s0", "s1", "d"]


def test_layered_triangle_blocks_revisits():
    # fully connected triangle: o -> a -> d fits in three layers but any walk
    # revisiting o does not
    tri = build_network(
        ["o", "a", "d"],
        "d",
        [("o", "a", [1.0]), ("a", "o", [1.0]), ("o", "d", [1.0]), ("a", "d", [1.0])],
        ["c"],
    )
    layered = layered_dag_from_undirected(tri, "o")
    paths = [tuple(project_layered_path(p)) for p in enumerate_paths(layered, "o@0")]
    assert sorted(paths) == [("o", "a", "d"), ("o", "d")]


def test_bic_path_count_m5():
    # selections of between 0 and 3 of 5 alternatives: C(5,0..3) sums to 26
    net = bic_dag(5, 0, 3, np.zeros((5, 1)))
    paths = list(enumerate_paths(net, "n0_0"))
    assert len(paths) == 26


@pytest.mark.parametrize("m, low, up", [(1, 0, 1), (4, 2, 2), (6, 1, 4), (8, 0, 8)])
def test_bic_muc_bijection(m, low, up):
    alt = np.arange(m, dtype=float).reshape(m, 1) + 1.0
    expected = {
        frozenset(c)
        for r in range(low, up + 1)
        for c in itertools.combinations(range(m), r)
    }
    bic = bic_dag(m, low, up, alt)
    muc = muc_dag(m, low, up, alt)
    bic_sets = [composite_from_path("bic", p) for p in enumerate_paths(bic, "n0_0")]
    muc_sets = [composite_from_path("muc", p) for p in enumerate_paths(muc, "m0_0")]
    assert len(bic_sets) == len(set(bic_sets)) and set(bic_sets) == expected
    assert len(muc_sets) == len(set(muc_sets)) and set(muc_sets) == expected


def test_composite_path_utility_matches_selection():
    m, low, up = 5, 1, 3
    alt = np.array([[1.0], [2.0], [4.0], [8.0], [16.0]])
    for kind, net, origin in [
        ("bic", bic_dag(m, low, up, alt), "n0_0"),
        ("muc", muc_dag(m, low, up, alt), "m0_0"),
    ]:
        for path in enumerate_paths(net, origin):
            arcs = [net.arc_id(u, v) for u, v in zip(path[:-1], path[1:])]
            total = float(net.attrs[arcs].sum())
            chosen = composite_from_path(kind, path)
            assert total == pytest.approx(sum(alt[i, 0] for i in chosen))


def test_invalid_bounds_rejected():
    with pytest.raises(InvalidBounds):
        bic_dag(3, 2, 1, np.zeros((3, 1)))
    with pytest.raises(InvalidBounds):
        muc_dag(3, 0, 4, np.zeros((3, 1)))
    with pytest.raises(InvalidBounds):
        bic_dag(3, 0, 2, np.zeros((2, 1)))
