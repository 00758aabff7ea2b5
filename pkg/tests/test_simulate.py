"""Path sampling: reproducibility, empirical frequencies, serialization."""

import math

import numpy as np
import pytest
from scipy import stats

from rlogit import core
from rlogit.errors import InvalidPath
from rlogit.generators import bic_dag
from rlogit.network import enumerate_paths
from rlogit.simulate import (
    generate_observations,
    generate_observations_via_layered,
    load_observations,
    sample_path,
    save_observations,
)


def spec(*beta):
    return core.UtilitySpec(np.asarray(beta, dtype=float))


def test_deterministic_chain_sampling(chain_net):
    s = spec(-1.0)
    obs = generate_observations(chain_net, s, "o", 5, seed=0)
    assert len(obs) == 5
    for ob in obs.observations:
        assert ob.path == ("o", "a", "b", "d")
        assert ob.attr_sum[0] == pytest.approx(6.0)


def test_generation_reproducible(two_route_net):
    s = spec(-1.0)
    a = generate_observations(two_route_net, s, "o", 200, seed=42)
    b = generate_observations(two_route_net, s, "o", 200, seed=42)
    assert [ob.path for ob in a.observations] == [ob.path for ob in b.observations]
    c = generate_observations(two_route_net, s, "o", 200, seed=43)
    assert [ob.path for ob in a.observations] != [ob.path for ob in c.observations]


def test_two_route_frequencies(two_route_net):
    s = spec(-1.0)
    obs = generate_observations(two_route_net, s, "o", 100_000, seed=1)
    frac_a = np.mean([ob.path[1] == "a" for ob in obs.observations])
    assert frac_a == pytest.approx(0.5, abs=0.01)


def test_sample_frequencies_match_path_probabilities_chi2():
    net = bic_dag(5, 0, 3, np.linspace(-0.6, 0.6, 5).reshape(5, 1))
    s = spec(1.0)
    vf, _ = core.solve_value_linear(net, s)
    paths = [tuple(p) for p in enumerate_paths(net, "n0_0")]
    probs = np.array([math.exp(core.path_log_prob(net, s, vf, list(p))) for p in paths])
    n = 100_000
    obs = generate_observations(net, s, "n0_0", n, seed=9)
    counts = {p: 0 for p in paths}
    for ob in obs.observations:
        counts[ob.path] += 1
    observed = np.array([counts[p] for p in paths])
    _, pvalue = stats.chisquare(observed, probs * n)
    assert pvalue > 0.001


def test_single_draw_sampler(two_route_net):
    s = spec(-1.0)
    vf, _ = core.solve_value_linear(two_route_net, s)
    rng = np.random.Generator(np.random.Philox(5))
    ob = sample_path(two_route_net, s, vf, "o", rng)
    assert ob.path[0] == "o" and ob.path[-1] == "d"


def test_layered_generation_on_cyclic_network(cycle_net):
    s = spec(1.0)
    obs = generate_observations_via_layered(cycle_net, s, "s0", 500, seed=3)
    assert len(obs) == 500
    cap = cycle_net.n_states - 1  # layered unrolling bounds walk length
    for ob in obs.observations:
        core.validate_path(cycle_net, list(ob.path))  # valid in the base net
        assert len(ob.path) - 1 <= cap
        assert ob.path[0] == "s0" and ob.path[-1] == "d"
    # symmetric loops: both exits roughly equally likely
    frac = np.mean([ob.path[1] == "s1" for ob in obs.observations])
    assert abs(frac - 0.5) < 0.1


def test_zero_observations(two_route_net):
    obs = generate_observations(two_route_net, spec(-1.0), "o", 0, seed=0)
    assert len(obs) == 0


def test_multiple_origins(two_route_net):
    obs = generate_observations(two_route_net, spec(-1.0), ["o", "a"], 1000, seed=7)
    starts = {ob.path[0] for ob in obs.observations}
    assert starts == {"o", "a"}


def test_jsonl_roundtrip(tmp_path, two_route_net):
    s = spec(-1.0)
    obs = generate_observations(two_route_net, s, "o", 50, seed=4)
    p1 = tmp_path / "obs1.jsonl"
    p2 = tmp_path / "obs2.jsonl"
    save_observations(obs, p1)
    obs2 = load_observations(p1, two_route_net)
    save_observations(obs2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert [o.path for o in obs2.observations] == [o.path for o in obs.observations]
    for a, b in zip(obs.observations, obs2.observations):
        np.testing.assert_array_equal(a.attr_sum, b.attr_sum)


def test_load_rejects_broken_path(tmp_path, two_route_net):
    f = tmp_path / "bad.jsonl"
    f.write_text('{"origin": "o", "dest": "d", "path": ["o", "d"]}\n')
    with pytest.raises(InvalidPath):
        load_observations(f, two_route_net)


def test_grouping_by_destination(two_route_net):
    obs = generate_observations(two_route_net, spec(-1.0), "o", 10, seed=0)
    assert list(obs.groups) == ["d"]
    assert sorted(obs.groups["d"]) == list(range(10))
