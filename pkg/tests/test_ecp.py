"""ECP builder: program shape, exactness, recovery, monotone tightening."""

import numpy as np
import pytest

from rlogit import core
from rlogit.conic import builder
from rlogit.conic.solver import OPTIMAL, PRIMAL_INFEASIBLE, solve
from rlogit.errors import (
    BindingViolation,
    NotSuperSolution,
    UnreachableStateWithoutFix,
)
from rlogit.generators import random_geometric_network
from rlogit.network import build_network, ensure_connectivity
from rlogit.simulate import ObservationSet, generate_observations, make_observation

from conftest import make_infeasible_net

BETA_TRUE = np.array([-4.0, -0.1, -0.05, -0.3])


def _one_arc_instance():
    net = build_network(["s0", "d"], "d", [("s0", "d", [2.0])], ["cost"])
    obs = ObservationSet(net, [make_observation(net, ["s0", "d"])])
    return net, obs


def test_smallest_program_shape():
    net, obs = _one_arc_instance()
    groups = builder.group_observations(obs)
    prog, layout = builder.build_ecp(net, groups)
    # variables: 1 beta, shared one, u_{s0}, one w, one r
    assert prog.n_vars == 5
    assert prog.n_cones == 1
    assert layout.total == 5
    gl = layout.groups["d"]
    assert set(gl.u) == {"s0"}
    sol = solve(prog)
    assert sol.status == OPTIMAL
    # single path has probability one: objective 0, u_{s0} = v
    assert sol.obj_val == pytest.approx(0.0, abs=1e-6)


def test_grouping_weights_match_ungrouped_objective():
    net = build_network(
        ["o", "a", "b", "d"],
        "d",
        [("o", "a", [1.0]), ("o", "b", [2.0]), ("a", "d", [1.0]), ("b", "d", [0.5])],
        ["cost"],
    )
    obs = ObservationSet(
        net,
        [
            make_observation(net, ["o", "a", "d"]),
            make_observation(net, ["o", "a", "d"]),
            make_observation(net, ["o", "b", "d"]),
        ],
    )
    groups = builder.group_observations(obs)
    g = groups["d"]
    assert g.origin_counts == {"o": 3}
    assert g.n_obs == 3
    # grouped objective coefficients equal the per-observation sum at any
    # random (beta, u): check by direct evaluation
    prog, layout = builder.build_ecp(net, groups)
    rng = np.random.default_rng(0)
    point = rng.normal(size=prog.n_vars)
    grouped_val = float(prog.objective @ point)
    beta = point[: layout.n_beta]
    u = {s: point[i] for s, i in layout.groups["d"].u.items()}
    ungrouped = sum(
        float(ob.attr_sum @ beta) - u[ob.origin] for ob in obs.observations
    )
    assert grouped_val == pytest.approx(ungrouped, abs=1e-10)


def test_cone_count_scaling():
    net = random_geometric_network(20, 0.35, seed=1)
    obs = generate_observations(net, core.UtilitySpec(BETA_TRUE), "o", 100, seed=0)
    groups = builder.group_observations(obs)
    prog, layout = builder.build_ecp(net, groups)
    assert prog.n_cones == net.n_arcs  # one cone per (group, arc); one group
    expected_vars = net.n_attributes + 1 + (net.n_states - 1) + 2 * net.n_arcs
    assert prog.n_vars == expected_vars


def test_unreachable_state_is_hard_error(partial_net):
    obs = ObservationSet(
        partial_net, [make_observation(partial_net, ["o", "s1", "d"])]
    )
    groups = builder.group_observations(obs)
    with pytest.raises(UnreachableStateWithoutFix):
        builder.build_ecp(partial_net, groups)
    # after the connectivity fix the build succeeds
    fixed = ensure_connectivity(partial_net, "o", penalty=50.0)
    obs2 = ObservationSet(fixed, [make_observation(fixed, ["o", "s1", "d"])])
    prog, _ = builder.build_ecp(fixed, builder.group_observations(obs2))
    assert prog.n_cones == fixed.n_arcs


def test_recover_binds_and_matches_likelihood():
    net = random_geometric_network(20, 0.35, seed=2)
    obs = generate_observations(net, core.UtilitySpec(BETA_TRUE), "o", 500, seed=2)
    groups = builder.group_observations(obs)
    prog, layout = builder.build_ecp(net, groups)
    sol = solve(prog)
    assert sol.status == OPTIMAL
    beta_hat, values, cert = builder.recover_solution(prog, sol, layout, net)
    assert max(float(np.max(np.abs(r))) for r in cert.values()) <= 1e-6
    # objective at (beta, binding u) is algebraically the likelihood formula
    # evaluated with V = u
    ll_at_u = sum(
        float(ob.attr_sum @ beta_hat) - values["d"][net.state_index(ob.origin)]
        for ob in obs.observations
    )
    assert sol.obj_val == pytest.approx(ll_at_u, abs=1e-8)
    # and matches the exactly re-solved likelihood to solver accuracy
    ll = core.log_likelihood(obs.net_by_group(), core.UtilitySpec(beta_hat), obs)
    assert abs(sol.obj_val - ll) / len(obs) <= 1e-6
    # recovered u equals the solved value field
    vf, _ = core.solve_value_linear(net, core.UtilitySpec(beta_hat))
    np.testing.assert_allclose(values["d"].values, vf.values, atol=1e-5)


def test_perturbed_solution_raises_binding_violation():
    net = random_geometric_network(20, 0.35, seed=2)
    obs = generate_observations(net, core.UtilitySpec(BETA_TRUE), "o", 100, seed=2)
    groups = builder.group_observations(obs)
    prog, layout = builder.build_ecp(net, groups)
    sol = solve(prog)
    # add slack at a non-origin state's value variable
    gl = layout.groups["d"]
    state = next(s for s in gl.u if s != "o")
    sol.x[gl.u[state]] += 0.1
    with pytest.raises(BindingViolation):
        builder.recover_solution(prog, sol, layout, net)


def test_infeasible_family_certified():
    for t in (0.0, 0.5, 1.0):
        net = make_infeasible_net(t)
        obs = ObservationSet(net, [make_observation(net, ["s0", "s1", "d"])])
        prog, _ = builder.build_ecp(net, builder.group_observations(obs))
        sol = solve(prog)
        assert sol.status == PRIMAL_INFEASIBLE


def test_monotone_tighten_descends_to_fixed_point(cycle_net):
    spec = core.UtilitySpec(np.array([1.0]))
    vf, _ = core.solve_value_linear(cycle_net, spec)
    perturbed = vf.values + np.where(
        np.arange(cycle_net.n_states) == cycle_net.destination_index, 0.0, 1.0
    )
    # T[v + 1] <= v + 1 since T adds at most log-sum weights < e * mass
    tightened = builder.monotone_tighten(cycle_net, spec, perturbed)
    np.testing.assert_allclose(tightened.values, vf.values, atol=1e-8)
    # idempotent at the fixed point
    again = builder.monotone_tighten(cycle_net, spec, vf.values)
    np.testing.assert_allclose(again.values, vf.values, atol=1e-9)


def test_monotone_tighten_rejects_subsolution(cycle_net):
    spec = core.UtilitySpec(np.array([1.0]))
    vf, _ = core.solve_value_linear(cycle_net, spec)
    with pytest.raises(NotSuperSolution):
        builder.monotone_tighten(cycle_net, spec, vf.values - 0.5)


def test_monotone_sequence_property(two_route_net):
    spec = core.UtilitySpec(np.array([-1.0]))
    vf, _ = core.solve_value_linear(two_route_net, spec)
    v = vf.values + 2.0
    v[two_route_net.destination_index] = 0.0
    prev = v.copy()
    for _ in range(50):
        nxt = core.bellman_apply(two_route_net, spec, prev)
        assert np.all(nxt <= prev + 1e-12)
        prev = nxt


def test_estimate_ecp_matches_nfxp():
    from rlogit import nfxp

    net = random_geometric_network(20, 0.35, seed=4)
    obs = generate_observations(net, core.UtilitySpec(BETA_TRUE), "o", 1000, seed=4)
    r_nfxp = nfxp.estimate_nfxp(obs.net_by_group(), obs)
    r_ecp = builder.estimate_ecp(obs.net_by_group(), obs)
    assert r_nfxp.status == "Converged" and r_ecp.status == OPTIMAL
    assert abs(r_nfxp.loglik_per_obs - r_ecp.loglik_per_obs) <= 1e-4
    assert np.max(np.abs(r_nfxp.beta_hat - r_ecp.beta_hat)) <= 1e-3


def test_export_problem_formats(tmp_path):
    net, obs = _one_arc_instance()
    prog, layout = builder.build_ecp(net, builder.group_observations(obs))
    builder.export_problem(prog, tmp_path / "p.json", "json")
    builder.export_problem(prog, tmp_path / "p.cbf", "cbf")
    assert (tmp_path / "p.json").exists() and (tmp_path / "p.cbf").exists()
    with pytest.raises(ValueError):
        builder.export_problem(prog, tmp_path / "p.x", "mps")
