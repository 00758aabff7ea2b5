"""Flow-based network trimming.

Under a reference parameter the expected number of visits to each state by a
unit of flow injected at the origin solves the sparse linear system
(I - P') F = e_o, where P is the transition matrix of the choice process.
States whose flow falls below a threshold are dropped together with their
incident arcs; the trimmed network provably keeps every surviving state
reachable from the origin, which is asserted on every output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import core
from .errors import (
    NoFeasibleReference,
    OriginTrimmed,
    SingularFlowSystem,
    ValueSolveFailed,
)
from .network import Network, build_network, reachable_from


@dataclass
class FlowVector:
    """Expected visit flow per state for a unit injection at the origin."""

    values: np.ndarray
    origin: object
    beta0: np.ndarray

    def __getitem__(self, idx):
        return self.values[idx]


def choose_reference_beta(net: Network, scale_grid) -> np.ndarray:
    """Scan multipliers of the all-ones vector (smallest magnitude first as
    given) and return the first coefficient vector whose value system solves."""
    if len(scale_grid) == 0:
        raise NoFeasibleReference("empty scale grid")
    k = net.n_attributes
    for mult in scale_grid:
        beta0 = np.full(k, float(mult))
        _, report = core.solve_value_linear(net, core.UtilitySpec(beta0))
        if report.status == core.SOLVED:
            return beta0
    raise NoFeasibleReference(f"no solvable reference on grid {list(scale_grid)!r}")


def flow_vector(net: Network, beta0, origin) -> FlowVector:
    """Solve (I - P') F = e_origin for the expected state-visit flows."""
    beta0 = np.atleast_1d(np.asarray(beta0, dtype=float))
    spec = core.UtilitySpec(beta0)
    vf, report = core.solve_value_linear(net, spec)
    if report.status != core.SOLVED:
        raise ValueSolveFailed(net.destination, f"status {report.status}")
    probs = core.choice_probabilities(net, spec, vf)

    n = net.n_states
    p_mat = sp.csr_matrix(
        (probs, (net.arc_from, net.arc_to)), shape=(n, n)
    )
    e_o = np.zeros(n)
    e_o[net.state_index(origin)] = 1.0
    try:
        flow = spla.spsolve(sp.identity(n, format="csc") - p_mat.T.tocsc(), e_o)
    except RuntimeError as exc:
        raise SingularFlowSystem(str(exc)) from None
    if not np.all(np.isfinite(flow)):
        raise SingularFlowSystem("flow solve produced non-finite values")
    flow = np.where(np.abs(flow) < 1e-14, 0.0, flow)
    if np.any(flow < 0):
        raise SingularFlowSystem("negative flow component")
    return FlowVector(flow, origin, beta0)


def trim(net: Network, flow: FlowVector, epsilon: float, protected=()) -> Network:
    """Drop states with flow below ``epsilon`` (and their arcs).

    The destination and any ``protected`` states (observed-path states) are
    always retained; dead-end survivors created by the cut are pruned.
    Raises OriginTrimmed when the origin loses its route to the destination.
    Every kept state is reachable from the origin on the output (this is the
    connectivity guarantee of flow trimming, asserted here).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    origin = flow.origin
    keep = {
        net.states[i]
        for i in range(net.n_states)
        if flow.values[i] >= epsilon
    }
    keep |= {net.destination, origin}
    keep |= set(protected)

    # restrict to states on some origin-to-destination walk inside the kept
    # set; this prunes dead ends and orphans in one pass
    fwd: dict = {s: [] for s in keep}
    bwd: dict = {s: [] for s in keep}
    for u, v, _vec in net.arcs():
        if u in keep and v in keep:
            fwd[u].append(v)
            bwd[v].append(u)

    def _bfs(start, adj):
        seen = {start}
        frontier = [start]
        while frontier:
            nxt = []
            for s in frontier:
                for t in adj[s]:
                    if t not in seen:
                        seen.add(t)
                        nxt.append(t)
            frontier = nxt
        return seen

    good = _bfs(origin, fwd) & _bfs(net.destination, bwd)
    if origin not in good or net.destination not in good:
        raise OriginTrimmed(
            f"epsilon {epsilon} disconnects {origin!r} from the destination"
        )
    lost = (set(protected) | {origin}) - good
    if lost:
        raise OriginTrimmed(
            f"protected states cut off at epsilon {epsilon}: {sorted(map(str, lost))[:5]}"
        )

    states = [s for s in net.states if s in good]
    arcs = [(u, v, vec) for u, v, vec in net.arcs() if u in good and v in good]
    trimmed = build_network(states, net.destination, arcs, net.attribute_names, net.positions)
    assert reachable_from(trimmed, origin) >= set(trimmed.states)
    return trimmed


def trim_quantile(net: Network, flow: FlowVector, drop_fraction: float,
                  protected=()) -> Network:
    """Trim with the threshold set at the ``drop_fraction`` quantile of
    positive state flows; backs off to smaller fractions when the cut would
    disconnect the origin, down to no trimming at all."""
    if not 0 <= drop_fraction < 1:
        raise ValueError("drop_fraction must lie in [0, 1)")
    positive = flow.values[flow.values > 0]
    if len(positive) == 0:
        raise OriginTrimmed("no positive flow anywhere")
    fraction = drop_fraction
    while True:
        if fraction <= 0:
            epsilon = float(np.min(positive))
        else:
            epsilon = float(np.quantile(positive, fraction))
        try:
            return trim(net, flow, epsilon, protected)
        except OriginTrimmed:
            if fraction <= 0:
                raise
            fraction = 0.0 if fraction < 0.05 else fraction / 2.0


def trim_report(net: Network, trimmed: Network, flow: FlowVector, epsilon: float) -> dict:
    """JSON-ready summary of one trim: kept/dropped counts and threshold."""
    return {
        "epsilon": float(epsilon),
        "states_before": net.n_states,
        "states_after": trimmed.n_states,
        "arcs_before": net.n_arcs,
        "arcs_after": trimmed.n_arcs,
        "dropped_state_fraction": 1.0 - trimmed.n_states / net.n_states,
        "dropped_arc_fraction": 1.0 - trimmed.n_arcs / max(net.n_arcs, 1),
        "origin": flow.origin,
    }
