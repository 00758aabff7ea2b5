"""Deterministic utilities, the log-sum-exp Bellman operator, value-function
solving, choice probabilities and path/dataset log-likelihood.

The value function V assigns each state the expected maximum utility of
reaching the destination, with V(destination) = 0.  Two solvers are provided:
an exp-space linear-system solve (exact for unit scale) and plain value
iteration.  Both report failure explicitly instead of propagating NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import logsumexp

from .errors import (
    EmptySuccessorSet,
    InvalidPath,
    UnsolvedValueField,
    ValueSolveFailed,
)
from .network import Network

SOLVED = "Solved"
DIVERGED = "Diverged"
SINGULAR = "SingularOrNonpositive"
MAX_ITERATIONS = "MaxIterations"

LINEAR_RESIDUAL_TOL = 1e-10
DIVERGENCE_BOUND = 1e10

# exponent cap: anything above this in exp-space is treated as a failed solve
_EXP_CAP = 500.0


@dataclass(frozen=True)
class UtilitySpec:
    """Linear-in-attributes utility with a positive scale.

    ``beta`` has one coefficient per attribute column; ``mu`` is fixed to 1
    for standard estimation and only varies in the nested extension.
    """

    beta: np.ndarray
    mu: float = 1.0

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        object.__setattr__(self, "beta", beta)


@dataclass
class ValueField:
    """Vector of state values for one destination; values[destination] = 0."""

    values: np.ndarray
    status: str = SOLVED

    def __getitem__(self, idx):
        return self.values[idx]


@dataclass
class SolveReport:
    status: str
    iterations: int = 0
    residual: float = np.nan


def arc_utilities(net: Network, spec: UtilitySpec) -> np.ndarray:
    """Deterministic utility of every arc: attrs @ beta."""
    return net.attrs @ spec.beta


def utility(net: Network, spec: UtilitySpec, arc) -> float:
    """Utility of one arc, given as an arc index or a (from, to) pair."""
    if isinstance(arc, tuple):
        arc = net.arc_id(*arc)
    return float(net.attrs[arc] @ spec.beta)


def _check_successors(net: Network):
    d = net.destination_index
    for i in range(net.n_states):
        if i != d and len(net.succ_arcs[i]) == 0:
            raise EmptySuccessorSet(
                f"non-destination state {net.states[i]!r} has no successors"
            )


def _segments(net: Network):
    """Arcs grouped contiguously by from-state: (order, starts, owners,
    segment ids).  Cached on the network object."""
    cached = getattr(net, "_segment_cache", None)
    if cached is not None:
        return cached
    order = np.argsort(net.arc_from, kind="stable")
    f = net.arc_from[order]
    if len(f) == 0:
        cached = (order, np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0, dtype=int))
    else:
        starts = np.flatnonzero(np.r_[True, f[1:] != f[:-1]])
        owners = f[starts]
        seg_id = np.searchsorted(starts, np.arange(len(f)), side="right") - 1
        cached = (order, starts, owners, seg_id)
    object.__setattr__(net, "_segment_cache", cached)
    return cached


def grouped_logsumexp(net: Network, per_arc: np.ndarray) -> np.ndarray:
    """Per-state log-sum-exp of an arc-indexed quantity over each state's
    successor arcs; states without successors get 0."""
    order, starts, owners, seg_id = _segments(net)
    out = np.zeros(net.n_states)
    if len(order) == 0:
        return out
    w = per_arc[order]
    mx = np.maximum.reduceat(w, starts)
    sums = np.add.reduceat(np.exp(w - mx[seg_id]), starts)
    out[owners] = mx + np.log(sums)
    return out


def bellman_apply(net: Network, spec: UtilitySpec, values: np.ndarray) -> np.ndarray:
    """One application of the log-sum-exp Bellman operator.

    (T[V])_s = mu * log sum_{s' in A(s)} exp((v(s'|s) + V_{s'}) / mu), with
    the destination pinned at 0.  Overflow-safe via max-shifting.
    """
    _check_successors(net)
    v = arc_utilities(net, spec)
    w = (v + values[net.arc_to]) / spec.mu
    out = spec.mu * grouped_logsumexp(net, w)
    out[net.destination_index] = 0.0
    return out


def bellman_residual(net: Network, spec: UtilitySpec, values: np.ndarray) -> float:
    """Sup-norm of V - T[V]."""
    return float(np.max(np.abs(values - bellman_apply(net, spec, values))))


def _exp_space_system(net: Network, spec: UtilitySpec):
    """Sparse (I - M, b) with M_{s,s'} = e^{v(s'|s)} for non-destination
    successors and b_s accumulating destination arcs, on the non-destination
    block.  Returns None when any exponential overflows."""
    v = arc_utilities(net, spec)
    if np.any(v > _EXP_CAP):
        return None
    ev = np.exp(v)
    d = net.destination_index
    n = net.n_states
    # map state index -> row in the reduced system (destination dropped)
    row_of = np.full(n, -1, dtype=int)
    rows = [i for i in range(n) if i != d]
    for r, i in enumerate(rows):
        row_of[i] = r
    m = len(rows)
    b = np.zeros(m)
    data, ri, ci = [], [], []
    for a in range(net.n_arcs):
        i, j = int(net.arc_from[a]), int(net.arc_to[a])
        if j == d:
            b[row_of[i]] += ev[a]
        else:
            data.append(ev[a])
            ri.append(row_of[i])
            ci.append(row_of[j])
    M = sp.csc_matrix((data, (ri, ci)), shape=(m, m))
    return M, b, rows


def solve_value_linear(net: Network, spec: UtilitySpec) -> tuple[ValueField, SolveReport]:
    """Solve the Bellman equalities via the exp-space linear system.

    Valid for unit scale: substituting z = e^V turns the fixed point into
    (I - M) z = b.  Returns V = log z when the system is nonsingular and z is
    strictly positive; any failure is mapped to SingularOrNonpositive.
    """
    if spec.mu != 1.0:
        raise ValueError("linear value solve requires mu = 1")
    _check_successors(net)
    sys = _exp_space_system(net, spec)
    vf = ValueField(np.full(net.n_states, np.nan), status=SINGULAR)
    if sys is None:
        return vf, SolveReport(SINGULAR, residual=np.inf)
    M, b, rows = sys
    m = M.shape[0]
    try:
        if m <= 200:
            z = np.linalg.solve(np.eye(m) - M.toarray(), b)
        else:
            z = spla.spsolve(sp.identity(m, format="csc") - M, b)
    except (RuntimeError, np.linalg.LinAlgError):
        return vf, SolveReport(SINGULAR)
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        return vf, SolveReport(SINGULAR)
    values = np.zeros(net.n_states)
    values[rows] = np.log(z)
    residual = bellman_residual(net, spec, values)
    if not residual <= LINEAR_RESIDUAL_TOL:
        return vf, SolveReport(SINGULAR, residual=residual)
    return ValueField(values, SOLVED), SolveReport(SOLVED, residual=residual)


def solve_value_iteration(
    net: Network,
    spec: UtilitySpec,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> tuple[ValueField, SolveReport]:
    """Iterate V <- T[V] from V = 0 until the sup-norm change drops below
    ``tol``; detects divergence when values exceed the divergence bound."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    _check_successors(net)
    values = np.zeros(net.n_states)
    history: list[float] = []
    window = 200
    for it in range(1, max_iter + 1):
        new = bellman_apply(net, spec, values)
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > DIVERGENCE_BOUND:
            return ValueField(new, DIVERGED), SolveReport(DIVERGED, it)
        change = float(np.max(np.abs(new - values)))
        values = new
        if change <= tol:
            res = bellman_residual(net, spec, values)
            return ValueField(values, SOLVED), SolveReport(SOLVED, it, res)
        history.append(change)
        # in log space divergence shows up as a non-shrinking step size, not
        # a fast blow-up; flag sustained stalls well above the tolerance
        if it > window and change > 1e3 * tol and change >= 0.99 * history[-window]:
            return ValueField(values, DIVERGED), SolveReport(DIVERGED, it)
    return ValueField(values, MAX_ITERATIONS), SolveReport(MAX_ITERATIONS, max_iter)


def choice_probabilities(net: Network, spec: UtilitySpec, vf: ValueField) -> np.ndarray:
    """Transition probability per arc: P(s'|s) = softmax over A(s) of
    (v + V_{s'}) / mu.  Indexed like ``net.arcs``; each state's row sums
    to one."""
    if vf.status != SOLVED:
        raise UnsolvedValueField(f"value field status is {vf.status}")
    v = arc_utilities(net, spec)
    p = np.zeros(net.n_arcs)
    d = net.destination_index
    for i in range(net.n_states):
        if i == d:
            continue
        a = net.succ_arcs[i]
        if len(a) == 0:
            continue
        w = (v[a] + vf.values[net.arc_to[a]]) / spec.mu
        w -= w.max()
        e = np.exp(w)
        p[a] = e / e.sum()
    return p


def validate_path(net: Network, path) -> list[int]:
    """Check adjacency and terminal state; return the arc-index sequence."""
    if len(path) < 2:
        raise InvalidPath("path must contain at least one transition")
    if path[-1] != net.destination:
        raise InvalidPath(f"path must end at destination {net.destination!r}")
    arcs = []
    for u, w in zip(path[:-1], path[1:]):
        try:
            arcs.append(net.arc_id(u, w))
        except Exception:
            raise InvalidPath(f"no arc {u!r} -> {w!r}") from None
    return arcs


def path_attr_sum(net: Network, path) -> np.ndarray:
    """Sum of arc attribute vectors along a path."""
    arcs = validate_path(net, path)
    return net.attrs[arcs].sum(axis=0)


def path_log_prob(net: Network, spec: UtilitySpec, vf: ValueField, path) -> float:
    """Log-probability of an observed path: (v(sigma) - V(origin)) / mu."""
    if vf.status != SOLVED:
        raise UnsolvedValueField(f"value field status is {vf.status}")
    arcs = validate_path(net, path)
    v_sigma = float(arc_utilities(net, spec)[arcs].sum())
    origin = net.state_index(path[0])
    return (v_sigma - float(vf.values[origin])) / spec.mu


def log_likelihood(net_by_group, spec: UtilitySpec, observations) -> float:
    """Dataset log-likelihood, summing (v(sigma_n) - V(origin_n)) / mu over
    observations grouped by destination.

    ``net_by_group`` maps group keys to networks; ``observations`` is an
    ObservationSet.  Raises ValueSolveFailed when a group's value system has
    no solution.
    """
    total = 0.0
    for group, idxs in observations.groups.items():
        net = net_by_group[group]
        vf, report = solve_value_linear(net, spec)
        if report.status != SOLVED:
            raise ValueSolveFailed(group, f"status {report.status}")
        for n in idxs:
            ob = observations.observations[n]
            v_sigma = float(ob.attr_sum @ spec.beta)
            total += (v_sigma - float(vf.values[net.state_index(ob.origin)])) / spec.mu
    return total
