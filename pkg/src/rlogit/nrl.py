"""Nested recursive logit: state-dependent scale parameters.

The Bellman recursion becomes V_s = mu_s log sum exp((v + V_{s'}) / mu_s);
there is no linear-system shortcut for heterogeneous scales, so value fields
come from damped fixed-point iteration.  The joint problem is not convex in
(beta, V, mu), so no conic build exists here — estimation is quasi-Newton
over (beta, log mu) with an adjoint-based analytic gradient, typically
warm-started from a plain RL estimate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import core, nfxp
from .errors import ValueSolveFailed
from .network import Network

LOG_MU_BOUND = 3.0  # mu is searched inside [e^-3, e^3]


@dataclass
class ScaleField:
    """Positive scale per state; the destination entry is a placeholder."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if not np.all(self.values > 0):
            raise ValueError("scale parameters must be positive")

    @classmethod
    def uniform(cls, net: Network, value: float = 1.0) -> "ScaleField":
        return cls(np.full(net.n_states, float(value)))

    def is_uniform(self, tol: float = 0.0) -> bool:
        return bool(np.max(self.values) - np.min(self.values) <= tol)

    def __getitem__(self, idx):
        return self.values[idx]


@dataclass
class NRLResult(nfxp.EstimationResult):
    """Estimation result carrying the fitted scale field."""

    mu_hat: ScaleField | None = None

    def to_dict(self) -> dict:
        doc = super().to_dict()
        if self.mu_hat is not None:
            if self.mu_hat.is_uniform(1e-12):
                doc["mu_uniform"] = float(self.mu_hat.values[0])
            else:
                doc["mu"] = [float(m) for m in self.mu_hat.values]
        return doc


def nrl_bellman_apply(net: Network, beta, mu: ScaleField, values) -> np.ndarray:
    """One application of the scaled log-sum-exp operator."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    v = net.attrs @ beta
    w = (v + values[net.arc_to]) / mu.values[net.arc_from]
    out = mu.values * core.grouped_logsumexp(net, w)
    out[net.destination_index] = 0.0
    return out


def solve_nrl_value(net: Network, beta, mu: ScaleField, tol: float = 1e-10,
                    max_iter: int = 10_000):
    """Damped value iteration for the scaled recursion.

    Starts undamped; halves the step when the change sequence oscillates
    upward.  Reports Diverged on blow-up or sustained stalls.
    """
    values = np.zeros(net.n_states)
    damp = 1.0
    prev_change = np.inf
    history: list[float] = []
    window = 200
    for it in range(1, max_iter + 1):
        target = nrl_bellman_apply(net, beta, mu, values)
        if not np.all(np.isfinite(target)) or np.max(np.abs(target)) > core.DIVERGENCE_BOUND:
            return core.ValueField(target, core.DIVERGED), core.SolveReport(core.DIVERGED, it)
        new = values + damp * (target - values)
        change = float(np.max(np.abs(new - values)))
        values = new
        if change <= tol:
            return (
                core.ValueField(values, core.SOLVED),
                core.SolveReport(core.SOLVED, it, change),
            )
        if change > prev_change and damp > 0.5:
            damp = 0.5
        prev_change = change
        history.append(change)
        if it > window and change > 1e3 * tol and change >= 0.99 * history[-window]:
            return core.ValueField(values, core.DIVERGED), core.SolveReport(core.DIVERGED, it)
    return (
        core.ValueField(values, core.MAX_ITERATIONS),
        core.SolveReport(core.MAX_ITERATIONS, max_iter),
    )


def check_mu_monotone(net: Network, mu: ScaleField):
    """Forward monotonicity: mu may never increase along an arc.

    Returns (ok, violating (from, to) state pairs).  Within any directed
    cycle the condition forces mu to be constant.
    """
    violations = []
    for a in range(net.n_arcs):
        i, j = int(net.arc_from[a]), int(net.arc_to[a])
        if j == net.destination_index:
            continue
        if mu.values[i] < mu.values[j]:
            violations.append((net.states[i], net.states[j]))
    return len(violations) == 0, violations


def nrl_objective_coefficients(obs, mu: ScaleField) -> np.ndarray:
    """Net coefficient of each V_s in the path log-likelihoods.

    Every visit of state s as a current state contributes -1/mu_s; every
    entry into s from predecessor p contributes +1/mu_p.  Under forward
    monotonicity all coefficients are <= 0.
    """
    net = obs.network
    coef = np.zeros(net.n_states)
    for ob in obs.observations:
        idx = [net.state_index(s) for s in ob.path]
        for cur, nxt in zip(idx[:-1], idx[1:]):
            coef[cur] -= 1.0 / mu.values[cur]
            coef[nxt] += 1.0 / mu.values[cur]
    coef[net.destination_index] = 0.0  # V_d is pinned, not a variable
    return coef


def _value_or_raise(net, beta, mu, tol=1e-10):
    vf, report = solve_nrl_value(net, beta, mu, tol=tol)
    if report.status != core.SOLVED:
        raise ValueSolveFailed(net.destination, f"status {report.status}")
    return vf


def nrl_log_likelihood(net: Network, beta, mu: ScaleField, obs,
                       value_tol: float = 1e-10) -> float:
    """Sum over observed transitions of (v + V_next - V_cur) / mu_cur.

    ``value_tol`` controls the inner fixed-point solve; finite-difference
    consumers should tighten it below the differencing step squared.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    vf = _value_or_raise(net, beta, mu, tol=value_tol)
    v = net.attrs @ beta
    total = 0.0
    for ob in obs.observations:
        idx = [net.state_index(s) for s in ob.path]
        for cur, nxt in zip(idx[:-1], idx[1:]):
            a = net.arc_lookup[(cur, nxt)]
            total += (v[a] + vf.values[nxt] - vf.values[cur]) / mu.values[cur]
    return total


def nrl_loglik_and_gradient(net: Network, beta, mu: ScaleField, obs):
    """(L, dL/dbeta, dL/dlog mu_s per state) with the adjoint trick.

    The value field's sensitivity enters through one transposed linear solve
    (I - P)' lambda = c, where c collects the V-coefficients of the observed
    paths and P is the choice-probability matrix at the fixed point.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    k = len(beta)
    vf = _value_or_raise(net, beta, mu)
    values = vf.values
    v = net.attrs @ beta
    w = v + values[net.arc_to]
    probs = np.exp((w - values[net.arc_from]) / mu.values[net.arc_from])

    loglik = 0.0
    dbeta = np.zeros(k)
    dlogmu = np.zeros(net.n_states)
    coef = np.zeros(net.n_states)
    for ob in obs.observations:
        idx = [net.state_index(s) for s in ob.path]
        for cur, nxt in zip(idx[:-1], idx[1:]):
            a = net.arc_lookup[(cur, nxt)]
            step = (w[a] - values[cur]) / mu.values[cur]
            loglik += step
            dbeta += net.attrs[a] / mu.values[cur]
            dlogmu[cur] -= step
            coef[cur] -= 1.0 / mu.values[cur]
            coef[nxt] += 1.0 / mu.values[cur]

    # adjoint solve on the non-destination block
    d = net.destination_index
    rows = [i for i in range(net.n_states) if i != d]
    row_of = np.full(net.n_states, -1, dtype=int)
    row_of[rows] = np.arange(len(rows))
    interior = net.arc_to != d
    p_red = sp.csr_matrix(
        (
            probs[interior],
            (row_of[net.arc_from[interior]], row_of[net.arc_to[interior]]),
        ),
        shape=(len(rows), len(rows)),
    )
    lam = spla.spsolve(
        (sp.identity(len(rows), format="csc") - p_red.T.tocsc()), coef[rows]
    )

    # dT_s/dbeta_k and dT_s/dlog mu_s at the fixed point
    dt_beta = np.zeros((net.n_states, k))
    np.add.at(dt_beta, net.arc_from, probs[:, None] * net.attrs)
    pw = np.zeros(net.n_states)
    np.add.at(pw, net.arc_from, probs * w)
    dt_logmu = values - pw

    dbeta += dt_beta[rows].T @ lam
    dlogmu[rows] += lam * dt_logmu[rows]
    dlogmu[d] = 0.0
    return loglik, dbeta, dlogmu


def estimate_nrl_nfxp(net: Network, obs, beta_init=None, mu_init: float = 1.0,
                      opts: nfxp.EstimationOptions | None = None,
                      mu_mode: str = "shared") -> NRLResult:
    """Quasi-Newton estimation over (beta, log mu).

    ``mu_mode`` selects the scale parameterization: "shared" (one mu for all
    states), "per_state", or "fixed" (mu pinned at ``mu_init``, beta only —
    which reduces exactly to the plain RL estimator).
    """
    if mu_mode not in ("shared", "per_state", "fixed"):
        raise ValueError(f"unknown mu_mode {mu_mode!r}")
    opts = opts or nfxp.EstimationOptions()
    k = net.n_attributes
    n = net.n_states
    beta0 = np.asarray(beta_init, dtype=float) if beta_init is not None else nfxp.default_beta_init(k)
    n_mu = {"shared": 1, "per_state": n, "fixed": 0}[mu_mode]
    x0 = np.concatenate([beta0, np.full(n_mu, np.log(mu_init))])
    n_obs = max(len(obs), 1)
    start = time.perf_counter()

    def unpack(x):
        beta = x[:k]
        if mu_mode == "fixed":
            mu = ScaleField.uniform(net, mu_init)
        elif mu_mode == "shared":
            mu = ScaleField.uniform(net, float(np.exp(x[k])))
        else:
            mu = ScaleField(np.exp(x[k:]))
        return beta, mu

    def project(x):
        out = x.copy()
        out[k:] = np.clip(out[k:], -LOG_MU_BOUND, LOG_MU_BOUND)
        return out

    def evaluate(x):
        beta, mu = unpack(x)
        loglik, dbeta, dlogmu = nrl_loglik_and_gradient(net, beta, mu, obs)
        if mu_mode == "fixed":
            return loglik, dbeta
        if mu_mode == "shared":
            return loglik, np.concatenate([dbeta, [float(dlogmu.sum())]])
        return loglik, np.concatenate([dbeta, dlogmu])

    x, loglik, grad_norm, status, iters, trace = nfxp.bfgs_maximize(
        evaluate, x0, opts, project=project if n_mu else None
    )
    beta_hat, mu_hat = unpack(x)
    return NRLResult(
        beta_hat=beta_hat,
        loglik=loglik,
        loglik_per_obs=loglik / n_obs,
        status=status,
        iterations=iters,
        gradient_norm=grad_norm,
        wall_time=time.perf_counter() - start,
        trace=trace,
        mu_hat=mu_hat,
    )
