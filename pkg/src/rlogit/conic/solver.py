"""Primal-dual interior-point solver for exponential-cone programs.

The program is converted to the standard form

    min c'x  s.t.  A x = b,  G x + s = h,  s in K,

with K a product of a nonnegative orthant (one coordinate per linear
inequality) and three-dimensional exponential cones, and solved on the
homogeneous self-dual embedding so that infeasibility comes out as a
certificate rather than a crash.  Search directions use the standard
3-self-concordant barrier for the exponential cone,

    F(x, y, z) = -log(y log(z/y) - x) - log y - log z,

with a predictor-corrector sigma heuristic, a sparse regularized LDL-style
factorization of the KKT system (via SuperLU) and iterative refinement.
Solves are single-threaded and bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .program import ConicProgram, dual_exp_cone_contains, exp_cone_contains

OPTIMAL = "Optimal"
PRIMAL_INFEASIBLE = "PrimalInfeasible"
DUAL_INFEASIBLE = "DualInfeasible"
MAX_ITERS = "MaxIters"
NUMERICAL_FAILURE = "NumericalFailure"

# central point of the exponential cone: the unique interior s with
# -grad F(s) = s, used to initialize both primal and dual cone variables
_EXP_CENTRAL = np.array([-1.051383945322714, 0.556409619469370, 1.258967884768947])


@dataclass
class SolverOptions:
    """Interior-point controls; defaults target 1e-8 accuracy."""

    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iters: int = 200
    frac_to_boundary: float = 0.99
    regularization: float = 1e-9
    min_step: float = 1e-9
    # extra iterations after tolerances are first met, run while the
    # complementarity keeps shrinking; the best iterate is returned.  This
    # tightens downstream certificates (e.g. Bellman binding residuals) at
    # negligible cost.
    polish_iters: int = 25

    def __post_init__(self):
        if not (self.tol_gap > 0 and self.tol_feas > 0):
            raise ValueError("tolerances must be positive")
        if self.polish_iters < 0:
            raise ValueError("polish_iters must be non-negative")


@dataclass
class Solution:
    """Solver outcome: primal/dual points (scaled by tau for Optimal, raw
    certificate rays otherwise), residuals and the iteration trace."""

    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    obj_val: float
    gap: float
    pres: float
    dres: float
    iterations: int
    trace: list = field(default_factory=list)


# --- exponential-cone barrier calculus (vectorized over cones) -------------


def _exp_parts(e):
    x, y, z = e[:, 0], e[:, 1], e[:, 2]
    big_l = np.log(z / y)
    psi = y * big_l - x
    return x, y, z, big_l, psi


def _exp_grad(e):
    _x, y, z, big_l, psi = _exp_parts(e)
    g = np.empty_like(e)
    g[:, 0] = 1.0 / psi
    g[:, 1] = -(big_l - 1.0) / psi - 1.0 / y
    g[:, 2] = -y / (z * psi) - 1.0 / z
    return g


def _exp_hess(e):
    _x, y, z, big_l, psi = _exp_parts(e)
    gpsi = np.stack([-np.ones_like(y), big_l - 1.0, y / z], axis=1)
    h = gpsi[:, :, None] * gpsi[:, None, :] / (psi ** 2)[:, None, None]
    inv_psi = 1.0 / psi
    h[:, 1, 1] += inv_psi / y + 1.0 / y ** 2
    h[:, 1, 2] += -inv_psi / z
    h[:, 2, 1] += -inv_psi / z
    h[:, 2, 2] += inv_psi * y / z ** 2 + 1.0 / z ** 2
    return h


def _exp_primal_interior(e, floor=None) -> bool:
    y, z = e[:, 1], e[:, 2]
    if np.any(y <= 0) or np.any(z <= 0):
        return False
    psi = y * np.log(z / y) - e[:, 0]
    if floor is not None:
        return bool(np.all(psi > floor))
    return bool(np.all(psi > 0))


def _exp_primal_margin(e):
    """Per-cone distance-to-boundary quantity psi (positive inside)."""
    y, z = e[:, 1], e[:, 2]
    with np.errstate(all="ignore"):
        return y * np.log(z / y) - e[:, 0]


def _exp_dual_interior(e, floor=None) -> bool:
    u, v, w = e[:, 0], e[:, 1], e[:, 2]
    if np.any(u >= 0) or np.any(w <= 0):
        return False
    margin = np.log(w) + 1.0 - np.log(-u) - v / u
    if floor is not None:
        return bool(np.all(margin > floor))
    return bool(np.all(margin > 0))


def _exp_dual_margin(e):
    u, v, w = e[:, 0], e[:, 1], e[:, 2]
    with np.errstate(all="ignore"):
        return np.log(w) + 1.0 - np.log(-u) - v / u


def exp_cone_project_check(triple, slack_tol=1e-7):
    """Alias for membership of a single triple (see program module)."""
    return exp_cone_contains(triple, slack_tol)


# --- standard-form conversion ----------------------------------------------


def _standard_form(prog: ConicProgram):
    n = prog.n_vars
    c = -prog.objective if prog.maximize else prog.objective.copy()
    a_mat = prog.a_eq.tocsr()
    b = prog.b_eq.copy()
    l = prog.n_ineq
    ne = prog.n_cones

    rows, cols, data = [], [], []
    ineq = prog.a_ineq.tocoo()
    rows.extend(ineq.row.tolist())
    cols.extend(ineq.col.tolist())
    data.extend(ineq.data.tolist())
    r = l
    for (ix, iy, iz) in prog.exp_cones:
        for var in (ix, iy, iz):
            rows.append(r)
            cols.append(var)
            data.append(-1.0)
            r += 1
    g_mat = sp.csr_matrix((data, (rows, cols)), shape=(l + 3 * ne, n))
    h = np.concatenate([prog.b_ineq, np.zeros(3 * ne)])
    return c, a_mat, b, g_mat, h, l, ne


class _Cone:
    """Product cone R+^l x Exp^ne acting on stacked slack vectors."""

    def __init__(self, l, ne):
        self.l = l
        self.ne = ne
        self.dim = l + 3 * ne
        self.nu = l + 3 * ne  # barrier parameter: 1 per orthant coord, 3 per cone

    def split(self, v):
        return v[: self.l], v[self.l:].reshape(self.ne, 3)

    def init_point(self):
        s = np.empty(self.dim)
        s[: self.l] = 1.0
        if self.ne:
            s[self.l:] = np.tile(_EXP_CENTRAL, self.ne)
        return s

    def grad(self, s):
        lin, e = self.split(s)
        g = np.empty(self.dim)
        g[: self.l] = -1.0 / lin
        if self.ne:
            g[self.l:] = _exp_grad(e).ravel()
        return g

    def primal_interior(self, s, floor=None) -> bool:
        lin, e = self.split(s)
        if np.any(lin <= 0):
            return False
        return self.ne == 0 or _exp_primal_interior(e, floor)

    def dual_interior(self, z, floor=None) -> bool:
        lin, e = self.split(z)
        if np.any(lin <= 0):
            return False
        return self.ne == 0 or _exp_dual_interior(e, floor)

    def margins(self, s, z):
        """Smallest primal/dual boundary margins over the exp cones."""
        if self.ne == 0:
            return np.inf, np.inf
        _, es = self.split(s)
        _, ez = self.split(z)
        return float(np.min(_exp_primal_margin(es))), float(np.min(_exp_dual_margin(ez)))

    def scaling_inverse(self, s, z, mu):
        """Sparse W = H_sc^{-1} where H_sc is diag(z/s) on the orthant and
        mu * hess F(s) on each exponential cone."""
        lin_s, e = self.split(s)
        lin_z, _ = self.split(z)
        rows, cols, data = [], [], []
        idx = np.arange(self.l)
        rows.extend(idx.tolist())
        cols.extend(idx.tolist())
        data.extend((lin_s / lin_z).tolist())
        if self.ne:
            hess = _exp_hess(e)
            try:
                blocks = np.linalg.inv(hess) / mu
            except np.linalg.LinAlgError:
                # near-boundary iterate: stabilize with a tiny diagonal shift
                jitter = 1e-13 * np.trace(hess, axis1=1, axis2=2)
                hess = hess + jitter[:, None, None] * np.eye(3)
                blocks = np.linalg.inv(hess) / mu
            base = self.l + 3 * np.arange(self.ne)
            for a in range(3):
                for b in range(3):
                    rows.extend((base + a).tolist())
                    cols.extend((base + b).tolist())
                    data.extend(blocks[:, a, b].tolist())
        return sp.csr_matrix((data, (rows, cols)), shape=(self.dim, self.dim))

    def complementarity_target(self, s, z, sigma, mu):
        """psi with dz + H_sc ds = -psi linearizing s o z -> sigma mu e."""
        lin_s, _ = self.split(s)
        psi = np.empty(self.dim)
        lin_z = z[: self.l]
        psi[: self.l] = lin_z - sigma * mu / lin_s
        if self.ne:
            psi[self.l:] = z[self.l:] + sigma * mu * self.grad(s)[self.l:]
        return psi

    def max_linear_step(self, v, dv):
        """Closed-form boundary step for the orthant coordinates."""
        lin, dlin = v[: self.l], dv[: self.l]
        neg = dlin < 0
        if not np.any(neg):
            return np.inf
        return float(np.min(-lin[neg] / dlin[neg]))


def _step_length(cone, s, ds, z, dz, tau, dtau, kappa, dkappa, ftb, min_step):
    alpha = 1.0 / ftb
    for val, dval in ((tau, dtau), (kappa, dkappa)):
        if dval < 0:
            alpha = min(alpha, -val / dval)
    alpha = min(alpha, cone.max_linear_step(s, ds), cone.max_linear_step(z, dz))
    alpha = min(1.0, ftb * alpha)
    # fraction-to-boundary for the exp cones: shrink the boundary margin by
    # at most the same factor the orthant coordinates may shrink
    pm, dm = cone.margins(s, z)
    while alpha > min_step:
        p_floor = (1.0 - ftb) * pm * alpha if np.isfinite(pm) else None
        d_floor = (1.0 - ftb) * dm * alpha if np.isfinite(dm) else None
        if cone.primal_interior(s + alpha * ds, p_floor) and cone.dual_interior(
            z + alpha * dz, d_floor
        ):
            return alpha
        alpha *= 0.8
    return 0.0


def solve(prog: ConicProgram, opts: SolverOptions | None = None) -> Solution:
    """Solve a :class:`ConicProgram` on the homogeneous self-dual embedding.

    Returns a :class:`Solution` whose status is Optimal, PrimalInfeasible,
    DualInfeasible, MaxIters or NumericalFailure; numerical trouble is
    reported, never raised.
    """
    opts = opts or SolverOptions()
    c, a_mat, b, g_mat, h, l, ne = _standard_form(prog)
    n = len(c)
    p = len(b)
    cone = _Cone(l, ne)
    m = cone.dim
    at_mat = a_mat.T.tocsr()
    gt_mat = g_mat.T.tocsr()

    x = np.zeros(n)
    y = np.zeros(p)
    s = cone.init_point()
    z = -cone.grad(s)
    tau = 1.0
    kappa = 1.0

    scale_c = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    scale_bh = max(
        1.0,
        float(np.max(np.abs(b), initial=0.0)),
        float(np.max(np.abs(h), initial=0.0)),
    )
    trace: list[dict] = []
    reg = opts.regularization

    def make_solution(status, iters, pres, dres, gap, obj):
        return Solution(status, x.copy(), y.copy(), z.copy(), s.copy(),
                        obj, gap, pres, dres, iters, trace)

    # best tolerance-satisfying iterate seen so far (set during polishing)
    best = None

    def best_solution():
        bx, by, bz, bs, bit, bpres, bdres, bgap, bobj, _bcomp = best
        return Solution(OPTIMAL, bx, by, bz, bs, bobj, bgap, bpres, bdres,
                        bit, trace)

    status = MAX_ITERS
    pres = dres = gap = np.inf
    obj = np.nan
    stalls = 0
    recenters_left = 3
    it = 0
    polish_left = None
    for it in range(1, opts.max_iters + 1):
        rx = at_mat @ y + gt_mat @ z + c * tau
        ry = a_mat @ x - b * tau
        rz = s + g_mat @ x - h * tau
        rtau = kappa + float(c @ x + b @ y + h @ z)
        mu = (float(s @ z) + tau * kappa) / (cone.nu + 1)

        # scaled (deflated) iterate and stopping tests
        xs, ys, zs, ss = x / tau, y / tau, z / tau, s / tau
        pres = max(
            float(np.max(np.abs(a_mat @ xs - b), initial=0.0)) / scale_bh,
            float(np.max(np.abs(g_mat @ xs + ss - h), initial=0.0)) / scale_bh,
        )
        dres = float(np.max(np.abs(at_mat @ ys + gt_mat @ zs + c), initial=0.0)) / scale_c
        pobj = float(c @ xs)
        dobj = -float(b @ ys + h @ zs)
        gap = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
        comp = float(s @ z) / tau ** 2
        obj = -pobj if prog.maximize else pobj
        trace.append({"iter": it, "mu": mu, "pres": pres, "dres": dres,
                      "gap": gap, "tau": tau, "kappa": kappa})

        ok = pres <= opts.tol_feas and dres <= opts.tol_feas and (
            gap <= opts.tol_gap or comp <= opts.tol_gap
        )
        if ok and (best is None or comp < best[-1]):
            best = (xs.copy(), ys.copy(), zs.copy(), ss.copy(), it,
                    pres, dres, gap, obj, comp)
        if ok and polish_left is None:
            polish_left = opts.polish_iters
        if polish_left is not None:
            # converged: spend the remaining polish budget shrinking the
            # complementarity, then return the best iterate
            if polish_left <= 0 or not ok:
                return best_solution()
            polish_left -= 1

        ct = -float(b @ y + h @ z)
        if best is None and ct > 1e-10 * scale_bh:
            cert = float(np.max(np.abs(at_mat @ y + gt_mat @ z), initial=0.0))
            if cert / ct <= opts.tol_feas * scale_c:
                y, z = y / ct, z / ct
                return make_solution(PRIMAL_INFEASIBLE, it, pres, dres, gap, np.nan)
        dt = -float(c @ x)
        if best is None and dt > 1e-10 * scale_c:
            cert = max(
                float(np.max(np.abs(a_mat @ x), initial=0.0)),
                float(np.max(np.abs(g_mat @ x + s), initial=0.0)),
            )
            if cert / dt <= opts.tol_feas * scale_bh:
                x, s = x / dt, s / dt
                return make_solution(DUAL_INFEASIBLE, it, pres, dres, gap, np.nan)

        # KKT factorization with static regularization
        w_mat = cone.scaling_inverse(s, z, mu)
        kkt = sp.bmat(
            [
                [None, at_mat, gt_mat],
                [a_mat, None, None],
                [g_mat, None, -w_mat],
            ],
            format="csc",
        )
        reg_vec = np.concatenate([np.full(n, reg), np.full(p, -reg), np.full(m, -reg)])
        try:
            lu = spla.splu(kkt + sp.diags(reg_vec, format="csc"))
        except RuntimeError:
            return (best_solution() if best is not None else
                    make_solution(NUMERICAL_FAILURE, it, pres, dres, gap, obj))

        def kkt_solve(r1, r2, r3):
            rhs = np.concatenate([r1, r2, r3])
            sol = lu.solve(rhs)
            for _ in range(2):  # refine against the unregularized system
                resid = rhs - kkt @ sol
                sol = sol + lu.solve(resid)
            return sol[:n], sol[n: n + p], sol[n + p:]

        dx2, dy2, dz2 = kkt_solve(-c, b, h)

        def direction(sigma):
            eta = 1.0 - sigma
            psi = cone.complementarity_target(s, z, sigma, mu)
            dx1, dy1, dz1 = kkt_solve(-eta * rx, -eta * ry, -eta * rz + w_mat @ psi)
            t1 = float(c @ dx1 + b @ dy1 + h @ dz1)
            t2 = float(c @ dx2 + b @ dy2 + h @ dz2)
            rhs4 = -eta * rtau + (kappa - sigma * mu / tau)
            denom = t2 - kappa / tau
            if denom == 0 or not np.isfinite(denom):
                return None
            dtau = (rhs4 - t1) / denom
            dx = dx1 + dtau * dx2
            dy = dy1 + dtau * dy2
            dz = dz1 + dtau * dz2
            ds = -w_mat @ (dz + psi)
            dkappa = -(kappa - sigma * mu / tau) - (kappa / tau) * dtau
            return dx, dy, dz, ds, dtau, dkappa

        aff = direction(0.0)
        if aff is None:
            return (best_solution() if best is not None else
                    make_solution(NUMERICAL_FAILURE, it, pres, dres, gap, obj))
        alpha_aff = _step_length(cone, s, aff[3], z, aff[2], tau, aff[4],
                                 kappa, aff[5], 1.0, opts.min_step)
        sigma = min(0.999, max(1e-4, (1.0 - alpha_aff) ** 3))

        step = direction(sigma)
        if step is None:
            return (best_solution() if best is not None else
                    make_solution(NUMERICAL_FAILURE, it, pres, dres, gap, obj))
        dx, dy, dz, ds, dtau, dkappa = step
        alpha = _step_length(cone, s, ds, z, dz, tau, dtau, kappa, dkappa,
                             opts.frac_to_boundary, opts.min_step)
        if alpha <= opts.min_step:
            # last resort: pure centering step
            step = direction(1.0)
            if step is not None:
                dx, dy, dz, ds, dtau, dkappa = step
                alpha = _step_length(cone, s, ds, z, dz, tau, dtau, kappa,
                                     dkappa, opts.frac_to_boundary, opts.min_step)
            if alpha <= opts.min_step:
                return (best_solution() if best is not None else
                    make_solution(NUMERICAL_FAILURE, it, pres, dres, gap, obj))
        stalls = stalls + 1 if alpha <= 1e-6 else 0
        if stalls >= 2 and recenters_left > 0:
            # the dual iterate has drifted onto its cone boundary and blocks
            # every direction; snap it back to the point exactly centered
            # against s.  The feasibility residual this introduces is absorbed
            # by the self-dual embedding over the following iterations.
            z = -mu * cone.grad(s)
            kappa = mu / tau
            stalls = 0
            recenters_left -= 1
            continue

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.isfinite(tau) and tau > 0 and np.isfinite(kappa)):
            return (best_solution() if best is not None else
                    make_solution(NUMERICAL_FAILURE, it, pres, dres, gap, obj))

    if best is not None:
        return best_solution()
    return make_solution(MAX_ITERS, it, pres, dres, gap, obj)


def check_certificates(prog: ConicProgram, sol: Solution) -> dict:
    """Recompute residuals, gap and cone memberships for a solution.

    For Optimal solutions all reported violations should sit within an order
    of magnitude of the solver tolerances; for infeasibility statuses the
    report carries the certificate value instead.
    """
    c, a_mat, b, g_mat, h, l, ne = _standard_form(prog)
    report: dict = {"status": sol.status}
    s_ineq = None
    if sol.status == OPTIMAL:
        report["primal_eq_residual"] = float(
            np.max(np.abs(a_mat @ sol.x - b), initial=0.0)
        )
        slack = h - g_mat @ sol.x
        report["primal_cone_residual"] = float(np.max(np.abs(slack - sol.s), initial=0.0))
        report["dual_residual"] = float(
            np.max(np.abs(a_mat.T @ sol.y + g_mat.T @ sol.z + c), initial=0.0)
        )
        report["complementarity"] = float(sol.s @ sol.z)
        s_ineq = sol.s
    elif sol.status == PRIMAL_INFEASIBLE:
        report["certificate_value"] = -float(b @ sol.y + h @ sol.z)
        report["certificate_residual"] = float(
            np.max(np.abs(a_mat.T @ sol.y + g_mat.T @ sol.z), initial=0.0)
        )
    elif sol.status == DUAL_INFEASIBLE:
        report["certificate_value"] = -float(c @ sol.x)
        report["certificate_residual"] = max(
            float(np.max(np.abs(a_mat @ sol.x), initial=0.0)),
            float(np.max(np.abs(g_mat @ sol.x + sol.s), initial=0.0)),
        )
        s_ineq = sol.s

    if s_ineq is not None and len(s_ineq):
        lin = s_ineq[:l]
        report["min_linear_slack"] = float(np.min(lin, initial=0.0)) if l else 0.0
        triples = s_ineq[l:].reshape(ne, 3)
        report["primal_cones_ok"] = all(exp_cone_contains(t, 1e-7) for t in triples)
    if sol.status in (OPTIMAL, PRIMAL_INFEASIBLE) and len(sol.z):
        lin = sol.z[:l]
        report["min_dual_linear"] = float(np.min(lin, initial=0.0)) if l else 0.0
        triples = sol.z[l:].reshape(ne, 3)
        report["dual_cones_ok"] = all(dual_exp_cone_contains(t, 1e-7) for t in triples)
    return report
