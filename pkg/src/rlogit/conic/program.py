"""Conic program container and serialization.

A :class:`ConicProgram` is a linear objective over variables subject to
linear equalities, linear inequalities (row . x <= rhs) and three-dimensional
exponential-cone memberships.  Cone triples reference plain variable indices;
the middle (y) slot conventionally points at a single shared variable pinned
to 1 by an equality row.

Two on-disk formats are provided: a canonical JSON schema whose
dump -> load -> dump round-trip is byte-identical, and a CBF (Conic
Benchmark Format) subset with EXP cone blocks for interop with external
solvers.  Note CBF orders the exponential cone as (z, y, x) relative to the
membership y * exp(x / y) <= z used here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..network import canonical_json


def exp_cone_contains(triple, slack_tol: float = 1e-7) -> bool:
    """Membership in the exponential cone within ``slack_tol``.

    The cone is {(x, y, z) : y > 0, y e^{x/y} <= z} together with its closure
    ray {(x, 0, z) : x <= 0, z >= 0}.
    """
    x, y, z = (float(v) for v in triple)
    if y > slack_tol:
        ratio = x / y
        if ratio > 700.0:  # e^{x/y} overflows; membership impossible for finite z
            return False
        return y * math.exp(ratio) <= z + slack_tol
    if y >= -slack_tol:
        return x <= slack_tol and z >= -slack_tol
    return False


def dual_exp_cone_contains(triple, slack_tol: float = 1e-7) -> bool:
    """Membership in the dual exponential cone.

    {(u, v, w) : u < 0, -u e^{v/u} <= e w} plus the closure face
    {(0, v, w) : v >= 0, w >= 0}.
    """
    u, v, w = (float(t) for t in triple)
    if u < -slack_tol:
        ratio = v / u
        if ratio > 700.0:
            return False
        return -u * math.exp(ratio) <= math.e * w + slack_tol
    if u <= slack_tol:
        return v >= -slack_tol and w >= -slack_tol
    return False


@dataclass
class ConicProgram:
    """Linear objective over linear rows plus exponential-cone triples.

    ``a_eq x = b_eq``; ``a_ineq x <= b_ineq``; for every (ix, iy, iz) in
    ``exp_cones``, (x_ix, x_iy, x_iz) lies in the exponential cone.
    """

    n_vars: int
    objective: np.ndarray
    maximize: bool
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ineq: sp.csr_matrix
    b_ineq: np.ndarray
    exp_cones: list = field(default_factory=list)
    one_index: int | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.b_ineq = np.asarray(self.b_ineq, dtype=float)
        self.a_eq = sp.csr_matrix(self.a_eq)
        self.a_ineq = sp.csr_matrix(self.a_ineq)
        if self.objective.shape != (self.n_vars,):
            raise ValueError("objective length mismatch")
        if self.a_eq.shape != (len(self.b_eq), self.n_vars):
            raise ValueError("equality block shape mismatch")
        if self.a_ineq.shape != (len(self.b_ineq), self.n_vars):
            raise ValueError("inequality block shape mismatch")
        self.exp_cones = [tuple(int(i) for i in t) for t in self.exp_cones]
        for t in self.exp_cones:
            if len(t) != 3 or any(i < 0 or i >= self.n_vars for i in t):
                raise ValueError(f"cone triple {t} out of range")

    @property
    def n_eq(self) -> int:
        return len(self.b_eq)

    @property
    def n_ineq(self) -> int:
        return len(self.b_ineq)

    @property
    def n_cones(self) -> int:
        return len(self.exp_cones)


def _rows_to_doc(mat: sp.csr_matrix, rhs: np.ndarray) -> list:
    rows = []
    for r in range(mat.shape[0]):
        lo, hi = mat.indptr[r], mat.indptr[r + 1]
        pairs = sorted(zip(mat.indices[lo:hi].tolist(), mat.data[lo:hi].tolist()))
        rows.append({"coeffs": [[int(i), float(c)] for i, c in pairs if c != 0.0],
                     "rhs": float(rhs[r])})
    return rows


def _rows_from_doc(rows: list, n_vars: int):
    data, ri, ci, rhs = [], [], [], []
    for r, row in enumerate(rows):
        rhs.append(row["rhs"])
        for i, c in row["coeffs"]:
            ri.append(r)
            ci.append(i)
            data.append(c)
    mat = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n_vars))
    return mat, np.asarray(rhs, dtype=float)


def problem_to_dict(prog: ConicProgram) -> dict:
    obj = [[int(i), float(c)] for i, c in enumerate(prog.objective) if c != 0.0]
    return {
        "n_vars": prog.n_vars,
        "maximize": bool(prog.maximize),
        "objective": obj,
        "eq_rows": _rows_to_doc(prog.a_eq, prog.b_eq),
        "ineq_rows": _rows_to_doc(prog.a_ineq, prog.b_ineq),
        "exp_cones": [list(t) for t in prog.exp_cones],
        "one_index": prog.one_index,
    }


def problem_from_dict(doc: dict) -> ConicProgram:
    n = int(doc["n_vars"])
    obj = np.zeros(n)
    for i, c in doc["objective"]:
        obj[i] = c
    a_eq, b_eq = _rows_from_doc(doc["eq_rows"], n)
    a_ineq, b_ineq = _rows_from_doc(doc["ineq_rows"], n)
    return ConicProgram(
        n_vars=n,
        objective=obj,
        maximize=doc["maximize"],
        a_eq=a_eq,
        b_eq=b_eq,
        a_ineq=a_ineq,
        b_ineq=b_ineq,
        exp_cones=[tuple(t) for t in doc["exp_cones"]],
        one_index=doc.get("one_index"),
    )


def save_problem(prog: ConicProgram, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(problem_to_dict(prog)))
        fh.write("\n")


def load_problem(path) -> ConicProgram:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


# --- CBF writer / reader ---------------------------------------------------
#
# Subset used: VER, OBJSENSE, VAR (all free), CON with L=, L- and EXP
# domains, OBJACOORD, ACOORD, BCOORD.  CBF's EXP cone is ordered so that the
# *first* member bounds the exponential: (c1, c2, c3) in EXP means
# c2 > 0, c2 * exp(c3 / c2) <= c1 — the reverse of this package's (x, y, z).


def write_cbf(prog: ConicProgram, path) -> None:
    lines = ["VER", "3", ""]
    lines += ["OBJSENSE", "MAX" if prog.maximize else "MIN", ""]
    lines += ["VAR", f"{prog.n_vars} 1", f"F {prog.n_vars}", ""]

    # constraint rows: equalities, inequalities (as <= 0 after rhs shift),
    # then one EXP block of three rows per cone in (z, y, x) order
    domains = []
    if prog.n_eq:
        domains.append(("L=", prog.n_eq))
    if prog.n_ineq:
        domains.append(("L-", prog.n_ineq))
    for _ in prog.exp_cones:
        domains.append(("EXP", 3))
    n_rows = prog.n_eq + prog.n_ineq + 3 * prog.n_cones
    lines += ["CON", f"{n_rows} {len(domains)}"]
    lines += [f"{name} {size}" for name, size in domains]
    lines.append("")

    acoord = []
    bcoord = []
    row = 0
    for mat, rhs in ((prog.a_eq, prog.b_eq), (prog.a_ineq, prog.b_ineq)):
        for r in range(mat.shape[0]):
            lo, hi = mat.indptr[r], mat.indptr[r + 1]
            for i, c in sorted(zip(mat.indices[lo:hi].tolist(), mat.data[lo:hi].tolist())):
                if c != 0.0:
                    acoord.append((row, i, c))
            if rhs[r] != 0.0:
                bcoord.append((row, -rhs[r]))
            row += 1
    for (ix, iy, iz) in prog.exp_cones:
        for var in (iz, iy, ix):  # CBF order: bound, base, exponent
            acoord.append((row, var, 1.0))
            row += 1

    obj = [(i, c) for i, c in enumerate(prog.objective) if c != 0.0]
    lines += ["OBJACOORD", str(len(obj))]
    lines += [f"{i} {c:.17g}" for i, c in obj]
    lines.append("")
    lines += ["ACOORD", str(len(acoord))]
    lines += [f"{r} {i} {c:.17g}" for r, i, c in acoord]
    lines.append("")
    lines += ["BCOORD", str(len(bcoord))]
    lines += [f"{r} {v:.17g}" for r, v in bcoord]
    lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def read_cbf(path) -> ConicProgram:
    """Read the CBF subset written by :func:`write_cbf`."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(tokens) and not tokens[pos].strip():
            pos += 1
        line = tokens[pos].strip()
        pos += 1
        return line

    maximize = True
    n_vars = 0
    domains: list[tuple[str, int]] = []
    obj_entries: list[tuple[int, float]] = []
    a_entries: list[tuple[int, int, float]] = []
    b_entries: list[tuple[int, float]] = []

    while pos < len(tokens):
        try:
            key = next_line()
        except IndexError:
            break
        if key == "VER":
            next_line()
        elif key == "OBJSENSE":
            maximize = next_line() == "MAX"
        elif key == "VAR":
            n_vars = int(next_line().split()[0])
            next_line()  # single free block
        elif key == "CON":
            _, k = (int(t) for t in next_line().split())
            for _ in range(k):
                name, size = next_line().split()
                domains.append((name, int(size)))
        elif key == "OBJACOORD":
            for _ in range(int(next_line())):
                i, c = next_line().split()
                obj_entries.append((int(i), float(c)))
        elif key == "ACOORD":
            for _ in range(int(next_line())):
                r, i, c = next_line().split()
                a_entries.append((int(r), int(i), float(c)))
        elif key == "BCOORD":
            for _ in range(int(next_line())):
                r, v = next_line().split()
                b_entries.append((int(r), float(v)))

    n_eq = sum(s for name, s in domains if name == "L=")
    n_ineq = sum(s for name, s in domains if name == "L-")
    b_by_row = dict(b_entries)
    coeffs_by_row: dict[int, list] = {}
    for r, i, c in a_entries:
        coeffs_by_row.setdefault(r, []).append((i, c))

    def block(lo, hi):
        rows = [{"coeffs": [[i, c] for i, c in sorted(coeffs_by_row.get(r, []))],
                 "rhs": -b_by_row.get(r, 0.0)} for r in range(lo, hi)]
        return _rows_from_doc(rows, n_vars)

    a_eq, b_eq = block(0, n_eq)
    a_ineq, b_ineq = block(n_eq, n_eq + n_ineq)
    cones = []
    row = n_eq + n_ineq
    for name, size in domains:
        if name == "EXP":
            triple = []
            for _ in range(size):
                entries = coeffs_by_row.get(row, [])
                if len(entries) != 1 or entries[0][1] != 1.0:
                    raise ValueError("CBF EXP rows must be single variables")
                triple.append(entries[0][0])
                row += 1
            iz, iy, ix = triple  # undo the CBF ordering
            cones.append((ix, iy, iz))

    obj = np.zeros(n_vars)
    for i, c in obj_entries:
        obj[i] = c
    return ConicProgram(
        n_vars=n_vars,
        objective=obj,
        maximize=maximize,
        a_eq=a_eq,
        b_eq=b_eq,
        a_ineq=a_ineq,
        b_ineq=b_ineq,
        exp_cones=cones,
    )
