"""Dense two-phase bounded-variable simplex.

The program is brought into the internal form ``min c.x, A x = b,
0 <= x <= u`` by shifting/complementing/splitting variables, adding a slack
per inequality row and an artificial wherever the slack cannot start basic.
Upper bounds are handled implicitly: a nonbasic column at its upper bound is
complemented in place, so every nonbasic column always sits at zero.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import InternalConsistencyError, NumericError, SchemaError, SolverLimitError
from ..relax import EQ, GE, LE, LinearConstraint, RelaxationSet
from .kernels import DEFAULT_BACKEND, get_kernel

FEAS_TOL = 1e-7
BOUND_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-10
MAX_ITER = 10 ** 6
REFACTOR_EVERY = 500


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LpSolution:
    status: LpStatus
    objective: float
    x: np.ndarray | None
    iterations: int
    dual_infeasibility: float = 0.0
    max_residual: float = 0.0
    backend: str = DEFAULT_BACKEND
    basis: tuple = ()

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def __getitem__(self, var):
        return self.x[var]


class LinearProgram:
    """Variables with box bounds, linear constraints and a linear objective (maximized)."""

    def __init__(self, name: str = "lp"):
        self.name = name
        self.names: list[str] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.constraints: list[LinearConstraint] = []
        self.objective: dict = {}
        self.constant = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def add_var(self, name: str | None = None, lo: float = -math.inf, hi: float = math.inf) -> int:
        if math.isnan(lo) or math.isnan(hi):
            raise SchemaError("variable bound is NaN")
        self.names.append(name if name is not None else f"v{len(self.names)}")
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        return len(self.names) - 1

    def add_vars(self, prefix: str, lo, hi) -> list[int]:
        return [self.add_var(f"{prefix}_{i}", a, b) for i, (a, b) in enumerate(zip(lo, hi))]

    def set_bounds(self, var: int, lo: float, hi: float):
        """Intersect the variable's bounds with [lo, hi]."""
        self.lo[var] = max(self.lo[var], float(lo))
        self.hi[var] = min(self.hi[var], float(hi))

    def add_constraint(self, coeffs, sense: str = LE, rhs: float = 0.0) -> LinearConstraint:
        c = coeffs if isinstance(coeffs, LinearConstraint) else LinearConstraint(coeffs, sense, rhs)
        for k in c.coeffs:
            if not 0 <= k < self.n_vars:
                raise SchemaError(f"constraint references undeclared variable {k}")
        self.constraints.append(c)
        return c

    def add_relaxation(self, rs: RelaxationSet):
        for c in rs.constraints:
            self.add_constraint(c)
        for var, (lo, hi) in rs.bounds.items():
            self.set_bounds(var, lo, hi)

    def maximize(self, coeffs: dict, constant: float = 0.0):
        for k, v in coeffs.items():
            if not 0 <= k < self.n_vars:
                raise SchemaError(f"objective references undeclared variable {k}")
            if not math.isfinite(v):
                raise SchemaError("objective coefficient is not finite")
        self.objective = {int(k): float(v) for k, v in coeffs.items() if v != 0.0}
        self.constant = float(constant)

    def evaluate(self, x) -> float:
        return self.constant + sum(c * x[k] for k, c in self.objective.items())

    def to_lp_text(self) -> str:
        """CPLEX-style LP text (debug dump)."""
        names = _lp_names(self.names)

        def terms(coeffs):
            if not coeffs:
                return "0 " + names[0] if names else "0"
            out = []
            for k, c in coeffs.items():
                out.append(f"{'-' if c < 0 else '+'} {abs(c)!r} {names[k]}")
            s = " ".join(out)
            return s[2:] if s.startswith("+ ") else s

        lines = [f"\\ {self.name}", "Maximize", f" obj: {terms(self.objective)}"]
        if self.constant:
            lines[-1] += f" {'+' if self.constant >= 0 else '-'} {abs(self.constant)!r}"
        lines.append("Subject To")
        for i, c in enumerate(self.constraints):
            op = {LE: "<=", GE: ">=", EQ: "="}[c.sense]
            lines.append(f" c{i}: {terms(c.coeffs)} {op} {c.rhs!r}")
        lines.append("Bounds")
        for k, nm in enumerate(names):
            lo, hi = self.lo[k], self.hi[k]
            if math.isinf(lo) and math.isinf(hi):
                lines.append(f" {nm} free")
            else:
                slo = "-inf" if math.isinf(lo) else repr(lo)
                shi = "+inf" if math.isinf(hi) else repr(hi)
                lines.append(f" {slo} <= {nm} <= {shi}")
        lines.append("End")
        return "\n".join(lines) + "\n"


def _lp_names(names):
    out = []
    for k, nm in enumerate(names):
        s = re.sub(r"[^A-Za-z0-9_.]", "_", nm)
        if not s or s[0].isdigit() or s[0] in ".eE":
            s = "v_" + s
        out.append(f"{s}_{k}")
    return out


# -- internal form -----------------------------------------------------------

class _Columns:
    """Map between user variables and internal nonnegative columns."""

    def __init__(self, lo, hi):
        n = len(lo)
        self.fixed = np.zeros(n, dtype=bool)
        self.col = np.full(n, -1)
        self.col2 = np.full(n, -1)   # negative part of a split free variable
        self.sign = np.ones(n)
        self.offset = np.zeros(n)
        upper = []
        for k in range(n):
            l, h = lo[k], hi[k]
            if l == h:
                self.fixed[k] = True
                self.offset[k] = l
                continue
            self.col[k] = len(upper)
            if math.isfinite(l):
                self.offset[k] = l
                upper.append(h - l)
            elif math.isfinite(h):
                self.offset[k] = h
                self.sign[k] = -1.0
                upper.append(math.inf)
            else:
                upper.append(math.inf)
                self.col2[k] = len(upper)
                upper.append(math.inf)
        self.upper = np.array(upper, dtype=np.float64)
        self.n = len(upper)

    def expand(self, coeffs: dict):
        """Return (column indices, values, constant) of a user-space linear form."""
        cols, vals, const = [], [], 0.0
        for k, a in coeffs.items():
            const += a * self.offset[k]
            if self.fixed[k]:
                continue
            cols.append(self.col[k])
            vals.append(a * self.sign[k])
            if self.col2[k] >= 0:
                cols.append(self.col2[k])
                vals.append(-a)
        return cols, vals, const

    def recover(self, xi):
        x = self.offset.copy()
        live = ~self.fixed
        x[live] += self.sign[live] * xi[self.col[live]]
        split = self.col2 >= 0
        x[split] -= xi[self.col2[split]]
        return x


def _presolve_bounds(lp: LinearProgram):
    """Turn single-variable rows into bounds; return (lo, hi, remaining rows)."""
    lo = np.array(lp.lo, dtype=np.float64)
    hi = np.array(lp.hi, dtype=np.float64)
    rows = []
    for c in lp.constraints:
        if len(c.coeffs) != 1:
            rows.append(c)
            continue
        (k, a), = c.coeffs.items()
        val = c.rhs / a
        sense = c.sense
        if a < 0 and sense != EQ:
            sense = GE if sense == LE else LE
        if sense in (LE, EQ):
            hi[k] = min(hi[k], val)
        if sense in (GE, EQ):
            lo[k] = max(lo[k], val)
    return lo, hi, rows


def _reinvert(T, basis, flipped, upper, A0, b0, costs, m):
    N = A0.shape[1]
    sgn = np.where(flipped.astype(bool), -1.0, 1.0)
    fl = np.flatnonzero(flipped)
    Af = A0 * sgn
    bf = b0 - A0[:, fl] @ upper[fl] if fl.size else b0.copy()
    if m == 0:
        rows = np.zeros((0, N + 1))
    else:
        try:
            rows = np.linalg.solve(Af[:, basis], np.column_stack([Af, bf]))
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular basis during reinversion") from exc
    rows[:, basis] = 0.0
    rows[np.arange(m), basis] = 1.0
    T[:m] = rows
    for r, c in zip((m, m + 1), costs):
        cf = c * sgn
        const = float(c[fl] @ upper[fl]) if fl.size else 0.0
        cb = cf[basis]
        T[r, :N] = cf - cb @ rows[:, :N]
        T[r, basis] = 0.0
        T[r, N] = -(const + cb @ rows[:, N])


def _pivot(T, basis, r, q):
    T[r, :] = T[r, :] / T[r, q]
    f = T[:, q].copy()
    f[r] = 0.0
    rows = np.flatnonzero(f)
    T[rows] -= np.outer(f[rows], T[r, :])
    basis[r] = q


def solve(lp: LinearProgram, backend: str | None = None, max_iter: int = MAX_ITER) -> LpSolution:
    """Maximize ``lp.objective`` subject to its constraints and bounds."""
    backend = backend or DEFAULT_BACKEND
    kernel = get_kernel(backend)

    lo, hi, rows = _presolve_bounds(lp)
    if np.any(lo > hi + FEAS_TOL * np.maximum(1.0, np.abs(lo))):
        return LpSolution(LpStatus.INFEASIBLE, math.nan, None, 0, backend=backend)
    hi = np.maximum(hi, lo)
    cols = _Columns(lo, hi)
    n = cols.n

    # rows in "<=" or "==" form, scaled to unit max coefficient
    dense, rhs, is_eq = [], [], []
    for c in rows:
        idx, vals, const = cols.expand(c.coeffs)
        a = np.zeros(n)
        np.add.at(a, np.asarray(idx, dtype=np.intp), vals)
        b = c.rhs - const
        s = -1.0 if c.sense == GE else 1.0
        a, b = a * s, b * s
        scale = np.abs(a).max() if a.size else 0.0
        if scale == 0.0:
            tol = FEAS_TOL * max(1.0, abs(c.rhs))
            if (c.sense == EQ and abs(b) > tol) or (c.sense != EQ and b < -tol):
                return LpSolution(LpStatus.INFEASIBLE, math.nan, None, 0, backend=backend)
            continue
        dense.append(a / scale)
        rhs.append(b / scale)
        is_eq.append(c.sense == EQ)
    m = len(dense)
    A = np.array(dense).reshape(m, n)
    b = np.array(rhs, dtype=np.float64)
    is_eq = np.array(is_eq, dtype=bool)

    # internal costs (minimize the negated objective)
    c_struct = np.zeros(n)
    idx, vals, obj_const = cols.expand(lp.objective)
    np.add.at(c_struct, np.asarray(idx, dtype=np.intp), vals)
    c_struct = -c_struct

    # slacks for inequality rows, artificials where the slack cannot start basic
    n_slack = int((~is_eq).sum())
    neg = b < 0
    A[neg] *= -1.0
    b = np.where(neg, -b, b)
    slack_rows = np.flatnonzero(~is_eq)
    S = np.zeros((m, n_slack))
    S[slack_rows, np.arange(n_slack)] = np.where(neg[slack_rows], -1.0, 1.0)
    need_art = is_eq | neg
    art_rows = np.flatnonzero(need_art)
    n_art = art_rows.size
    Art = np.zeros((m, n_art))
    Art[art_rows, np.arange(n_art)] = 1.0
    A0 = np.hstack([A, S, Art])
    N = A0.shape[1]
    upper = np.concatenate([cols.upper, np.full(n_slack + n_art, math.inf)])

    basis = np.empty(m, dtype=np.int64)
    slack_of_row = np.full(m, -1)
    slack_of_row[slack_rows] = n + np.arange(n_slack)
    basis[:] = slack_of_row
    basis[art_rows] = n + n_slack + np.arange(n_art)

    c2 = np.concatenate([c_struct, np.zeros(n_slack + n_art)])
    c1 = np.concatenate([np.zeros(n + n_slack), np.ones(n_art)])
    T = np.zeros((m + 2, N + 1))
    T[:m, :N] = A0
    T[:m, N] = b
    T[m, :N] = c2
    T[m + 1, :N] = c1 - A0[art_rows].sum(axis=0)
    T[m + 1, N] = -b[art_rows].sum()
    T[m + 1, basis] = 0.0

    flipped = np.zeros(N, dtype=np.int8)
    eligible = np.ones(N, dtype=np.uint8)
    eligible[n + n_slack:] = 0
    total = 0
    bland_after = 2 * (m + N)

    def run(obj_row):
        nonlocal total
        state = np.array([0, 0, bland_after], dtype=np.int64)
        while True:
            chunk = min(REFACTOR_EVERY, max_iter - total)
            if chunk <= 0:
                raise SolverLimitError(f"simplex exceeded {max_iter} iterations")
            status, steps = kernel(T, basis, upper, flipped, eligible, m, obj_row,
                                   chunk, state, DUAL_TOL, PIVOT_TOL)
            total += steps
            if status != 2:
                return status
            _reinvert(T, basis, flipped, upper, A0, b, (c2, c1), m)

    if n_art:
        run(m + 1)
        _reinvert(T, basis, flipped, upper, A0, b, (c2, c1), m)
        infeas = -T[m + 1, N]
        if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max())):
            return LpSolution(LpStatus.INFEASIBLE, math.nan, None, total, backend=backend)
        for r in np.flatnonzero(basis >= n + n_slack):
            cand = np.abs(T[r, :n + n_slack]) * (eligible[:n + n_slack] > 0)
            cand[basis[basis < n + n_slack]] = 0.0
            q = int(np.argmax(cand)) if cand.size else 0
            if cand.size and cand[q] > 1e-9:
                _pivot(T, basis, r, q)
        upper[n + n_slack:] = 0.0

    for attempt in range(3):
        status = run(m)
        if status == 1:
            return LpSolution(LpStatus.UNBOUNDED, math.inf, None, total, backend=backend)
        _reinvert(T, basis, flipped, upper, A0, b, (c2, c1), m)
        d = T[m, :N]
        nonbasic = np.ones(N, dtype=bool)
        nonbasic[basis] = False
        mask = nonbasic & (eligible > 0)
        worst = float(-d[mask].min()) if mask.any() else 0.0
        if worst <= DUAL_TOL:
            break
    dual_infeas = max(0.0, worst)

    xi = np.zeros(N)
    xi[basis] = T[:m, N]
    fl = flipped.astype(bool)
    xi[fl] = upper[fl] - xi[fl]
    x = cols.recover(xi[:n])
    x = np.minimum(np.maximum(x, lo), hi)

    worst_res = 0.0
    for c in lp.constraints:
        terms = [a * x[k] for k, a in c.coeffs.items()]
        scale = max(1.0, abs(c.rhs), max(abs(t) for t in terms))
        viol = -c.slack(x) / scale
        worst_res = max(worst_res, viol)
    if worst_res > FEAS_TOL:
        if np.any(xi[basis] < -1e-6) or worst_res > 1e-4:
            raise InternalConsistencyError(
                f"simplex returned a point violating constraints by {worst_res:.3g}")
        raise NumericError(f"constraint residual {worst_res:.3g} exceeds {FEAS_TOL}")
    value = lp.evaluate(x)
    return LpSolution(LpStatus.OPTIMAL, value, x, total, dual_infeas, worst_res, backend,
                      tuple(int(v) for v in basis))
