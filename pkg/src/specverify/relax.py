"""Linear relaxations of the nonlinear atoms: ReLU, exp, products, -Z log Z.

Variables are plain integer ids handed out by a LinearProgram.  Wherever an
atom's argument is "a variable" it may also be a linear expression given as
``{var_id: coefficient}``; the exp relaxation additionally takes a constant
offset so that shifted arguments like ``y_j - c`` need no extra variable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundOrderError, DomainError, SchemaError

DEGENERATE_WIDTH = 1e-12
DEFAULT_TANGENTS = 5

LE, GE, EQ = "<=", ">=", "=="


@dataclass
class LinearConstraint:
    coeffs: dict
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in (LE, GE, EQ):
            raise SchemaError(f"unknown constraint relation {self.sense!r}")
        self.coeffs = {int(k): float(v) for k, v in self.coeffs.items() if v != 0.0}
        self.rhs = float(self.rhs)
        if not self.coeffs:
            raise SchemaError("constraint has no nonzero coefficient")
        if not math.isfinite(self.rhs) or not all(map(math.isfinite, self.coeffs.values())):
            raise SchemaError("constraint has a non-finite coefficient or right-hand side")

    def lhs(self, values) -> float:
        return sum(c * values[k] for k, c in self.coeffs.items())

    def slack(self, values) -> float:
        """Signed slack; negative means the constraint is violated."""
        v = self.lhs(values)
        if self.sense == LE:
            return self.rhs - v
        if self.sense == GE:
            return v - self.rhs
        return -abs(v - self.rhs)


@dataclass
class RelaxationSet:
    """Constraints plus variable bounds that together describe a convex superset."""

    constraints: list = field(default_factory=list)
    bounds: dict = field(default_factory=dict)

    def add(self, coeffs, sense, rhs):
        self.constraints.append(LinearConstraint(coeffs, sense, rhs))

    def bound(self, var, lo, hi):
        old_lo, old_hi = self.bounds.get(var, (-math.inf, math.inf))
        self.bounds[var] = (max(old_lo, float(lo)), min(old_hi, float(hi)))

    def extend(self, other: "RelaxationSet"):
        self.constraints.extend(other.constraints)
        for var, (lo, hi) in other.bounds.items():
            self.bound(var, lo, hi)
        return self

    def min_slack(self, values) -> float:
        """Smallest slack over all constraints and bounds at a concrete assignment."""
        worst = math.inf
        for c in self.constraints:
            worst = min(worst, c.slack(values))
        for var, (lo, hi) in self.bounds.items():
            worst = min(worst, values[var] - lo, hi - values[var])
        return worst


def _expr(v) -> dict:
    if isinstance(v, dict):
        return dict(v)
    return {int(v): 1.0}


def _combine(*terms) -> dict:
    out: dict = {}
    for scale, expr in terms:
        for k, c in expr.items():
            out[k] = out.get(k, 0.0) + scale * c
    return out


def _check_order(l, u):
    if not l <= u:
        raise BoundOrderError(f"lower bound {l} exceeds upper bound {u}")


def tangent_points(l: float, u: float, n: int) -> list[float]:
    if n < 1:
        raise ValueError("need at least one tangent point")
    if n == 1 or u - l < DEGENERATE_WIDTH:
        return [l] if n == 1 or u == l else [l, u]
    return [float(t) for t in np.linspace(l, u, n)]


def relu_relaxation(v, a: int, l: float, u: float) -> RelaxationSet:
    """Triangle relaxation of a = max(v, 0) for v in [l, u]."""
    _check_order(l, u)
    rs = RelaxationSet()
    v = _expr(v)
    if l >= 0:
        rs.add(_combine((1.0, {a: 1.0}), (-1.0, v)), EQ, 0.0)
        rs.bound(a, l, u)
    elif u <= 0:
        rs.add({a: 1.0}, EQ, 0.0)
        rs.bound(a, 0.0, 0.0)
    else:
        slope = u / (u - l)
        rs.add(_combine((1.0, {a: 1.0}), (-1.0, v)), GE, 0.0)
        rs.add({a: 1.0}, GE, 0.0)
        rs.add(_combine((1.0, {a: 1.0}), (-slope, v)), LE, -slope * l)
        rs.bound(a, 0.0, u)
    return rs


def exp_secant(l: float, u: float) -> tuple[float, float]:
    """Slope and intercept of the chord of exp through l and u."""
    el = math.exp(l)
    slope = el * math.expm1(u - l) / (u - l)
    return slope, el - slope * l


def exp_relaxation(y, a: int, l: float, u: float, n_tangents: int = DEFAULT_TANGENTS,
                   offset: float = 0.0, sides: str = "both") -> RelaxationSet:
    """Relax a = exp(y + offset) given y + offset in [l, u].

    ``sides`` may drop the lower ("upper") or upper ("lower") half when the
    caller knows the objective only pushes ``a`` one way.
    """
    _check_order(l, u)
    if n_tangents < 1:
        raise ValueError("n_tangents must be >= 1")
    rs = RelaxationSet()
    y = _expr(y)
    el, eu = math.exp(l), math.exp(u)
    rs.bound(a, el, eu)
    if u - l < DEGENERATE_WIDTH:
        rs.add({a: 1.0}, EQ, el)
        return rs
    if sides in ("both", "upper"):
        slope, icpt = exp_secant(l, u)
        rs.add(_combine((1.0, {a: 1.0}), (-slope, y)), LE, icpt + slope * offset)
    if sides in ("both", "lower"):
        for eta in tangent_points(l, u, n_tangents):
            ee = math.exp(eta)
            # a >= e^eta * (y + offset) + e^eta * (1 - eta)
            rs.add(_combine((1.0, {a: 1.0}), (-ee, y)), GE, ee * (1.0 - eta) + ee * offset)
    return rs


def mccormick(x: int, y: int, w: int, lx: float, ux: float, ly: float, uy: float) -> RelaxationSet:
    """Four McCormick inequalities for w = x * y on a box."""
    _check_order(lx, ux)
    _check_order(ly, uy)
    rs = RelaxationSet()
    rs.add({w: 1.0, x: -ly, y: -lx}, GE, -lx * ly)
    rs.add({w: 1.0, x: -uy, y: -ux}, GE, -ux * uy)
    rs.add({w: 1.0, x: -uy, y: -lx}, LE, -lx * uy)
    rs.add({w: 1.0, x: -ly, y: -ux}, LE, -ux * ly)
    corners = (lx * ly, lx * uy, ux * ly, ux * uy)
    rs.bound(w, min(corners), max(corners))
    return rs


def square_relaxation(x: int, w: int, l: float, u: float,
                      n_tangents: int = DEFAULT_TANGENTS) -> RelaxationSet:
    """w = x**2 relaxed by the chord from above and tangent cuts from below."""
    _check_order(l, u)
    rs = RelaxationSet()
    rs.add({w: 1.0, x: -(l + u)}, LE, -u * l)
    for eta in tangent_points(l, u, n_tangents):
        rs.add({w: 1.0, x: -2.0 * eta}, GE, -eta * eta)
    lo = 0.0 if l <= 0.0 <= u else min(l * l, u * u)
    rs.bound(w, lo, max(l * l, u * u))
    return rs


def quad_relaxation(alpha, X: dict, l, u, n_tangents: int = DEFAULT_TANGENTS,
                    pairs=None) -> RelaxationSet:
    """Relax X = alpha alpha^T entrywise (no semidefinite constraint).

    ``X`` maps index pairs (i, j) with i <= j to variable ids.  ``pairs``
    restricts the emitted entries; omitted entries are unconstrained by
    anything else, so leaving them out does not change the relaxed optimum of
    an objective that does not reference them.
    """
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    n = len(alpha)
    if l.shape != (n,) or u.shape != (n,):
        raise SchemaError("bounds must match the length of alpha")
    for key in X:
        i, j = key
        if i > j:
            raise SchemaError(f"X index {key} is not upper-triangular; symmetry is implicit")
    for i in range(n):
        _check_order(l[i], u[i])
    if pairs is None:
        pairs = sorted(X)
    rs = RelaxationSet()
    for (i, j) in pairs:
        if (i, j) not in X:
            raise SchemaError(f"no X variable for pair {(i, j)}")
        if i == j:
            rs.extend(square_relaxation(alpha[i], X[i, j], l[i], u[i], n_tangents))
        else:
            rs.extend(mccormick(alpha[i], alpha[j], X[i, j], l[i], u[i], l[j], u[j]))
    return rs


def neg_zlogz(z):
    return -z * np.log(z)


def neg_zlogz_tangents(Z: int, t: int, Zl: float, Zu: float,
                       n_tangents: int = DEFAULT_TANGENTS) -> RelaxationSet:
    """Upper tangent cuts t <= -(ln eta + 1) Z + eta of the concave -Z ln Z."""
    if not Zl > 0:
        raise DomainError(f"-Z log Z needs Z > 0, got lower bound {Zl}")
    _check_order(Zl, Zu)
    rs = RelaxationSet()
    for eta in tangent_points(Zl, Zu, n_tangents):
        rs.add({t: 1.0, Z: math.log(eta) + 1.0}, LE, eta)
    rs.bound(Z, Zl, Zu)
    peak = 1.0 / math.e
    top = neg_zlogz(peak) if Zl <= peak <= Zu else max(neg_zlogz(Zl), neg_zlogz(Zu))
    rs.bound(t, min(neg_zlogz(Zl), neg_zlogz(Zu)), top)
    return rs
