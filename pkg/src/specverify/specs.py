"""Specifications F(x, y) <= 0: exact evaluation, gradients and LP encodings.

Softmax-based specifications are encoded in denominator-cleared form.  The
exponentials are additionally shifted by the largest output upper bound so
the LP coefficients stay O(1); both operations multiply F by a positive
factor and leave its sign, which is all a certificate needs, unchanged.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .bounds import LayerBounds
from .errors import ConfigError, InternalConsistencyError, SchemaError, ShapeError
from .network import log_softmax, softmax
from .relax import (DEFAULT_TANGENTS, DEGENERATE_WIDTH, EQ, RelaxationSet, exp_relaxation,
                    exp_secant, mccormick, neg_zlogz_tangents, quad_relaxation)

MAX_DIGIT_SUM_TERMS = 10 ** 4

DEFAULT_SEMANTIC_EPS = 0.23
DEFAULT_DIGIT_SUM_EPS = 1.0
DEFAULT_ENTROPY_FLOOR = 0.1


# -- specification types -----------------------------------------------------

@dataclass(frozen=True)
class Linear:
    c: np.ndarray
    d: float = 0.0
    arity = 1

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=np.float64))


@dataclass(frozen=True)
class SemanticSoftmax:
    dist: np.ndarray
    epsilon: float = DEFAULT_SEMANTIC_EPS
    arity = 1

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=np.float64)
        if d.ndim != 1 or np.any(d < 0) or not np.any(d == 0):
            raise SchemaError("semantic distances must be nonnegative with d[true label] = 0")
        object.__setattr__(self, "dist", d)


@dataclass(frozen=True)
class DigitSum:
    targets: tuple
    n_labels: int = 10
    epsilon: float = DEFAULT_DIGIT_SUM_EPS

    def __post_init__(self):
        t = tuple(int(v) for v in self.targets)
        if not 1 <= len(t) <= 4:
            raise ConfigError(f"digit-sum needs 1 <= N <= 4 copies, got {len(t)}")
        if self.n_labels ** len(t) > MAX_DIGIT_SUM_TERMS:
            raise ConfigError(f"{self.n_labels}^{len(t)} outcome terms exceed the cap {MAX_DIGIT_SUM_TERMS}")
        if any(not 0 <= v < self.n_labels for v in t):
            raise SchemaError("digit-sum target outside the label set")
        object.__setattr__(self, "targets", t)

    @property
    def arity(self) -> int:
        return len(self.targets)

    def cost_tensor(self) -> np.ndarray:
        """|sum_n (j_n - i_n)| - eps over the label grid J^N."""
        J, N = self.n_labels, len(self.targets)
        grids = np.meshgrid(*([np.arange(J)] * N), indexing="ij")
        total = sum(grids) - sum(self.targets)
        return np.abs(total).astype(np.float64) - self.epsilon


@dataclass(frozen=True)
class Quadratic:
    """F = (1, x, y)^T Q (1, x, y)."""

    Q: np.ndarray
    arity = 1

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise SchemaError("Q must be a square matrix")
        if not np.all(np.isfinite(Q)) or not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
            raise SchemaError("Q must be finite and symmetric")
        object.__setattr__(self, "Q", Q)


@dataclass(frozen=True)
class Entropy:
    """F = E - H(softmax(y)); satisfied while the entropy stays above E."""

    E: float = DEFAULT_ENTROPY_FLOOR
    arity = 1


Specification = Linear | SemanticSoftmax | DigitSum | Quadratic | Entropy


@dataclass(frozen=True)
class EnergyParams:
    mass: float = 1.0
    length: float = 0.5
    gravity: float = 9.81
    scale: float = 0.1

    def __post_init__(self):
        if min(self.mass, self.length, self.gravity, self.scale) <= 0:
            raise ConfigError("pendulum parameters must be positive")


def build_energy_Q(p: EnergyParams, n: int = 3, m: int = 3) -> Quadratic:
    """Quadratic spec for E(next) - E(current) on (w, h, s*omega) coordinates."""
    if n != 3 or m != 3:
        raise ShapeError("energy specification expects 3 inputs and 3 outputs")
    Q = np.zeros((1 + n + m, 1 + n + m))
    lin = p.mass * p.gravity * p.length
    kin = 0.5 * p.mass * p.length ** 2 / p.scale ** 2
    h_in, h_out = 2, 1 + n + 1
    w_in, w_out = 3, 1 + n + 2
    Q[0, h_out] = Q[h_out, 0] = lin / 2
    Q[0, h_in] = Q[h_in, 0] = -lin / 2
    Q[w_out, w_out] = kin
    Q[w_in, w_in] = -kin
    return Quadratic(Q)


# -- exact evaluation and gradients ---------------------------------------------

def _as_batches(spec, xs, ys):
    if spec.arity == 1 and not isinstance(xs, (list, tuple)):
        xs, ys = [xs], [ys]
    if len(xs) != spec.arity or len(ys) != spec.arity:
        raise ShapeError(f"specification takes {spec.arity} input/output pairs, got {len(xs)}/{len(ys)}")
    xs = [np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in xs]
    ys = [np.atleast_2d(np.asarray(y, dtype=np.float64)) for y in ys]
    return xs, ys


def _sum_pmf(probs: Sequence[np.ndarray]) -> np.ndarray:
    """Distribution of the sum of independent label draws, batched over rows."""
    out = probs[0]
    for p in probs[1:]:
        B, a = out.shape
        J = p.shape[1]
        nxt = np.zeros((B, a + J - 1))
        for k in range(J):
            nxt[:, k:k + a] += out * p[:, k:k + 1]
        out = nxt
    return out


def evaluate_batch(spec, xs, ys) -> np.ndarray:
    """F for a batch: xs/ys are lists (one per copy) of (B, dim) arrays."""
    xs, ys = _as_batches(spec, xs, ys)
    if isinstance(spec, Linear):
        y = ys[0]
        if y.shape[1] != spec.c.shape[0]:
            raise ShapeError("linear spec dimension mismatch")
        return y @ spec.c + spec.d
    if isinstance(spec, SemanticSoftmax):
        y = ys[0]
        if y.shape[1] != spec.dist.shape[0]:
            raise ShapeError("distance vector length differs from the number of logits")
        return softmax(y) @ spec.dist - spec.epsilon
    if isinstance(spec, DigitSum):
        for y in ys:
            if y.shape[1] != spec.n_labels:
                raise ShapeError("digit-sum logits must have n_labels entries")
        pmf = _sum_pmf([softmax(y) for y in ys])
        err = np.abs(np.arange(pmf.shape[1]) - sum(spec.targets))
        return pmf @ err - spec.epsilon
    if isinstance(spec, Quadratic):
        a = np.hstack([np.ones((xs[0].shape[0], 1)), xs[0], ys[0]])
        if a.shape[1] != spec.Q.shape[0]:
            raise ShapeError(f"Q has size {spec.Q.shape[0]}, (1, x, y) has {a.shape[1]}")
        return np.einsum("bi,ij,bj->b", a, spec.Q, a)
    if isinstance(spec, Entropy):
        lp = log_softmax(ys[0])
        return spec.E + (np.exp(lp) * lp).sum(axis=1)
    raise SchemaError(f"unknown specification type {type(spec).__name__}")


def eval_spec(spec, xs, ys) -> float:
    """Exact F(x, y); the specification holds at the point iff the value is <= 0."""
    return float(evaluate_batch(spec, xs, ys)[0])


def digit_sum_enumerate(spec: DigitSum, ys) -> float:
    """Reference evaluator: explicit loop over every label tuple."""
    probs = [softmax(np.asarray(y, dtype=np.float64)) for y in ys]
    total = 0.0
    for combo in itertools.product(range(spec.n_labels), repeat=len(spec.targets)):
        w = 1.0
        for p, j in zip(probs, combo):
            w *= p[j]
        total += abs(sum(j - i for j, i in zip(combo, spec.targets))) * w
    return total - spec.epsilon


def _softmax_pullback(y, g):
    p = softmax(y)
    return p * (g - (p * g).sum(axis=1, keepdims=True))


def gradient_batch(spec, xs, ys):
    """(dF/dx per copy, dF/dy per copy) for a batch, holding x and y independent."""
    xs, ys = _as_batches(spec, xs, ys)
    gx = [np.zeros_like(x) for x in xs]
    if isinstance(spec, Linear):
        return gx, [np.broadcast_to(spec.c, ys[0].shape).copy()]
    if isinstance(spec, SemanticSoftmax):
        d = np.broadcast_to(spec.dist, ys[0].shape)
        return gx, [_softmax_pullback(ys[0], d)]
    if isinstance(spec, DigitSum):
        probs = [softmax(y) for y in ys]
        I = sum(spec.targets)
        gy = []
        for n, y in enumerate(ys):
            others = [p for k, p in enumerate(probs) if k != n]
            rest = _sum_pmf(others) if others else np.ones((y.shape[0], 1))
            J = spec.n_labels
            g = np.zeros_like(y)
            for k in range(J):
                err = np.abs(np.arange(rest.shape[1]) + k - I)
                g[:, k] = rest @ err
            gy.append(_softmax_pullback(y, g))
        return gx, gy
    if isinstance(spec, Quadratic):
        n = xs[0].shape[1]
        a = np.hstack([np.ones((xs[0].shape[0], 1)), xs[0], ys[0]])
        g = a @ (spec.Q + spec.Q.T)
        return [g[:, 1:1 + n]], [g[:, 1 + n:]]
    if isinstance(spec, Entropy):
        lp = log_softmax(ys[0])
        p = np.exp(lp)
        h = (p * lp).sum(axis=1, keepdims=True)
        return gx, [p * (lp - h)]
    raise SchemaError(f"unknown specification type {type(spec).__name__}")


# -- LP encoding ----------------------------------------------------------------

@dataclass
class CopyVars:
    """LP variable ids of one network copy's input and output, with its bounds."""

    xvars: list
    yvars: list
    bounds: LayerBounds


@dataclass
class Encoding:
    """Result of encoding a specification into an LP.

    ``exact(xs, ys)`` evaluates, at a concrete point, the function whose
    epigraph the relaxation contains (same units as the LP value of ``z``).
    It has the sign of F everywhere.
    """

    z: int
    relaxation: RelaxationSet
    exact: Callable
    aux: dict = field(default_factory=dict)


def _expr_bounds(expr: dict, const: float, lp, rs: RelaxationSet):
    lo = hi = const
    for k, c in expr.items():
        l, u = rs.bounds.get(k, (lp.lo[k], lp.hi[k]))
        l, u = max(l, lp.lo[k]), min(u, lp.hi[k])
        if c >= 0:
            lo, hi = lo + c * l, hi + c * u
        else:
            lo, hi = lo + c * u, hi + c * l
    return lo, hi


def _define_z(lp, rs: RelaxationSet, expr: dict, const: float) -> int:
    lo, hi = _expr_bounds(expr, const, lp, rs)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InternalConsistencyError("objective expression has unbounded variables")
    z = lp.add_var("z")
    coeffs = {z: 1.0}
    for k, c in expr.items():
        coeffs[k] = coeffs.get(k, 0.0) - c
    rs.add(coeffs, EQ, const)
    pad = 1e-9 * max(1.0, abs(lo), abs(hi))
    rs.bound(z, lo - pad, hi + pad)
    return z


def _exp_terms(lp, rs, terms, n_tangents, prune, tag):
    """Accumulate sum_t coef_t * exp(arg_t) as a linear expression.

    ``terms``: iterable of (coef, expr, l, u, offset), arg = expr + offset in
    [l, u].  With ``prune``, a positive-coefficient term is replaced by its
    secant (the only side a maximizer can press against) and a negative one
    keeps only the tangent cuts; both give the same optimum as the full
    two-sided relaxation.
    """
    out: dict = {}
    const = 0.0
    for t, (coef, expr, l, u, offset) in enumerate(terms):
        if prune and coef == 0.0:
            continue
        if prune and coef > 0.0:
            if u - l < DEGENERATE_WIDTH:
                const += coef * math.exp(l)
                continue
            slope, icpt = exp_secant(l, u)
            const += coef * (slope * offset + icpt)
            for k, c in expr.items():
                out[k] = out.get(k, 0.0) + coef * slope * c
            continue
        a = lp.add_var(f"{tag}_{t}")
        sides = "lower" if prune else "both"
        rs.extend(exp_relaxation(expr, a, l, u, n_tangents, offset=offset, sides=sides))
        out[a] = out.get(a, 0.0) + coef
    return out, const


def encode_spec(spec, lp, copies: Sequence[CopyVars], n_tangents: int = DEFAULT_TANGENTS,
                prune: bool = True) -> Encoding:
    """Add C(F, S_in, S_out) to ``lp`` (via the returned relaxation) and define z."""
    if len(copies) != spec.arity:
        raise ShapeError(f"specification takes {spec.arity} network copies, got {len(copies)}")
    for cp in copies:
        if cp.bounds is None or len(cp.bounds) == 0:
            raise InternalConsistencyError("output bounds are required to encode a specification")
    rs = RelaxationSet()

    if isinstance(spec, Linear):
        y = copies[0].yvars
        z = _define_z(lp, rs, {v: c for v, c in zip(y, spec.c)}, spec.d)
        return Encoding(z, rs, lambda xs, ys: evaluate_batch(spec, xs, ys))

    if isinstance(spec, SemanticSoftmax):
        l, u = copies[0].bounds.output
        y = copies[0].yvars
        shift = float(u.max())
        coef = spec.dist - spec.epsilon
        terms = [(coef[j], {y[j]: 1.0}, l[j] - shift, u[j] - shift, -shift) for j in range(len(y))]
        expr, const = _exp_terms(lp, rs, terms, n_tangents, prune, "exp")
        z = _define_z(lp, rs, expr, const)

        def exact(xs, ys):
            _, ys = _as_batches(spec, xs, ys)
            return np.exp(ys[0] - shift) @ coef
        return Encoding(z, rs, exact, {"shift": shift})

    if isinstance(spec, DigitSum):
        shifts = [float(cp.bounds.output[1].max()) for cp in copies]
        total_shift = sum(shifts)
        cost = spec.cost_tensor()
        terms = []
        for combo in itertools.product(range(spec.n_labels), repeat=spec.arity):
            expr: dict = {}
            lo = hi = -total_shift
            for cp, j in zip(copies, combo):
                expr[cp.yvars[j]] = expr.get(cp.yvars[j], 0.0) + 1.0
                lo += cp.bounds.output[0][j]
                hi += cp.bounds.output[1][j]
            terms.append((float(cost[combo]), expr, lo, hi, -total_shift))
        expr, const = _exp_terms(lp, rs, terms, n_tangents, prune, "exps")
        z = _define_z(lp, rs, expr, const)

        def exact(xs, ys):
            _, ys = _as_batches(spec, xs, ys)
            out = np.zeros(ys[0].shape[0])
            for combo in itertools.product(range(spec.n_labels), repeat=spec.arity):
                s = sum(y[:, j] for y, j in zip(ys, combo)) - total_shift
                out += cost[combo] * np.exp(s)
            return out
        return Encoding(z, rs, exact, {"shift": total_shift})

    if isinstance(spec, Quadratic):
        cp = copies[0]
        lx, ux = cp.bounds.input
        ly, uy = cp.bounds.output
        one = lp.add_var("one", 1.0, 1.0)
        alpha = [one] + list(cp.xvars) + list(cp.yvars)
        if len(alpha) != spec.Q.shape[0]:
            raise ShapeError(f"Q has size {spec.Q.shape[0]}, (1, x, y) has {len(alpha)}")
        l = np.concatenate([[1.0], lx, ly])
        u = np.concatenate([[1.0], ux, uy])
        Q = spec.Q
        weights = {}
        n = len(alpha)
        for i in range(n):
            for j in range(i, n):
                w = Q[i, i] if i == j else Q[i, j] + Q[j, i]
                if w != 0.0 or not prune:
                    weights[i, j] = w
        X = {(i, j): lp.add_var(f"X_{i}_{j}") for (i, j) in weights}
        rs.extend(quad_relaxation(alpha, X, l, u, n_tangents, pairs=sorted(X)))
        expr = {X[key]: w for key, w in weights.items() if w != 0.0}
        z = _define_z(lp, rs, expr, 0.0)
        return Encoding(z, rs, lambda xs, ys: evaluate_batch(spec, xs, ys), {"X": X})

    if isinstance(spec, Entropy):
        l, u = copies[0].bounds.output
        y = copies[0].yvars
        shift = float(u.max())
        expr: dict = {}
        alphas = []
        for i, v in enumerate(y):
            a = lp.add_var(f"exp_{i}")
            p = lp.add_var(f"yexp_{i}")
            li, ui = l[i] - shift, u[i] - shift
            rs.extend(exp_relaxation(v, a, li, ui, n_tangents, offset=-shift))
            rs.extend(mccormick(v, a, p, l[i], u[i], math.exp(li), math.exp(ui)))
            expr[a] = spec.E - shift
            expr[p] = 1.0
            alphas.append(a)
        Zl = float(np.exp(l - shift).sum())
        Zu = float(np.exp(u - shift).sum())
        Z = lp.add_var("Z")
        coeffs = {Z: 1.0}
        for a in alphas:
            coeffs[a] = -1.0
        rs.add(coeffs, EQ, 0.0)
        t = lp.add_var("negzlogz")
        rs.extend(neg_zlogz_tangents(Z, t, Zl, Zu, n_tangents))
        expr[t] = 1.0
        z = _define_z(lp, rs, expr, 0.0)

        def exact(xs, ys):
            _, ys = _as_batches(spec, xs, ys)
            e = np.exp(ys[0] - shift)
            Zs = e.sum(axis=1)
            return ((spec.E - shift + ys[0]) * e).sum(axis=1) - Zs * np.log(Zs)
        return Encoding(z, rs, exact, {"shift": shift})

    raise SchemaError(f"unknown specification type {type(spec).__name__}")


# -- specification files ------------------------------------------------------------

def cifar10_distances() -> tuple[list[str], np.ndarray]:
    """WordNet-derived label distances for CIFAR-10 (d = 1/3 - path similarity)."""
    raw = resources.files("specverify").joinpath("data/cifar10_wordnet.json").read_text()
    obj = json.loads(raw)
    return obj["labels"], np.array(obj["distance"], dtype=np.float64)


KINDS = ("linear", "semantic", "digit_sum", "quadratic", "energy", "entropy")


@dataclass(frozen=True)
class SpecConfig:
    """A specification file: either a fixed spec or one filled in per example from labels."""

    kind: str
    params: dict

    @property
    def arity(self) -> int:
        if self.kind == "digit_sum":
            return int(self.params.get("n", len(self.params.get("targets", ())) or 2))
        return 1

    def instantiate(self, labels: Sequence[int] = ()) -> Specification:
        p = self.params
        if self.kind == "linear":
            return Linear(p["c"], p.get("d", 0.0))
        if self.kind == "quadratic":
            return Quadratic(p["Q"])
        if self.kind == "energy":
            return build_energy_Q(EnergyParams(**{k: p[k] for k in ("mass", "length", "gravity", "scale") if k in p}))
        if self.kind == "entropy":
            return Entropy(p.get("E", DEFAULT_ENTROPY_FLOOR))
        if self.kind == "semantic":
            eps = p.get("epsilon", DEFAULT_SEMANTIC_EPS)
            if "dist" in p:
                return SemanticSoftmax(p["dist"], eps)
            if not labels:
                raise ConfigError("semantic specification needs the true label")
            M = p.get("distance_matrix", "cifar10")
            M = cifar10_distances()[1] if M == "cifar10" else np.asarray(M, dtype=np.float64)
            return SemanticSoftmax(M[int(labels[0])], eps)
        if self.kind == "digit_sum":
            targets = p.get("targets") or list(labels)[:self.arity]
            if len(targets) != self.arity:
                raise ConfigError(f"digit-sum needs {self.arity} labels, got {len(targets)}")
            return DigitSum(tuple(targets), p.get("n_labels", 10), p.get("epsilon", DEFAULT_DIGIT_SUM_EPS))
        raise SchemaError(f"unknown specification kind {self.kind!r}")


def spec_config_from_dict(obj) -> SpecConfig:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SchemaError("specification must be a JSON object with a 'kind' field")
    kind = obj["kind"]
    if kind not in KINDS:
        raise SchemaError(f"unknown specification kind {kind!r}; expected one of {', '.join(KINDS)}")
    params = {k: v for k, v in obj.items() if k != "kind"}
    required = {"linear": ("c",), "quadratic": ("Q",)}.get(kind, ())
    for key in required:
        if key not in params:
            raise SchemaError(f"{kind} specification is missing field {key!r}")
    cfg = SpecConfig(kind, params)
    if kind == "digit_sum" and not 1 <= cfg.arity <= 4:
        raise ConfigError("digit-sum N must be between 1 and 4")
    return cfg


def load_spec(path) -> SpecConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return spec_config_from_dict(obj)


def spec_to_dict(spec) -> dict:
    if isinstance(spec, Linear):
        return {"kind": "linear", "c": spec.c.tolist(), "d": spec.d}
    if isinstance(spec, SemanticSoftmax):
        return {"kind": "semantic", "dist": spec.dist.tolist(), "epsilon": spec.epsilon}
    if isinstance(spec, DigitSum):
        return {"kind": "digit_sum", "n": spec.arity, "targets": list(spec.targets),
                "n_labels": spec.n_labels, "epsilon": spec.epsilon}
    if isinstance(spec, Quadratic):
        return {"kind": "quadratic", "Q": spec.Q.tolist()}
    if isinstance(spec, Entropy):
        return {"kind": "entropy", "E": spec.E}
    raise SchemaError(f"unknown specification type {type(spec).__name__}")
