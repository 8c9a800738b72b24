"""Shared fixtures-by-function for the test suite: oracles and cached models."""
from __future__ import annotations

import functools
import itertools
import math
from pathlib import Path

import numpy as np

from specverify.datasets import load_mnist_dir
from specverify.physics import generate_dataset
from specverify.relax import EQ, GE, LE
from specverify.network import Affine, forward_trace
from specverify.train import (_energy, default_config, input_gradient, mnist_model, pendulum_model,
                             train)

ROOT = Path(__file__).resolve().parents[1]
MNIST_DIR = ROOT / "data" / "mnist"

PENDULUM_PAIRS = 90000
PENDULUM_EPOCHS = 30
MNIST_EPOCHS = 20

# acceptance results collected for the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


# -- relaxation checks ---------------------------------------------------------------

def worst_violation(rs, values: dict) -> float:
    """Largest constraint/bound violation over vectorized samples."""
    worst = 0.0
    for c in rs.constraints:
        lhs = sum(a * values[k] for k, a in c.coeffs.items())
        if c.sense == LE:
            v = lhs - c.rhs
        elif c.sense == GE:
            v = c.rhs - lhs
        else:
            v = np.abs(lhs - c.rhs)
        worst = max(worst, float(np.max(v)))
    for k, (lo, hi) in rs.bounds.items():
        worst = max(worst, float(np.max(lo - values[k])), float(np.max(values[k] - hi)))
    return worst



# -- LP oracle ------------------------------------------------------------------

def vertex_enumeration(c, A, senses, b, lo, hi, tol=1e-7):
    """Max c.x over {A x (senses) b, lo <= x <= hi} by enumerating basic solutions.

    Returns None when no vertex is feasible (empty polytope).
    """
    n = len(c)
    rows, rhs, eq = [], [], []
    for a, s, v in zip(A, senses, b):
        rows.append(a)
        rhs.append(v)
        eq.append(s == EQ)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        rows += [e, e]
        rhs += [lo[i], hi[i]]
        eq += [False, False]
    rows, rhs = np.array(rows), np.array(rhs)
    must = [i for i, q in enumerate(eq) if q]
    free = [i for i, q in enumerate(eq) if not q]
    k = n - len(must)
    if k < 0:
        return None
    combos = np.array([must + list(cmb) for cmb in itertools.combinations(free, k)])
    M = rows[combos]
    r = rhs[combos]
    ok = np.abs(np.linalg.det(M)) > 1e-9
    M, r = M[ok], r[ok]
    if M.shape[0] == 0:
        return None
    X = np.linalg.solve(M, r[..., None])[..., 0]
    feas = np.all(X >= np.asarray(lo) - tol, axis=1) & np.all(X <= np.asarray(hi) + tol, axis=1)
    for a, s, v in zip(A, senses, b):
        lhs = X @ a
        scale = tol * max(1.0, abs(v))
        if s == LE:
            feas &= lhs <= v + scale
        elif s == GE:
            feas &= lhs >= v - scale
        else:
            feas &= np.abs(lhs - v) <= scale
    if not feas.any():
        return None
    return float((X[feas] @ np.asarray(c)).max())


def random_lp(rng, n=None, m=None, feasible=True):
    """A random bounded LP as (c, A, senses, b, lo, hi)."""
    n = n or int(rng.integers(1, 7))
    m = m if m is not None else int(rng.integers(1, 11))
    lo = rng.uniform(-5, 0, n).round(2)
    hi = lo + rng.uniform(0.5, 6, n).round(2)
    A = rng.normal(size=(m, n)).round(2)
    A[rng.random((m, n)) < 0.25] = 0.0
    for i in range(m):
        if not A[i].any():
            A[i, rng.integers(n)] = 1.0
    senses = list(rng.choice([LE, LE, GE, EQ], size=m))
    n_eq = 0
    for i, s in enumerate(senses):
        if s == EQ:
            n_eq += 1
            if n_eq > max(1, n - 1):
                senses[i] = LE
    x0 = rng.uniform(lo, hi)
    b = A @ x0
    for i, s in enumerate(senses):
        if s == LE:
            b[i] += rng.uniform(0, 2)
        elif s == GE:
            b[i] -= rng.uniform(0, 2)
    if not feasible:
        b = b + rng.normal(scale=4.0, size=m)
    c = rng.normal(size=n).round(2)
    return c, A, senses, b, lo, hi


def to_program(c, A, senses, b, lo, hi):
    from specverify.lp import LinearProgram
    lp = LinearProgram("random")
    xs = [lp.add_var(f"x{i}", lo[i], hi[i]) for i in range(len(c))]
    for a, s, v in zip(A, senses, b):
        coeffs = {xs[j]: float(a[j]) for j in range(len(c)) if a[j] != 0}
        lp.add_constraint(coeffs, s, float(v))
    lp.maximize({xs[j]: float(c[j]) for j in range(len(c))})
    return lp


# -- cached data and models ---------------------------------------------------------

@functools.lru_cache(maxsize=None)
def pendulum_data():
    return generate_dataset(PENDULUM_PAIRS, seed=0).split()


@functools.lru_cache(maxsize=None)
def pendulum_models():
    """(Model A: l1 + energy, Model B: l1), fixed seeds."""
    tr, te = pendulum_data()
    out = []
    for kind in ("l1+energy", "l1"):
        cfg = default_config(kind, epochs=PENDULUM_EPOCHS, seed=0)
        net, _ = train(pendulum_model(0, name=kind), tr.x, tr.y, cfg, test=(te.x, te.y))
        out.append(net)
    return tuple(out)


@functools.lru_cache(maxsize=None)
def mnist_data():
    return load_mnist_dir(MNIST_DIR, "train"), load_mnist_dir(MNIST_DIR, "test")


@functools.lru_cache(maxsize=None)
def mnist_net():
    tr, te = mnist_data()
    net, _ = train(mnist_model(0), tr.inputs, tr.labels,
                   default_config("ce", epochs=MNIST_EPOCHS, seed=0), test=(te.inputs, te.labels))
    return net


# -- gradient checks ----------------------------------------------------------------

def _relu_kink(net, x):
    acts = forward_trace(net, x)
    return any(np.min(np.abs(acts[k])) < 1e-3 for k, l in enumerate(net.layers) if not isinstance(l, Affine))


def _attack_kink(net, x, labels, cfg):
    # the attack point jumps when an input-gradient sign flips
    lo, hi = np.clip(x - cfg.adv_delta, 0, 1), np.clip(x + cfg.adv_delta, 0, 1)
    xa = x.copy()
    for _ in range(cfg.adv_steps):
        if _relu_kink(net, xa):
            return True
        _, g = input_gradient(net, xa, labels, cfg)
        if np.min(np.abs(g)) < 1e-6:
            return True
        xa = np.clip(xa + 2.5 * cfg.adv_delta / cfg.adv_steps * np.sign(g), lo, hi)
    return _relu_kink(net, xa)


def near_kink(net, x, target, cfg):
    kind, p = cfg.kind, cfg.pendulum
    if _relu_kink(net, x):
        return True
    if kind == "ce-adv":
        return _attack_kink(net, x, target, cfg)
    acts = forward_trace(net, x)
    if kind in ("l1", "l1+energy"):
        y = acts[-1]
        if np.min(np.abs(y - target)) < 1e-3:
            return True
        if kind == "l1+energy":
            e = lambda v: _energy(v, p)[0]  # noqa: E731
            return np.min(np.abs(e(y) - e(target))) < 1e-3 or np.min(np.abs(e(y) - e(x))) < 1e-3
    return False


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / den)


def central_difference(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def finite(v) -> bool:
    return math.isfinite(v)
