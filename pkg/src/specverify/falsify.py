"""Projected gradient ascent on F(x, f(x)) over the input box(es)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounds import InputRegion
from .errors import ConfigError, InternalConsistencyError, NumericError, ShapeError
from .network import Network, backward_input, forward_batch, forward_trace
from .specs import eval_spec, evaluate_batch, gradient_batch

DEFAULT_STEPS = 100
DEFAULT_RESTARTS = 20


@dataclass(frozen=True)
class AttackConfig:
    """PGD settings; ``step_size=None`` means delta/4 per copy."""

    steps: int = DEFAULT_STEPS
    step_size: float | None = None
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.restarts < 1:
            raise ConfigError("PGD needs at least one step and one restart")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigError("PGD step size must be positive")


@dataclass
class Witness:
    inputs: list
    value: float


def objective_and_grad(nets: Sequence[Network], spec, xs):
    """F(x, f(x)) and its gradient w.r.t. each copy's input, batched over rows."""
    traces = [forward_trace(net, x) for net, x in zip(nets, xs)]
    ys = [t[-1] for t in traces]
    vals = evaluate_batch(spec, list(xs), ys)
    gx, gy = gradient_batch(spec, list(xs), ys)
    grads = [gxi + backward_input(net, t, gyi) for net, t, gxi, gyi in zip(nets, traces, gx, gy)]
    return vals, grads


def _restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2 ** 64 - 1), restart]))


def _starts(regions, cfg):
    boxes = [r.box() for r in regions]
    starts = [np.empty((cfg.restarts, lo.shape[0])) for lo, _ in boxes]
    for r in range(cfg.restarts):
        if r == 0:
            for n, reg in enumerate(regions):
                starts[n][0] = reg.project(reg.center)
            continue
        rng = _restart_rng(cfg.seed, r)
        for n, (lo, hi) in enumerate(boxes):
            starts[n][r] = lo + (hi - lo) * rng.random(lo.shape[0])
    return starts, boxes


def pgd_falsify(nets: Sequence[Network], spec, regions: Sequence[InputRegion],
                cfg: AttackConfig = AttackConfig()) -> Witness | None:
    """Search for x in the box(es) with F(x, f(x)) > 0.

    Each restart takes signed-gradient steps (the l_inf steepest-ascent
    direction) and remembers its best iterate.  The returned witness is
    re-evaluated with the exact single-point evaluator and checked for box
    membership.
    """
    if not (len(nets) == len(regions) == spec.arity):
        raise ShapeError(f"specification takes {spec.arity} copies; got {len(nets)} nets, {len(regions)} regions")
    for net, reg in zip(nets, regions):
        if reg.center.shape[0] != net.input_dim:
            raise ShapeError(f"region has dimension {reg.center.shape[0]}, network expects {net.input_dim}")
    xs, boxes = _starts(regions, cfg)
    etas = [cfg.step_size if cfg.step_size is not None else reg.delta / 4.0 for reg in regions]

    best_val = np.full(cfg.restarts, -np.inf)
    best_x = [x.copy() for x in xs]
    for step in range(cfg.steps + 1):
        vals, grads = objective_and_grad(nets, spec, xs)
        better = vals > best_val
        best_val = np.where(better, vals, best_val)
        for n in range(len(xs)):
            best_x[n][better] = xs[n][better]
        if step == cfg.steps:
            break
        for n, ((lo, hi), g) in enumerate(zip(boxes, grads)):
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite PGD gradient at step {step}")
            xs[n] = np.clip(xs[n] + etas[n] * np.sign(g), lo, hi)

    r = int(np.argmax(best_val))
    if not best_val[r] > 0:
        return None
    cand = [bx[r].copy() for bx in best_x]
    for x, (lo, hi) in zip(cand, boxes):
        if np.any(x < lo) or np.any(x > hi):
            raise InternalConsistencyError("PGD iterate left its input box")
    ys = [forward_batch(net, x[None, :])[0] for net, x in zip(nets, cand)]
    value = eval_spec(spec, cand, ys)
    if not value > 0:
        return None
    return Witness(cand, value)
