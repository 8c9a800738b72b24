"""Verification pipeline: bounds, relaxation, LP, then falsification."""
from __future__ import annotations

import csv
import io
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .bounds import InputRegion, LayerBounds, propagate_bounds
from .errors import ConfigError, InternalConsistencyError, ShapeError
from .falsify import AttackConfig, Witness, pgd_falsify
from .lp import LinearProgram, LpStatus, solve
from .network import Affine, Network, forward_batch
from .relax import DEFAULT_TANGENTS, EQ, relu_relaxation
from .specs import CopyVars, encode_spec, evaluate_batch

CERT_MARGIN = 1e-6
MAX_ORACLE_DIM = 4
DEFAULT_GRID = 62
ORACLE_CHUNK = 1 << 16

REPORT_HEADER = ("delta", "verification_bound", "adversarial_bound", "n_examples",
                 "mean_lp_value", "wall_ms")


class Status(str, Enum):
    VERIFIED = "Verified"
    UNKNOWN = "Unknown"
    FALSIFIED = "Falsified"


@dataclass
class VerificationOutcome:
    status: Status
    relaxation_optimum: float | None = None
    witness: Witness | None = None
    lp_iterations: int = 0

    @property
    def verified(self) -> bool:
        return self.status is Status.VERIFIED


@dataclass(frozen=True)
class VerifyOptions:
    n_tangents: int = DEFAULT_TANGENTS
    prune: bool = True
    margin: float = CERT_MARGIN
    tighten: bool = False
    falsify: bool = True
    attack: AttackConfig = field(default_factory=AttackConfig)
    backend: str | None = None


# -- LP construction ------------------------------------------------------------

def encode_network(lp: LinearProgram, net: Network, bounds: LayerBounds, tag: str = "",
                   upto: int | None = None) -> list[list[int]]:
    """Add activation variables for layers ``0..upto`` with their relaxations.

    Returns the variable ids of every activation (index 0 is the input).
    """
    last = len(net.layers) if upto is None else upto + 1
    acts = [lp.add_vars(f"{tag}x0", bounds.lower[0], bounds.upper[0])]
    for k in range(last):
        layer = net.layers[k]
        lo, hi = bounds.lower[k + 1], bounds.upper[k + 1]
        cur = lp.add_vars(f"{tag}x{k + 1}", lo, hi)
        prev = acts[-1]
        if isinstance(layer, Affine):
            W, b = layer.weight, layer.bias
            for i, v in enumerate(cur):
                coeffs = {v: 1.0}
                for j in np.flatnonzero(W[i]):
                    coeffs[prev[j]] = -float(W[i, j])
                lp.add_constraint(coeffs, EQ, float(b[i]))
        else:
            l_pre, u_pre = bounds.lower[k], bounds.upper[k]
            for i, (v, a) in enumerate(zip(prev, cur)):
                lp.add_relaxation(relu_relaxation(v, a, float(l_pre[i]), float(u_pre[i])))
        acts.append(cur)
    return acts


def build_lp(nets: Sequence[Network], spec, regions: Sequence[InputRegion],
             bounds: Sequence[LayerBounds] | None = None, n_tangents: int = DEFAULT_TANGENTS,
             prune: bool = True, tighten: bool = False):
    """Assemble the relaxed verification program: maximize z over every copy's relaxation."""
    if not (len(nets) == len(regions) == spec.arity):
        raise ShapeError(f"specification takes {spec.arity} copies; got {len(nets)} nets, {len(regions)} regions")
    if bounds is None:
        bounds = [propagate_bounds(net, reg, tighten=tighten) for net, reg in zip(nets, regions)]
    lp = LinearProgram(f"verify_{type(spec).__name__}")
    copies = []
    for n, (net, b) in enumerate(zip(nets, bounds)):
        acts = encode_network(lp, net, b, tag=f"c{n}_" if len(nets) > 1 else "")
        copies.append(CopyVars(acts[0], acts[-1], b))
    enc = encode_spec(spec, lp, copies, n_tangents=n_tangents, prune=prune)
    lp.add_relaxation(enc.relaxation)
    lp.maximize({enc.z: 1.0})
    return lp, enc, copies


def relaxation_optimum(nets, spec, regions, options: VerifyOptions = VerifyOptions(),
                       dump_lp=None) -> tuple[float, int]:
    lp, _, _ = build_lp(nets, spec, regions, n_tangents=options.n_tangents,
                        prune=options.prune, tighten=options.tighten)
    if dump_lp is not None:
        with open(dump_lp, "w") as fh:
            fh.write(lp.to_lp_text())
    sol = solve(lp, backend=options.backend)
    if sol.status is not LpStatus.OPTIMAL:
        # the nominal point is always feasible and every variable is boxed
        raise InternalConsistencyError(f"relaxed verification LP reported {sol.status.value}")
    return sol.objective, sol.iterations


def tighten_layer(net: Network, bounds: LayerBounds, k: int):
    """Re-bound the output of affine layer ``k`` by LP over the relaxed prefix."""
    lo, hi = bounds.lower[k + 1].copy(), bounds.upper[k + 1].copy()
    if k == 0:
        return lo, hi  # interval arithmetic is exact on the first affine map
    lp = LinearProgram(f"tighten_{k}")
    acts = encode_network(lp, net, bounds, upto=k)
    for i, v in enumerate(acts[-1]):
        if hi[i] - lo[i] < 1e-12:
            continue
        for sign in (1.0, -1.0):
            lp.maximize({v: sign})
            sol = solve(lp)
            if sol.status is not LpStatus.OPTIMAL:
                raise InternalConsistencyError(f"bound-tightening LP reported {sol.status.value}")
            if sign > 0:
                hi[i] = min(hi[i], sol.objective + 1e-9)
            else:
                lo[i] = max(lo[i], -sol.objective - 1e-9)
    return lo, np.maximum(hi, lo)


def verify_example(nets, spec, regions, options: VerifyOptions = VerifyOptions(),
                   dump_lp=None) -> VerificationOutcome:
    """Certify F <= 0 over the region(s), else try to falsify it."""
    opt, iters = relaxation_optimum(nets, spec, regions, options, dump_lp)
    if opt < -options.margin:
        return VerificationOutcome(Status.VERIFIED, opt, None, iters)
    if options.falsify:
        w = pgd_falsify(nets, spec, regions, options.attack)
        if w is not None:
            return VerificationOutcome(Status.FALSIFIED, opt, w, iters)
    return VerificationOutcome(Status.UNKNOWN, opt, None, iters)


# -- exhaustive baseline ----------------------------------------------------------

def grid_oracle(nets, spec, regions, points_per_dim: int = DEFAULT_GRID) -> float:
    """Max of F over a regular grid (corners included) of the input box(es)."""
    if not (len(nets) == len(regions) == spec.arity):
        raise ShapeError("arity mismatch between specification, networks and regions")
    axes = []
    for reg in regions:
        lo, hi = reg.box()
        for a, b in zip(lo, hi):
            axes.append(np.array([a]) if a == b else np.linspace(a, b, points_per_dim))
    if len(axes) > MAX_ORACLE_DIM:
        raise ConfigError(f"grid oracle is limited to {MAX_ORACLE_DIM} total input dimensions, got {len(axes)}")
    if points_per_dim < 2:
        raise ConfigError("grid oracle needs at least 2 points per axis")
    dims = [reg.center.shape[0] for reg in regions]
    best = -math.inf
    # iterate over leading axes, vectorize over the trailing ones
    split = len(axes)
    while split > 0 and math.prod(len(a) for a in axes[split - 1:]) <= ORACLE_CHUNK:
        split -= 1
    tail = np.stack(np.meshgrid(*axes[split:], indexing="ij"), axis=-1).reshape(-1, len(axes) - split) \
        if split < len(axes) else np.zeros((1, 0))
    for head in itertools.product(*axes[:split]):
        chunk = np.hstack([np.broadcast_to(np.array(head, dtype=np.float64), (tail.shape[0], split)), tail])
        xs, ys, off = [], [], 0
        for net, d in zip(nets, dims):
            x = chunk[:, off:off + d]
            off += d
            xs.append(x)
            ys.append(forward_batch(net, x))
        best = max(best, float(evaluate_batch(spec, xs, ys).max()))
    return best


# -- dataset sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class SweepTask:
    """One example: the input centers (one per copy) and the concrete specification."""

    centers: tuple
    spec: object


@dataclass(frozen=True)
class SweepConfig:
    options: VerifyOptions = VerifyOptions()
    clip: tuple | None = None
    jobs: int = 1
    timing: bool = False


@dataclass
class ExampleResult:
    index: int
    verified: bool
    falsified: bool
    lp_value: float


@dataclass
class SweepRow:
    delta: float
    verification_bound: float
    adversarial_bound: float
    n_examples: int
    mean_lp_value: float
    wall_ms: float


@dataclass
class SweepReport:
    rows: list

    def check(self):
        for r in self.rows:
            if not 0.0 <= r.verification_bound <= r.adversarial_bound <= 1.0:
                raise InternalConsistencyError(f"sandwich violated at delta={r.delta}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in self.rows:
            w.writerow([_g6(r.delta), _g6(r.verification_bound), _g6(r.adversarial_bound),
                        r.n_examples, _g6(r.mean_lp_value), _g6(r.wall_ms)])
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _g6(v: float) -> str:
    return f"{v:.6g}"


def _run_example(args) -> ExampleResult:
    index, nets, task, delta, cfg = args
    opts = cfg.options
    lo, hi = cfg.clip if cfg.clip is not None else (None, None)
    regions = [InputRegion(c, delta, lo, hi) for c in task.centers]
    value, _ = relaxation_optimum(nets, task.spec, regions, opts)
    verified = bool(value < -opts.margin)
    attack = AttackConfig(opts.attack.steps, opts.attack.step_size, opts.attack.restarts,
                          _example_seed(opts.attack.seed, index))
    w = pgd_falsify(nets, task.spec, regions, attack)
    if verified and w is not None:
        raise InternalConsistencyError(
            f"example {index}: certified (lp={value:.3g}) yet falsified (F={w.value:.3g})")
    return ExampleResult(index, verified, w is not None, float(value))


def _example_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed) & (2 ** 64 - 1), index]).generate_state(1, np.uint64)[0])


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def sweep(nets: Sequence[Network], tasks: Sequence[SweepTask], deltas: Sequence[float],
          cfg: SweepConfig = SweepConfig()) -> SweepReport:
    """Verification and adversarial bounds over a test set for each delta."""
    if not tasks:
        raise ConfigError("sweep needs at least one example")
    rows = []
    pool = ProcessPoolExecutor(cfg.jobs) if cfg.jobs > 1 else None
    try:
        for delta in deltas:
            if not delta >= 0:
                raise ConfigError(f"perturbation radius must be nonnegative, got {delta}")
            t0 = time.perf_counter()
            work = [(i, nets, t, float(delta), cfg) for i, t in enumerate(tasks)]
            results = list(pool.map(_run_example, work)) if pool else [_run_example(w) for w in work]
            results.sort(key=lambda r: r.index)
            n = len(results)
            wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
            rows.append(SweepRow(
                float(delta),
                sum(r.verified for r in results) / n,
                sum(not r.falsified for r in results) / n,
                n,
                math.fsum(r.lp_value for r in results) / n,
                wall,
            ))
    finally:
        if pool is not None:
            pool.shutdown()
    report = SweepReport(rows)
    report.check()
    return report
