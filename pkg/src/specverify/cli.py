"""Command-line interface.

Exit codes: 0 success, 1 specification falsified, 2 usage error, 3 runtime error.
Reports go to stdout as ``KEY=value`` lines.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import InputRegion
from .datasets import PIXEL_RANGE, LabeledDataset, load_mnist_dir, load_pendulum_csv
from .errors import ConfigError, SpecVerifyError
from .falsify import DEFAULT_RESTARTS, DEFAULT_STEPS, AttackConfig, pgd_falsify
from .network import forward_batch, load_model, save_model
from .physics import PendulumData, PendulumParams, generate_dataset, save_csv
from .relax import DEFAULT_TANGENTS
from .specs import load_spec, spec_config_from_dict, KINDS
from .train import (LOSS_KINDS, default_config, mnist_model, pendulum_model, train,
                    write_log)
from .verify import (Status, SweepConfig, SweepTask, VerifyOptions, default_jobs, sweep,
                     verify_example)

EXIT_OK, EXIT_FALSIFIED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
SEED_ENV = "SPECVERIFY_SEED"
SURFACE_HEADER = ("s", "t", "label")


class UsageError(Exception):
    pass


# -- helpers -------------------------------------------------------------------

def resolve_seed(arg):
    if arg is not None:
        return arg
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"{what} is empty")
    return vals


def _ints(text: str, what: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None


def _emit(**kv):
    for k, v in kv.items():
        print(f"{k.upper()}={v}")


class Data:
    """Uniform view of an image dataset or a pendulum CSV for verification."""

    def __init__(self, path, split: str):
        p = Path(path)
        if p.is_dir():
            ds: LabeledDataset = load_mnist_dir(p, "train" if split == "train" else "test")
            self.images = True
            self.x, self.labels = ds.inputs, ds.labels
        else:
            pd: PendulumData = load_pendulum_csv(p)
            if split != "all":
                tr, te = pd.split()
                pd = tr if split == "train" else te
            self.images = False
            self.x, self.labels = pd.x, None

    def __len__(self):
        return self.x.shape[0]

    @property
    def clip(self):
        return (0.0, 1.0) if self.images else None

    def delta(self, d: float) -> float:
        return d / PIXEL_RANGE if self.images else d

    def task(self, spec_cfg, index: int) -> SweepTask:
        n = spec_cfg.arity
        if index < 0 or index + n > len(self):
            raise UsageError(f"input index {index} (+{n - 1}) outside dataset of {len(self)} examples")
        idx = range(index, index + n)
        labels = [int(self.labels[i]) for i in idx] if self.labels is not None else []
        return SweepTask(tuple(self.x[i] for i in idx), spec_cfg.instantiate(labels))


def _spec(arg):
    if arg in KINDS and not Path(arg).exists():
        return spec_config_from_dict({"kind": arg})
    return load_spec(arg)


def _attack(args, seed):
    return AttackConfig(args.pgd_steps, args.pgd_step_size, args.pgd_restarts, seed)


def _options(args, seed, falsify=True):
    return VerifyOptions(n_tangents=args.n_tangents, tighten=args.tighten_bounds,
                         falsify=falsify, attack=_attack(args, seed), backend=args.backend)


# -- commands ---------------------------------------------------------------------

def cmd_simulate(args, seed):
    if args.n < 1:
        raise UsageError("--n must be positive")
    p = PendulumParams(damping=args.damping, dt=args.dt, dt_inner=args.dt_inner)
    data = generate_dataset(args.n, seed, p)
    save_csv(data, args.out)
    _emit(pairs=len(data), out=args.out, seed=seed)
    return EXIT_OK


def cmd_train(args, seed):
    p = Path(args.data)
    classification = args.loss in ("ce", "ce-adv")
    if classification:
        if not p.is_dir():
            raise UsageError(f"--loss {args.loss} needs a directory of MNIST IDX files")
        tr, te = load_mnist_dir(p, "train"), load_mnist_dir(p, "test")
        xtr, ytr, test = tr.inputs, tr.labels, (te.inputs, te.labels)
        net = mnist_model(seed)
    else:
        if p.is_dir():
            raise UsageError(f"--loss {args.loss} needs a pendulum CSV file")
        tr, te = load_pendulum_csv(p).split()
        xtr, ytr, test = tr.x, tr.y, (te.x, te.y)
        net = pendulum_model(seed)
    kw = dict(epochs=args.epochs, batch_size=args.batch_size, seed=seed)
    if args.lr is not None:
        kw["lr"] = args.lr
    if args.adv_delta is not None:
        kw["adv_delta"] = args.adv_delta / PIXEL_RANGE
    cfg = default_config(args.loss, **kw)
    net, history = train(net, xtr, ytr, cfg, test=test)
    save_model(net, args.out)
    if args.log:
        write_log(history, args.log)
    metric = history[-1].test_metric if history else float("nan")
    _emit(out=args.out, epochs=cfg.epochs, test_metric=repr(metric))
    return EXIT_OK


def _single(args, seed):
    net = load_model(args.model)
    spec_cfg = _spec(args.spec)
    data = Data(args.dataset, args.split)
    task = data.task(spec_cfg, args.input_index)
    if args.delta < 0:
        raise UsageError("--delta must be nonnegative")
    lo, hi = data.clip or (None, None)
    regions = [InputRegion(c, data.delta(args.delta), lo, hi) for c in task.centers]
    return net, task, regions


def cmd_verify(args, seed):
    net, task, regions = _single(args, seed)
    nets = [net] * task.spec.arity
    out = verify_example(nets, task.spec, regions, _options(args, seed, not args.no_falsify),
                         dump_lp=args.dump_lp)
    _emit(status=out.status.value.upper(), lp_max=repr(float(out.relaxation_optimum)),
          lp_iterations=out.lp_iterations)
    if out.status is Status.VERIFIED:
        print(f"VERIFIED, lp_max={float(out.relaxation_optimum)!r}")
        return EXIT_OK
    if out.status is Status.FALSIFIED:
        _emit(witness_value=repr(out.witness.value))
        print(f"FALSIFIED, f_max={out.witness.value!r}")
        return EXIT_FALSIFIED
    print(f"UNKNOWN, lp_max={float(out.relaxation_optimum)!r}")
    return EXIT_OK


def cmd_falsify(args, seed):
    net, task, regions = _single(args, seed)
    w = pgd_falsify([net] * task.spec.arity, task.spec, regions, _attack(args, seed))
    if w is None:
        _emit(status="NOT_FALSIFIED")
        return EXIT_OK
    _emit(status="FALSIFIED", witness_value=repr(w.value))
    if args.witness:
        with open(args.witness, "w") as fh:
            json.dump({"inputs": [x.tolist() for x in w.inputs], "value": w.value}, fh)
    return EXIT_FALSIFIED


def cmd_sweep(args, seed):
    net = load_model(args.model)
    spec_cfg = _spec(args.spec)
    data = Data(args.dataset, args.split)
    deltas = _floats(args.deltas, "--deltas")
    if any(d < 0 for d in deltas):
        raise UsageError("--deltas must be nonnegative")
    n = spec_cfg.arity
    count = len(data) // n if args.limit is None else args.limit
    if count < 1 or count * n > len(data):
        raise UsageError(f"--limit {args.limit} needs {count * n} examples; dataset has {len(data)}")
    tasks = [data.task(spec_cfg, i * n) for i in range(count)]
    cfg = SweepConfig(_options(args, seed), data.clip, args.jobs or default_jobs(), args.timing)
    report = sweep([net] * n, tasks, [data.delta(d) for d in deltas], cfg)
    text = report.to_csv()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        _emit(rows=len(report.rows), out=args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def decision_surface(net, a, b, c, grid_n: int = 101, lo: float = -0.2, hi: float = 1.2):
    """Argmax labels on the plane a + s(b - a) + t(c - a), clipped to [0, 1]."""
    a, b, c = (np.asarray(v, dtype=np.float64) for v in (a, b, c))
    if not (a.shape == b.shape == c.shape == (net.input_dim,)):
        raise ConfigError(f"surface images must all have dimension {net.input_dim}")
    if grid_n < 2:
        raise ConfigError("surface grid needs at least 2 points per axis")
    axis = np.linspace(lo, hi, grid_n)
    rows = []
    for s in axis:
        X = np.clip(a + s * (b - a) + axis[:, None] * (c - a), 0.0, 1.0)
        labels = np.argmax(forward_batch(net, X), axis=1)  # first index wins ties
        rows.extend((float(s), float(t), int(k)) for t, k in zip(axis, labels))
    return rows


def cmd_surface(args, seed):
    net = load_model(args.model)
    idx = _ints(args.images, "--images")
    if len(idx) != 3:
        raise UsageError("--images takes exactly three indices a,b,c")
    data = Data(args.dataset, "test")
    for i in idx:
        if not 0 <= i < len(data):
            raise UsageError(f"image index {i} outside dataset of {len(data)}")
    lo, hi = _floats(args.range, "--range")[:2] if args.range else (-0.2, 1.2)
    rows = decision_surface(net, *(data.x[i] for i in idx), grid_n=args.grid, lo=lo, hi=hi)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SURFACE_HEADER)
        for s, t, k in rows:
            w.writerow([repr(s), repr(t), k])
    _emit(points=len(rows), labels=len({r[2] for r in rows}), out=args.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def _seed_flag(p):
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: ${SEED_ENV} or 0)")


def _verify_flags(p, sweep_mode=False):
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--spec", required=True,
                   help="specification JSON file, or a kind name with default parameters")
    p.add_argument("--dataset", required=True,
                   help="directory of MNIST IDX files, or a pendulum CSV")
    p.add_argument("--split", choices=("train", "test", "all"), default="test",
                   help="which part of the dataset to use (CSV: last 30%% is test)")
    if not sweep_mode:
        p.add_argument("--input-index", type=int, required=True)
        p.add_argument("--delta", type=float, required=True,
                       help="perturbation radius (images: in 1/255 pixel units)")
    p.add_argument("--n-tangents", type=int, default=DEFAULT_TANGENTS)
    p.add_argument("--tighten-bounds", action="store_true",
                   help="tighten interval bounds with per-neuron LPs")
    p.add_argument("--backend", choices=("cython", "python"), default=None)
    p.add_argument("--pgd-steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--pgd-restarts", type=int, default=DEFAULT_RESTARTS)
    p.add_argument("--pgd-step-size", type=float, default=None,
                   help="PGD step (default: delta/4)")
    _seed_flag(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specverify", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate pendulum (state, next state) pairs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--damping", type=float, default=0.1)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--dt-inner", type=float, default=0.001)
    _seed_flag(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a pendulum or MNIST model")
    p.add_argument("--data", required=True)
    p.add_argument("--loss", choices=LOSS_KINDS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--adv-delta", type=float, default=None,
                   help="ce-adv radius in 1/255 pixel units")
    p.add_argument("--log", default=None, help="write epoch,train_loss,test_metric CSV")
    _seed_flag(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="certify one example, falling back to PGD")
    _verify_flags(p)
    p.add_argument("--dump-lp", default=None, help="write the LP in CPLEX LP format")
    p.add_argument("--no-falsify", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("falsify", help="run PGD on one example")
    _verify_flags(p)
    p.add_argument("--witness", default=None, help="write the witness as JSON")
    p.set_defaults(func=cmd_falsify)

    p = sub.add_parser("sweep", help="verification/adversarial bounds over deltas")
    _verify_flags(p, sweep_mode=True)
    p.add_argument("--deltas", default="0,0.02,0.04,0.06")
    p.add_argument("--out", default=None)
    p.add_argument("--limit", type=int, default=None, help="number of examples")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: cores)")
    p.add_argument("--timing", action="store_true",
                   help="record wall_ms (otherwise 0 so reports are reproducible)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("surface", help="decision regions on the plane through three images")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True, help="directory of MNIST IDX files")
    p.add_argument("--images", required=True, help="three test indices a,b,c")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--range", default=None, help="lo,hi for s and t (default -0.2,1.2)")
    p.add_argument("--out", required=True)
    _seed_flag(p)
    p.set_defaults(func=cmd_surface)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        seed = resolve_seed(args.seed)
        return args.func(args, seed)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"specverify: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SpecVerifyError, OSError) as exc:
        print(f"specverify: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
