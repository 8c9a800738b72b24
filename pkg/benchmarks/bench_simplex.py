"""Time the compiled simplex kernel against the numpy fallback.

    python3 benchmarks/bench_simplex.py [--repeat 3]

Workloads: random dense LPs, and verification LPs for a 784-20-10 MNIST-sized
network (random weights) under the semantic specification.  Both backends
must agree bit for bit; the script exits nonzero if they do not.
"""
import argparse
import sys
import time

import numpy as np

from specverify.bounds import InputRegion
from specverify.lp import BACKENDS, LinearProgram, solve
from specverify.network import init_mlp
from specverify.relax import EQ, GE, LE
from specverify.specs import SemanticSoftmax, cifar10_distances
from specverify.verify import build_lp


def random_programs(rng, count, n, m):
    out = []
    for _ in range(count):
        lp = LinearProgram("bench")
        xs = [lp.add_var(f"x{i}", -5.0, 5.0) for i in range(n)]
        x0 = rng.uniform(-4, 4, n)
        for _ in range(m):
            a = rng.normal(size=n)
            sense = rng.choice([LE, GE, LE, EQ]) if m < n else rng.choice([LE, GE])
            rhs = float(a @ x0) + (1.0 if sense == LE else -1.0 if sense == GE else 0.0)
            lp.add_constraint({xs[j]: float(a[j]) for j in range(n)}, sense, rhs)
        lp.maximize({xs[j]: float(c) for j, c in enumerate(rng.normal(size=n))})
        out.append(lp)
    return out


def verification_programs(rng, count):
    net = init_mlp([784, 20, 10], rng)
    dist = cifar10_distances()[1]
    out = []
    for i in range(count):
        x = rng.uniform(0, 1, 784)
        lp, _, _ = build_lp([net], SemanticSoftmax(dist[i % 10], 0.23), [InputRegion(x, 4 / 255, 0.0, 1.0)])
        out.append(lp)
    return out


def run(programs, backend, repeat):
    best = float("inf")
    sols = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        sols = [solve(lp, backend=backend) for lp in programs]
        best = min(best, time.perf_counter() - t0)
    return best, sols


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if "cython" not in BACKENDS:
        print("compiled kernel not available; rebuild with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(args.seed)
    workloads = {
        "random 20x30": random_programs(rng, 50, 20, 30),
        "random 60x80": random_programs(rng, 10, 60, 80),
        "mnist semantic": verification_programs(rng, 10),
    }
    print(f"{'workload':<16} {'python s':>9} {'cython s':>9} {'speedup':>8}  iterations")
    mismatch = False
    for name, programs in workloads.items():
        tp, sp = run(programs, "python", args.repeat)
        tc, sc = run(programs, "cython", args.repeat)
        same = all(a.status == b.status and a.basis == b.basis and (not a.optimal or a.objective == b.objective)
                   for a, b in zip(sp, sc))
        mismatch |= not same
        iters = sum(s.iterations for s in sc)
        print(f"{name:<16} {tp:9.3f} {tc:9.3f} {tp / tc:7.2f}x  {iters}{'' if same else '  MISMATCH'}")
    return 1 if mismatch else 0


if __name__ == "__main__":
    sys.exit(main())
