import json
import math

import numpy as np
import pytest

from specverify.bounds import InputRegion
from specverify.errors import ConfigError, SchemaError, ShapeError
from specverify.lp import solve
from specverify.network import Affine, Network, forward_batch, init_mlp, mlp, softmax
from specverify.physics import PendulumParams, energy
from specverify.specs import (DigitSum, EnergyParams, Entropy, Linear, Quadratic,
                              SemanticSoftmax, build_energy_Q, cifar10_distances,
                              digit_sum_enumerate, eval_spec, evaluate_batch, gradient_batch,
                              load_spec, spec_config_from_dict, spec_to_dict)
from specverify.verify import build_lp


def identity(n):
    return mlp([np.eye(n)], [np.zeros(n)])


def lp_max(nets, spec, regions, **kw):
    lp, enc, _ = build_lp(nets, spec, regions, **kw)
    return solve(lp).objective


# -- exact evaluation -----------------------------------------------------------

def test_semantic_boundary():
    assert eval_spec(SemanticSoftmax([0.0, 1.0], 0.5), [np.zeros(1)], [np.zeros(2)]) == 0.0


def test_digit_sum_uniform():
    # mean of j1 + j2 over 100 equiprobable pairs is 900/100 = 9
    eps = 1.0
    spec = DigitSum((0, 0), 10, eps)
    assert eval_spec(spec, [0, 0], [np.zeros(10), np.zeros(10)]) == pytest.approx(9.0 - eps, abs=1e-12)
    brute = sum(j1 + j2 for j1 in range(10) for j2 in range(10)) / 100
    assert brute == 9.0


def test_zero_quadratic(rng):
    spec = Quadratic(np.zeros((5, 5)))
    assert eval_spec(spec, rng.normal(size=2), rng.normal(size=2)) == 0.0


def test_entropy_value():
    # uniform over 4 labels: entropy ln 4
    assert eval_spec(Entropy(0.5), [0], [np.zeros(4)]) == pytest.approx(0.5 - math.log(4), abs=1e-12)


@pytest.mark.parametrize("N", [2, 3])
def test_digit_sum_matches_enumeration(rng, N):
    for _ in range(20):
        targets = tuple(int(t) for t in rng.integers(0, 10, N))
        spec = DigitSum(targets, 10, float(rng.uniform(0, 3)))
        ys = [rng.normal(scale=3, size=10) for _ in range(N)]
        assert abs(eval_spec(spec, [0] * N, ys) - digit_sum_enumerate(spec, ys)) <= 1e-12


def test_digit_sum_reversed_loop_order(rng):
    """Enumerate with the last copy outermost, independent of both evaluators."""
    spec = DigitSum((4, 7, 1), 10, 1.0)
    ys = [rng.normal(size=10) for _ in range(3)]
    ps = [softmax(y) for y in ys]
    total = 0.0
    for j3 in range(10):
        for j2 in range(10):
            for j1 in range(10):
                total += ps[0][j1] * ps[1][j2] * ps[2][j3] * abs(j1 + j2 + j3 - 12)
    assert eval_spec(spec, [0] * 3, ys) == pytest.approx(total - 1.0, abs=1e-12)


def test_digit_sum_term_cap():
    with pytest.raises(ConfigError):
        DigitSum((0, 0, 0, 0, 0))
    with pytest.raises(ConfigError):
        DigitSum((0, 0, 0, 0), n_labels=11)
    DigitSum((0, 0, 0, 0))


def test_arity_and_shape_errors():
    with pytest.raises(ShapeError):
        eval_spec(DigitSum((1, 2)), [0], [np.zeros(10)])
    with pytest.raises(ShapeError):
        eval_spec(SemanticSoftmax([0.0, 1.0]), [0], [np.zeros(3)])
    with pytest.raises(SchemaError):
        SemanticSoftmax([0.5, 1.0])
    with pytest.raises(SchemaError):
        Quadratic(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_denominator_clearing_sign(rng):
    for _ in range(500):
        d = rng.uniform(0, 1, 5)
        d[rng.integers(5)] = 0.0
        eps = float(rng.uniform(0, 0.6))
        y = rng.normal(scale=2, size=5)
        a = eval_spec(SemanticSoftmax(d, eps), [0], [y])
        b = float(np.exp(y) @ (d - eps))
        assert (a <= 0) == (b <= 0)


# -- energy ---------------------------------------------------------------------

def test_energy_Q_entries():
    Q = build_energy_Q(EnergyParams(1.0, 0.5, 9.81, 0.1)).Q
    # (1, w, h, sw, w', h', sw'): linear terms live in row/column 0 split in halves
    assert 2 * Q[0, 5] == pytest.approx(4.905, abs=1e-12)
    assert 2 * Q[0, 2] == pytest.approx(-4.905, abs=1e-12)
    assert Q[6, 6] == pytest.approx(12.5, abs=1e-12)
    assert Q[3, 3] == pytest.approx(-12.5, abs=1e-12)
    assert np.count_nonzero(Q) == 6


def test_energy_Q_same_state(rng):
    spec = build_energy_Q(EnergyParams(2.0, 0.7, 9.0, 0.2))
    x = rng.normal(size=3)
    assert eval_spec(spec, x, x) == pytest.approx(0.0, abs=1e-12)


def test_energy_Q_matches_direct_formula(rng):
    p = PendulumParams()
    spec = build_energy_Q(EnergyParams(p.mass, p.length, p.gravity, p.scale))
    for _ in range(100):
        th, om = rng.uniform(-math.pi, math.pi, 2), rng.uniform(-10, 10, 2)
        x = np.array([math.sin(th[0]), -math.cos(th[0]), 0.1 * om[0]])
        y = np.array([math.sin(th[1]), -math.cos(th[1]), 0.1 * om[1]])
        direct = energy(th[1], om[1], p) - energy(th[0], om[0], p)
        assert eval_spec(spec, x, y) == pytest.approx(direct, abs=1e-9)


def test_energy_params_validation():
    with pytest.raises(ConfigError):
        EnergyParams(mass=0.0)


# -- gradients ------------------------------------------------------------------------

def _all_specs(rng):
    Q = rng.normal(size=(5, 5))
    return [Linear(rng.normal(size=2), 0.3), SemanticSoftmax([0.0, 0.7], 0.2),
            DigitSum((0, 1), 2, 0.5), Quadratic(Q + Q.T), Entropy(0.3)]


def test_spec_gradients_vs_finite_differences(rng):
    for spec in _all_specs(rng):
        n = spec.arity
        for _ in range(20):
            xs = [rng.normal(size=2) for _ in range(n)]
            ys = [rng.normal(size=2) for _ in range(n)]
            gx, gy = gradient_batch(spec, xs, ys)
            for c in range(n):
                for which, vecs, g in (("x", xs, gx), ("y", ys, gy)):
                    num = np.zeros(2)
                    for i in range(2):
                        up = [v.copy() for v in vecs]
                        dn = [v.copy() for v in vecs]
                        up[c][i] += 1e-6
                        dn[c][i] -= 1e-6
                        f = (lambda v: eval_spec(spec, v, ys)) if which == "x" else (lambda v: eval_spec(spec, xs, v))
                        num[i] = (f(up) - f(dn)) / 2e-6
                    np.testing.assert_allclose(g[c][0], num, atol=1e-6)


# -- encodings ----------------------------------------------------------------------

def test_semantic_degenerate_encoding():
    d, eps = np.array([0.0, 0.6]), 0.25
    net = Network((Affine(np.zeros((2, 1)), np.zeros(2)),), 1)
    z = lp_max([net], SemanticSoftmax(d, eps), [InputRegion(np.zeros(1), 0.5)])
    # y = (0, 0) exactly, shifted by max upper bound 0
    assert z == pytest.approx((d[0] - eps) + (d[1] - eps), abs=1e-12)


def test_toy_quadratic_encoding():
    Q = np.zeros((5, 5))
    Q[0, 0], Q[1, 1], Q[2, 2] = -4.0, 1.0, -1.0
    reg = InputRegion(np.zeros(2), 10.0, np.array([-10.0, -9.0]), np.array([10.0, 9.0]))
    assert lp_max([identity(2)], Quadratic(Q), [reg]) == pytest.approx(96.0, abs=1e-9)


def test_linear_encoding():
    reg = InputRegion(np.array([0.5]), 0.5)
    assert lp_max([identity(1)], Linear([1.0], -0.5), [reg]) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("prune", [True, False])
def test_upper_bound_on_samples(rng, prune):
    for trial in range(20):
        net = init_mlp([2, 4, 2], rng)
        for spec in _all_specs(rng):
            regions = [InputRegion(rng.normal(size=2), float(rng.uniform(0.05, 1.0)))
                       for _ in range(spec.arity)]
            lp, enc, _ = build_lp([net] * spec.arity, spec, regions, prune=prune)
            z = solve(lp).objective
            xs = [r.sample(rng, 2000) for r in regions]
            ys = [forward_batch(net, x) for x in xs]
            assert z >= enc.exact(xs, ys).max() - 1e-6


def test_pruning_preserves_optimum(rng):
    for _ in range(10):
        net = init_mlp([2, 5, 3], rng)
        for spec in (SemanticSoftmax([0.0, 0.9, 0.4], 0.3), DigitSum((1, 2), 3, 1.0)):
            regions = [InputRegion(rng.normal(size=2), 0.3) for _ in range(spec.arity)]
            a = lp_max([net] * spec.arity, spec, regions, prune=True)
            b = lp_max([net] * spec.arity, spec, regions, prune=False)
            assert a == pytest.approx(b, abs=1e-7)


def test_exact_callable_sign_matches_eval(rng):
    net = init_mlp([2, 4, 3], rng)
    for spec in (SemanticSoftmax([0.0, 0.9, 0.4], 0.3), Entropy(0.5), DigitSum((1, 2), 3, 1.0)):
        regions = [InputRegion(rng.normal(size=2), 0.5) for _ in range(spec.arity)]
        _, enc, _ = build_lp([net] * spec.arity, spec, regions)
        xs = [r.sample(rng, 3000) for r in regions]
        ys = [forward_batch(net, x) for x in xs]
        assert np.array_equal(enc.exact(xs, ys) > 0, evaluate_batch(spec, xs, ys) > 0)


# -- files ------------------------------------------------------------------------

def test_bundled_distances():
    labels, D = cifar10_distances()
    idx = {name: i for i, name in enumerate(labels)}
    assert D[idx["airplane"], idx["ship"]] == 0.17
    assert D[idx["automobile"], idx["truck"]] == 0.0
    assert D[idx["bird"], idx["frog"]] == 0.08
    assert np.array_equal(D, D.T) and not np.diag(D).any()


def test_spec_files(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"kind": "semantic", "epsilon": 0.3}))
    cfg = load_spec(path)
    spec = cfg.instantiate([3])
    assert spec.epsilon == 0.3 and spec.dist[3] == 0.0
    assert spec_config_from_dict({"kind": "digit_sum", "n": 3}).instantiate([1, 2, 3]).targets == (1, 2, 3)
    assert spec_config_from_dict({"kind": "energy"}).instantiate().Q[6, 6] == pytest.approx(12.5)
    for spec in (Linear([1.0, 2.0], 0.5), Entropy(0.2), DigitSum((1, 2))):
        again = spec_config_from_dict(spec_to_dict(spec)).instantiate()
        assert spec_to_dict(again) == spec_to_dict(spec)


def test_unknown_kind():
    with pytest.raises(SchemaError, match="unknown"):
        spec_config_from_dict({"kind": "wasserstein"})
    with pytest.raises(SchemaError):
        spec_config_from_dict({"kind": "linear"})
