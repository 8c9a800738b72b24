import numpy as np
import pytest

from _support import central_difference, relative_error
from specverify.bounds import InputRegion
from specverify.errors import ConfigError, ShapeError
from specverify.falsify import AttackConfig, objective_and_grad, pgd_falsify
from specverify.network import forward, init_mlp, mlp
from specverify.specs import DigitSum, Entropy, Linear, Quadratic, SemanticSoftmax, eval_spec


def identity(n):
    return mlp([np.eye(n)], [np.zeros(n)])


def toy():
    Q = np.zeros((5, 5))
    Q[0, 0], Q[1, 1], Q[2, 2] = -4.0, 1.0, -1.0
    reg = InputRegion(np.zeros(2), 10.0, np.array([-10.0, -9.0]), np.array([10.0, 9.0]))
    return identity(2), Quadratic(Q), reg


def test_linear_witness():
    w = pgd_falsify([identity(1)], Linear([1.0], -0.5), [InputRegion(np.array([0.5]), 0.5)])
    assert w is not None
    assert w.inputs[0].tolist() == [1.0]
    assert w.value == pytest.approx(0.5, abs=1e-12)


def test_zero_radius_holds():
    spec = Linear([1.0], -0.5)
    assert pgd_falsify([identity(1)], spec, [InputRegion(np.array([0.4]), 0.0)]) is None


def test_zero_radius_violated():
    w = pgd_falsify([identity(1)], Linear([1.0], -0.5), [InputRegion(np.array([0.9]), 0.0)])
    assert w.inputs[0].tolist() == [0.9]


def test_toy_quadratic_corner():
    net, spec, reg = toy()
    w = pgd_falsify([net], spec, [reg])
    # the exact max is 96 at x = (+-10, 0); sign steps of 2.5 land within 1.25 of 0
    assert 96.0 - 1.25 ** 2 - 1e-9 <= w.value <= 96.0
    assert abs(abs(w.inputs[0][0]) - 10.0) < 1e-12


def test_witness_inside_box_and_exact(rng):
    for _ in range(10):
        net = init_mlp([3, 8, 4], rng)
        reg = InputRegion(rng.uniform(0, 1, 3), 0.3, 0.0, 1.0)
        spec = SemanticSoftmax([0.0, 0.8, 0.5, 0.9], 0.05)
        w = pgd_falsify([net], spec, [reg], AttackConfig(steps=30, restarts=5))
        if w is None:
            continue
        lo, hi = reg.box()
        assert np.all(w.inputs[0] >= lo) and np.all(w.inputs[0] <= hi)
        assert w.value == eval_spec(spec, w.inputs, [forward(net, w.inputs[0])])


def test_deterministic_given_seed(rng):
    net = init_mlp([2, 6, 3], rng)
    spec = DigitSum((0, 2), 3, 0.3)
    regions = [InputRegion(rng.normal(size=2), 0.5) for _ in range(2)]
    cfg = AttackConfig(steps=20, restarts=6, seed=17)
    a = pgd_falsify([net, net], spec, regions, cfg)
    b = pgd_falsify([net, net], spec, regions, cfg)
    assert (a is None) == (b is None)
    if a is not None:
        assert a.value == b.value
        assert all(np.array_equal(x, y) for x, y in zip(a.inputs, b.inputs))


def test_objective_gradient_vs_finite_differences(rng):
    Q = rng.normal(size=(6, 6))
    for spec in (SemanticSoftmax([0.0, 0.5, 1.0], 0.2), Entropy(0.4), DigitSum((1, 1), 3, 0.5),
                 Quadratic(Q + Q.T), Linear([1.0, -1.0, 0.5], 0.0)):
        net = init_mlp([2, 8, 3], rng)
        nets = [net] * spec.arity
        for _ in range(20):
            xs = [rng.normal(size=2) for _ in range(spec.arity)]
            _, grads = objective_and_grad(nets, spec, [x[None] for x in xs])
            for c in range(spec.arity):
                def f(v, c=c):
                    pts = [x[None] for x in xs]
                    pts[c] = v[None]
                    return float(objective_and_grad(nets, spec, pts)[0][0])
                num = central_difference(f, xs[c], 1e-6)
                if np.linalg.norm(num) < 1e-8:
                    continue
                assert relative_error(grads[c][0], num) < 1e-4


def test_config_errors(rng):
    with pytest.raises(ConfigError):
        AttackConfig(steps=0)
    with pytest.raises(ConfigError):
        AttackConfig(step_size=-1.0)
    with pytest.raises(ShapeError):
        pgd_falsify([identity(2)], Linear([1.0, 1.0]), [InputRegion(np.zeros(3), 0.1)])
    with pytest.raises(ShapeError):
        pgd_falsify([identity(2)], DigitSum((0, 1)), [InputRegion(np.zeros(2), 0.1)])
