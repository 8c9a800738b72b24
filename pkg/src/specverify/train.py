"""Minibatch SGD with momentum for the pendulum and MNIST models.

Losses (all averaged over the batch):

* ``l1``          ||f(x) - x_T||_1
* ``l1+energy``   l1 + |E(f(x)) - E(x_T)| + relu(E(f(x)) - E(x))
* ``ce``          cross entropy of softmax(f(x))
* ``ce-adv``      cross entropy at a PGD point inside the delta-box (clipped to [0, 1])
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ShapeError, TrainingError
from .network import Affine, Network, forward_trace, init_mlp, log_softmax, softmax
from .physics import PendulumParams

LOSS_KINDS = ("l1", "l1+energy", "ce", "ce-adv")
PENDULUM_SIZES = (3, 16, 3)
MNIST_SIZES = (784, 20, 10)
LOG_HEADER = ("epoch", "train_loss", "test_metric")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "l1"
    lr: float = 0.01
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    momentum: float = 0.9
    pendulum: PendulumParams = field(default_factory=PendulumParams)
    adv_delta: float = 0.1
    adv_steps: int = 7

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.kind!r}; expected one of {', '.join(LOSS_KINDS)}")
        if not (self.lr > 0 and self.epochs >= 0 and self.batch_size >= 1):
            raise ConfigError("learning rate and batch size must be positive, epochs nonnegative")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")

    @property
    def classification(self) -> bool:
        return self.kind in ("ce", "ce-adv")


def default_config(kind: str, **kw) -> LossConfig:
    lr = 0.1 if kind in ("ce", "ce-adv") else 0.01
    return LossConfig(kind=kind, lr=kw.pop("lr", lr), **kw)


# -- losses -------------------------------------------------------------------

def _energy(y, p: PendulumParams):
    a = p.mass * p.gravity * p.length
    b = 0.5 * p.mass * p.length ** 2 / p.scale ** 2
    e = a * y[:, 1] + b * y[:, 2] ** 2
    de = np.zeros_like(y)
    de[:, 1] = a
    de[:, 2] = 2.0 * b * y[:, 2]
    return e, de


def output_loss(kind: str, x, y, target, p: PendulumParams):
    """Loss value and d loss / d y for outputs ``y`` (batch mean)."""
    B = y.shape[0]
    if kind in ("l1", "l1+energy"):
        r = y - target
        loss = np.abs(r).sum()
        g = np.sign(r)
        if kind == "l1+energy":
            e_pred, de = _energy(y, p)
            e_true, _ = _energy(target, p)
            e_in, _ = _energy(x, p)
            d1 = e_pred - e_true
            d2 = e_pred - e_in
            loss += np.abs(d1).sum() + np.maximum(d2, 0.0).sum()
            g = g + (np.sign(d1) + (d2 > 0.0))[:, None] * de
        return loss / B, g / B
    labels = np.asarray(target, dtype=np.int64)
    lp = log_softmax(y)
    loss = -lp[np.arange(B), labels].sum()
    g = softmax(y)
    g[np.arange(B), labels] -= 1.0
    return loss / B, g / B


def _backward(net: Network, acts, g):
    grads = []
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if isinstance(layer, Affine):
            grads.append((g.T @ acts[k], g.sum(axis=0)))
            if k:
                g = g @ layer.weight
        else:
            g = g * (acts[k] > 0.0)
    grads.reverse()
    return grads, g


def input_gradient(net: Network, x, target, cfg: LossConfig):
    acts = forward_trace(net, x)
    loss, g = output_loss("ce", x, acts[-1], target, cfg.pendulum)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        g = g @ layer.weight if isinstance(layer, Affine) else g * (acts[k] > 0.0)
    return loss, g


def adversarial_inputs(net: Network, x, labels, cfg: LossConfig):
    """PGD on the cross entropy inside the clipped delta-box around ``x``."""
    lo = np.clip(x - cfg.adv_delta, 0.0, 1.0)
    hi = np.clip(x + cfg.adv_delta, 0.0, 1.0)
    eta = 2.5 * cfg.adv_delta / cfg.adv_steps
    xa = x.copy()
    for _ in range(cfg.adv_steps):
        _, g = input_gradient(net, xa, labels, cfg)
        xa = np.clip(xa + eta * np.sign(g), lo, hi)
    return xa


def loss_and_grad(net: Network, x, target, cfg: LossConfig):
    """Batch loss and per-affine-layer (dW, db) gradients."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != net.input_dim:
        raise ShapeError(f"batch must have shape (n>0, {net.input_dim}), got {x.shape}")
    if cfg.kind == "ce-adv":
        x = adversarial_inputs(net, x, target, cfg)
    acts = forward_trace(net, x)
    kind = "ce" if cfg.classification else cfg.kind
    loss, g = output_loss(kind, x, acts[-1], target, cfg.pendulum)
    grads, _ = _backward(net, acts, g)
    return float(loss), grads


def evaluate_loss(net: Network, x, target, cfg: LossConfig) -> float:
    acts = forward_trace(net, np.asarray(x, dtype=np.float64))
    kind = "ce" if cfg.classification else cfg.kind
    return float(output_loss(kind, x, acts[-1], target, cfg.pendulum)[0])


def test_metric(net: Network, x, target, cfg: LossConfig) -> float:
    """Mean l1 error for regression, error rate for classification."""
    y = forward_trace(net, np.asarray(x, dtype=np.float64))[-1]
    if cfg.classification:
        return float(np.mean(np.argmax(y, axis=1) != np.asarray(target)))
    return float(np.abs(y - target).sum(axis=1).mean())


# -- training loop --------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    test_metric: float


def _with_params(net: Network, params) -> Network:
    layers, it = [], iter(params)
    for layer in net.layers:
        if isinstance(layer, Affine):
            W, b = next(it)
            layers.append(Affine(W.copy(), b.copy()))
        else:
            layers.append(layer)
    return replace(net, layers=tuple(layers))


def train(net: Network, x, target, cfg: LossConfig, test=None) -> tuple[Network, list[EpochLog]]:
    """Run ``cfg.epochs`` epochs of momentum SGD; ``test`` is an optional (x, target) pair."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ConfigError("training set is empty")
    if x.shape[1] != net.input_dim:
        raise ShapeError(f"training inputs have dimension {x.shape[1]}, network expects {net.input_dim}")
    target = np.asarray(target)
    rng = np.random.default_rng(cfg.seed)
    params = [[l.weight.copy(), l.bias.copy()] for l in net.affine_layers]
    vel = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            cur = _with_params(net, params)
            loss, grads = loss_and_grad(cur, x[idx], target[idx], cfg)
            if not math.isfinite(loss):
                raise TrainingError(f"loss became {loss} in epoch {epoch} (batch starting at {start})")
            total += loss * idx.size
            for (W, b), (vW, vb), (gW, gb) in zip(params, vel, grads):
                vW *= cfg.momentum
                vW -= cfg.lr * gW
                vb *= cfg.momentum
                vb -= cfg.lr * gb
                W += vW
                b += vb
        for W, b in params:
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise TrainingError(f"parameters became non-finite in epoch {epoch}")
        cur = _with_params(net, params)
        metric = test_metric(cur, *test, cfg) if test is not None else math.nan
        history.append(EpochLog(epoch, total / n, metric))
    return (_with_params(net, params) if cfg.epochs else net), history


def write_log(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for h in history:
            w.writerow([h.epoch, repr(h.train_loss), repr(h.test_metric)])


def pendulum_model(seed: int = 0, name: str = "pendulum") -> Network:
    return init_mlp(PENDULUM_SIZES, np.random.default_rng(seed), name)


def mnist_model(seed: int = 0, name: str = "mnist") -> Network:
    return init_mlp(MNIST_SIZES, np.random.default_rng(seed), name)
