"""Interval bound propagation through affine/ReLU networks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundOrderError, NumericError, ShapeError
from .network import Affine, Network


@dataclass(frozen=True)
class InputRegion:
    """The l_inf ball of radius ``delta`` around ``center``, optionally clipped."""

    center: np.ndarray
    delta: float
    clip_lo: object = None
    clip_hi: object = None

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64)
        if c.ndim != 1:
            raise ShapeError("region center must be a vector")
        if not self.delta >= 0:
            raise BoundOrderError(f"perturbation radius must be nonnegative, got {self.delta}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "delta", float(self.delta))

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.center - self.delta
        hi = self.center + self.delta
        if self.clip_lo is not None:
            lo = np.maximum(lo, self.clip_lo)
            hi = np.maximum(hi, self.clip_lo)
        if self.clip_hi is not None:
            lo = np.minimum(lo, self.clip_hi)
            hi = np.minimum(hi, self.clip_hi)
        if np.any(lo > hi):
            raise BoundOrderError("input region is empty after clipping")
        return lo, hi

    def project(self, x) -> np.ndarray:
        lo, hi = self.box()
        return np.minimum(np.maximum(x, lo), hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = self.box()
        return lo + (hi - lo) * rng.random((n, lo.shape[0]))


@dataclass
class LayerBounds:
    """Elementwise intervals for every activation of a network.

    ``lower[k]``/``upper[k]`` bound the output of layer k-1 (index 0 is the
    input box), so for a ReLU at layer index k the pre-activation interval is
    ``k`` and the post-activation interval ``k + 1``.
    """

    lower: list
    upper: list

    def __len__(self):
        return len(self.lower)

    @property
    def input(self):
        return self.lower[0], self.upper[0]

    @property
    def output(self):
        return self.lower[-1], self.upper[-1]

    def contains(self, acts, tol: float = 1e-9) -> bool:
        return all(np.all(a >= l - tol) and np.all(a <= u + tol)
                   for a, l, u in zip(acts, self.lower, self.upper))


def affine_interval(layer: Affine, lo: np.ndarray, hi: np.ndarray):
    mu = (lo + hi) / 2.0
    r = (hi - lo) / 2.0
    center = (mu[None, :] @ layer.weight.T + layer.bias)[0]
    radius = (r[None, :] @ np.abs(layer.weight).T)[0]
    return center - radius, center + radius


def propagate_bounds(net: Network, region: InputRegion, tighten: bool = False) -> LayerBounds:
    """Interval arithmetic from the input box to the output box.

    With ``tighten`` every affine output is re-bounded by solving the LP
    relaxation of the layers before it (two LPs per neuron), which is sound
    and never looser than plain intervals.
    """
    lo, hi = region.box()
    if lo.shape[0] != net.input_dim:
        raise ShapeError(f"region has dimension {lo.shape[0]}, network expects {net.input_dim}")
    lower, upper = [lo], [hi]
    for k, layer in enumerate(net.layers):
        if isinstance(layer, Affine):
            lo, hi = affine_interval(layer, lo, hi)
            if tighten:
                from .verify import tighten_layer
                partial = LayerBounds(lower + [lo], upper + [hi])
                lo, hi = tighten_layer(net, partial, k)
        else:
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise NumericError(f"non-finite bounds after layer {k}")
        lower.append(lo)
        upper.append(hi)
    return LayerBounds(lower, upper)
