"""Damped pendulum: integrator, energy and (state, next state) datasets.

Network coordinates are (w, h, s*omega) with w = sin(theta), h = -cos(theta)
so that the pendulum hangs at h = -1, and s = 0.1 keeps every coordinate in
[-1, 1] for |omega| < 10.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SchemaError

CSV_HEADER = ("w", "h", "somega", "w_next", "h_next", "somega_next")
OMEGA_RANGE = 10.0
TRAIN_FRACTION = 0.7


@dataclass(frozen=True)
class PendulumState:
    theta: float
    omega: float


@dataclass(frozen=True)
class PendulumParams:
    mass: float = 1.0
    length: float = 0.5
    gravity: float = 9.81
    damping: float = 0.1
    dt_inner: float = 0.001
    dt: float = 0.1
    scale: float = 0.1

    def __post_init__(self):
        if min(self.mass, self.length, self.gravity, self.dt_inner, self.dt, self.scale) <= 0:
            raise ConfigError("mass, length, gravity, time steps and scale must be positive")
        if self.damping < 0:
            raise ConfigError("damping must be nonnegative")
        if self.dt_inner > self.dt:
            raise ConfigError("inner step exceeds the sample interval")

    @property
    def substeps(self) -> int:
        return max(1, round(self.dt / self.dt_inner))


def step_arrays(theta, omega, p: PendulumParams):
    """Advance arrays of states by one sample interval (semi-implicit Euler substeps)."""
    theta = np.array(theta, dtype=np.float64)
    omega = np.array(omega, dtype=np.float64)
    h = p.dt / p.substeps
    k_g = p.gravity / p.length
    k_d = p.damping / (p.mass * p.length ** 2)
    for _ in range(p.substeps):
        omega = omega + h * (-k_g * np.sin(theta) - k_d * omega)
        theta = theta + h * omega
    return theta, omega


def step_pendulum(s: PendulumState, p: PendulumParams = PendulumParams()) -> PendulumState:
    th, om = step_arrays(s.theta, s.omega, p)
    return PendulumState(float(th), float(om))


def simulate(s: PendulumState, n_steps: int, p: PendulumParams = PendulumParams()) -> list[PendulumState]:
    out = [s]
    for _ in range(n_steps):
        s = step_pendulum(s, p)
        out.append(s)
    return out


def energy(theta, omega, p: PendulumParams = PendulumParams()):
    """Mechanical energy with height measured from the pivot (h = -cos theta)."""
    h = -np.cos(theta)
    return p.mass * p.gravity * p.length * h + 0.5 * p.mass * p.length ** 2 * np.square(omega)


def energy_coords(state, p: PendulumParams = PendulumParams()):
    """Energy from network coordinates (w, h, s*omega); batched over leading axes."""
    state = np.asarray(state, dtype=np.float64)
    h = state[..., 1]
    omega = state[..., 2] / p.scale
    return p.mass * p.gravity * p.length * h + 0.5 * p.mass * p.length ** 2 * np.square(omega)


def to_coords(theta, omega, p: PendulumParams = PendulumParams()) -> np.ndarray:
    return np.stack([np.sin(theta), -np.cos(theta), p.scale * np.asarray(omega)], axis=-1)


@dataclass
class PendulumData:
    """Paired arrays of current and next states in network coordinates."""

    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.x.shape[0]

    def split(self, train_fraction: float = TRAIN_FRACTION):
        k = int(round(train_fraction * len(self)))
        return PendulumData(self.x[:k], self.y[:k]), PendulumData(self.x[k:], self.y[k:])


def generate_dataset(n_pairs: int, seed: int = 0, p: PendulumParams = PendulumParams()) -> PendulumData:
    """Uniform theta in [-pi, pi), omega in (-10, 10), stepped once."""
    if n_pairs < 1:
        raise ConfigError("need at least one pair")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-math.pi, math.pi, n_pairs)
    omega = rng.uniform(-OMEGA_RANGE, OMEGA_RANGE, n_pairs)
    # uniform() can return the lower end; (-10, 10) is open
    omega = np.where(omega == -OMEGA_RANGE, 0.0, omega)
    th2, om2 = step_arrays(theta, omega, p)
    return PendulumData(to_coords(theta, omega, p), to_coords(th2, om2, p))


def save_csv(data: PendulumData, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for a, b in zip(data.x, data.y):
            w.writerow([repr(float(v)) for v in (*a, *b)])


def load_csv(path) -> PendulumData:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise SchemaError(f"{path}: header must be {','.join(CSV_HEADER)}, got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise SchemaError(f"{path}:{lineno}: expected {len(CSV_HEADER)} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.float64)
    return PendulumData(arr[:, :3], arr[:, 3:])
