"""Feedforward affine/ReLU networks: evaluation and JSON (de)serialization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericError, ParseError, SchemaError, ShapeError


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Affine:
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weight)
        b = _frozen(self.bias)
        if w.ndim != 2 or b.ndim != 1:
            raise ShapeError("affine layer needs a 2-D weight and a 1-D bias")
        if w.shape[0] != b.shape[0]:
            raise ShapeError(f"weight has {w.shape[0]} rows but bias has length {b.shape[0]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericError("affine layer has non-finite parameters")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def __eq__(self, other):
        return (isinstance(other, Affine)
                and np.array_equal(self.weight, other.weight)
                and np.array_equal(self.bias, other.bias))

    __hash__ = None


@dataclass(frozen=True)
class Relu:
    pass


Layer = Affine | Relu


@dataclass(frozen=True, eq=False)
class Network:
    """The map x_{k+1} = g_k(W_k x_k + b_k), stored as a flat layer list.

    Affine and ReLU layers are separate entries, so a typical two-layer net is
    ``[Affine, Relu, Affine]``.
    """

    layers: tuple
    input_dim: int
    name: str = "net"
    output_dim: int = field(init=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if self.input_dim < 1:
            raise ShapeError("input_dim must be positive")
        dim = self.input_dim
        for k, layer in enumerate(layers):
            if isinstance(layer, Affine):
                if layer.in_dim != dim:
                    raise ShapeError(
                        f"layer {k}: weight expects input of size {layer.in_dim}, got {dim}")
                dim = layer.out_dim
            elif not isinstance(layer, Relu):
                raise ShapeError(f"layer {k}: unsupported layer type {type(layer).__name__}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "output_dim", dim)

    def __eq__(self, other):
        return (isinstance(other, Network) and self.input_dim == other.input_dim
                and self.name == other.name and self.layers == other.layers)

    __hash__ = None

    @property
    def affine_layers(self) -> list[Affine]:
        return [l for l in self.layers if isinstance(l, Affine)]

    def n_params(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.affine_layers)

    def __call__(self, x):
        return forward(self, x)


def forward(net: Network, x) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise ShapeError(f"expected input of length {net.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("input contains non-finite entries")
    return forward_batch(net, x[None, :])[0]


def forward_batch(net: Network, X) -> np.ndarray:
    """Evaluate the network on the rows of X."""
    h = np.asarray(X, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise ShapeError(f"expected inputs of shape (n, {net.input_dim}), got {h.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        for layer in net.layers:
            if isinstance(layer, Affine):
                h = h @ layer.weight.T + layer.bias
            else:
                h = np.maximum(h, 0.0)
    if not np.all(np.isfinite(h)):
        raise NumericError("non-finite activation during forward pass")
    return h


def forward_trace(net: Network, X) -> list[np.ndarray]:
    """Return every intermediate activation (input first, output last) for a batch."""
    h = np.asarray(X, dtype=np.float64)
    acts = [h]
    # callers check finiteness where it matters (training reports the epoch)
    with np.errstate(over="ignore", invalid="ignore"):
        for layer in net.layers:
            if isinstance(layer, Affine):
                h = h @ layer.weight.T + layer.bias
            else:
                h = np.maximum(h, 0.0)
            acts.append(h)
    return acts


def backward_input(net: Network, acts: list[np.ndarray], grad_out: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. the outputs back to the inputs (ReLU subgradient 0 at 0)."""
    g = grad_out
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if isinstance(layer, Affine):
            g = g @ layer.weight
        else:
            g = g * (acts[k] > 0.0)
    return g


def softmax(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] == 0:
        raise ShapeError("softmax of an empty vector")
    if not np.all(np.isfinite(y)):
        raise NumericError("softmax of non-finite logits")
    e = np.exp(y - y.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    s = y - y.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def mlp(weights: Sequence, biases: Sequence, name: str = "net") -> Network:
    """Build Affine/ReLU/.../Affine from parallel weight and bias lists."""
    layers = []
    for k, (w, b) in enumerate(zip(weights, biases)):
        if k:
            layers.append(Relu())
        layers.append(Affine(w, b))
    return Network(tuple(layers), int(np.shape(weights[0])[1]), name)


def init_mlp(sizes: Sequence[int], rng: np.random.Generator, name: str = "net") -> Network:
    """Uniform +-1/sqrt(fan_in) initialization for weights and biases."""
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / math.sqrt(fan_in)
        ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        bs.append(rng.uniform(-lim, lim, size=fan_out))
    return mlp(ws, bs, name)


# -- serialization ---------------------------------------------------------

def to_dict(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        if isinstance(layer, Affine):
            layers.append({"type": "affine", "weight": layer.weight.tolist(),
                           "bias": layer.bias.tolist()})
        else:
            layers.append({"type": "relu"})
    return {"name": net.name, "input_dim": net.input_dim, "layers": layers}


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {v!r}")
    return float(v)


def from_dict(obj) -> Network:
    if not isinstance(obj, dict):
        raise SchemaError("model file must contain a JSON object")
    for key in ("input_dim", "layers"):
        if key not in obj:
            raise SchemaError(f"missing field {key!r}")
    name = obj.get("name", "net")
    if not isinstance(name, str):
        raise SchemaError("field 'name' must be a string")
    dim = obj["input_dim"]
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise SchemaError("field 'input_dim' must be a positive integer")
    if not isinstance(obj["layers"], list):
        raise SchemaError("field 'layers' must be a list")
    layers = []
    for k, spec in enumerate(obj["layers"]):
        where = f"layers[{k}]"
        if not isinstance(spec, dict) or "type" not in spec:
            raise SchemaError(f"{where}: expected an object with a 'type' field")
        kind = spec["type"]
        if kind == "relu":
            layers.append(Relu())
        elif kind == "affine":
            w, b = spec.get("weight"), spec.get("bias")
            if not isinstance(w, list) or not w or not isinstance(b, list):
                raise SchemaError(f"{where}: affine layer needs non-empty 'weight' and 'bias' lists")
            rows = []
            for i, row in enumerate(w):
                if not isinstance(row, list):
                    raise SchemaError(f"{where}.weight[{i}]: expected a list")
                if len(row) != dim:
                    raise SchemaError(
                        f"{where}.weight[{i}]: row length {len(row)} != input dimension {dim}")
                rows.append([_number(v, f"{where}.weight[{i}]") for v in row])
            if len(b) != len(rows):
                raise SchemaError(f"{where}: bias length {len(b)} != weight rows {len(rows)}")
            bias = [_number(v, f"{where}.bias") for v in b]
            try:
                layers.append(Affine(np.array(rows), np.array(bias)))
            except (ShapeError, NumericError) as exc:
                raise SchemaError(f"{where}: {exc}") from exc
            dim = len(rows)
        else:
            raise SchemaError(f"{where}: unknown layer type {kind!r}")
    return Network(tuple(layers), obj["input_dim"], name)


def save_model(net: Network, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(net), fh)
        fh.write("\n")


def load_model(path) -> Network:
    with open(path) as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return from_dict(obj)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
