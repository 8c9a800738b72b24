"""MNIST IDX and pendulum CSV ingestion."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, SchemaError
from . import physics

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
PIXEL_RANGE = 255.0


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] == 0:
            raise SchemaError("dataset inputs must be a nonempty 2-D array")
        if len(self.labels) != self.inputs.shape[0]:
            raise SchemaError("inputs and labels differ in length")

    def __len__(self):
        return self.inputs.shape[0]


def _open(path):
    path = os.fspath(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def _read_idx(path, magic: int, what: str):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise OSError(f"{path}: truncated IDX header ({len(raw)} bytes)")
    got, count = struct.unpack(">II", raw[:8])
    if got != magic:
        raise FormatError(f"{path}: magic {got} is not the {what} magic {magic}")
    if magic == IMAGE_MAGIC:
        if len(raw) < 16:
            raise OSError(f"{path}: truncated IDX header")
        rows, cols = struct.unpack(">II", raw[8:16])
        body, shape = raw[16:], (count, rows * cols)
    else:
        body, shape = raw[8:], (count,)
    need = int(np.prod(shape))
    if len(body) < need:
        raise OSError(f"{path}: truncated IDX body, expected {need} bytes, got {len(body)}")
    return np.frombuffer(body[:need], dtype=np.uint8).reshape(shape)


def load_mnist_idx(images_path, labels_path, name: str = "mnist") -> LabeledDataset:
    """Load IDX (optionally gzipped) image/label files; pixels scaled to [0, 1]."""
    images = _read_idx(images_path, IMAGE_MAGIC, "image")
    labels = _read_idx(labels_path, LABEL_MAGIC, "label")
    if images.shape[0] != labels.shape[0]:
        raise SchemaError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    return LabeledDataset(images / PIXEL_RANGE, labels.astype(np.int64), name)


def write_idx_images(path, images: np.ndarray, rows: int = 28, cols: int = 28) -> None:
    images = np.asarray(images, dtype=np.uint8).reshape(-1, rows * cols)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, images.shape[0], rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
    "test": ("t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"),
}


def load_mnist_dir(directory, split: str = "test") -> LabeledDataset:
    img, lab = MNIST_FILES[split]
    d = Path(directory)
    return load_mnist_idx(d / img, d / lab, name=f"mnist-{split}")


def load_pendulum_csv(path) -> physics.PendulumData:
    return physics.load_csv(path)


def save_pendulum_csv(data: physics.PendulumData, path) -> None:
    physics.save_csv(data, path)


def load_any(path, split: str = "test"):
    """A directory of IDX files, or a pendulum CSV."""
    p = Path(path)
    if p.is_dir():
        return load_mnist_dir(p, split)
    return load_pendulum_csv(p)
