"""Write the 5000-image MNIST subset shipped with mlxtend as gzipped IDX files.

The result lands in data/mnist/ (4000 train / 1000 test, shuffled with a
fixed seed).  Only needed to regenerate the bundled files:

    pip install mlxtend
    python scripts/build_mnist_subset.py
"""
import gzip
import os
import struct
import sys

import numpy as np


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 2051, n, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 2049, len(labels)))
        fh.write(labels.astype(np.uint8).tobytes())


def main(out_dir):
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    order = np.random.default_rng(20190101).permutation(len(y))
    X = X[order].reshape(-1, 28, 28)
    y = y[order]
    os.makedirs(out_dir, exist_ok=True)
    write_idx_images(os.path.join(out_dir, "train-images-idx3-ubyte.gz"), X[:4000])
    write_idx_labels(os.path.join(out_dir, "train-labels-idx1-ubyte.gz"), y[:4000])
    write_idx_images(os.path.join(out_dir, "t10k-images-idx3-ubyte.gz"), X[4000:])
    write_idx_labels(os.path.join(out_dir, "t10k-labels-idx1-ubyte.gz"), y[4000:])


if __name__ == "__main__":
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.join(root, "data", "mnist"))
