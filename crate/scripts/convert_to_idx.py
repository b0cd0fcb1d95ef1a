#!/usr/bin/env python3
"""Convert local copies of CIFAR-10 or SVHN into the IDX layout `gran` reads.

    python3 scripts/convert_to_idx.py cifar10 cifar-10-batches-py data/cifar10
    python3 scripts/convert_to_idx.py svhn path/with/train_32x32.mat data/svhn

Images are written as `[N, H, W, C]` unsigned bytes (`*-images-idx4-ubyte.gz`),
labels as `[N]` unsigned bytes. SVHN's label 10 (digit zero) becomes 0.
Nothing is downloaded.
"""
import gzip
import pickle
import struct
import sys
from pathlib import Path

import numpy as np


def write_idx(path: Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">BBBB", 0, 0, 0x08, array.ndim))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def cifar10(src: Path):
    def batch(name):
        with open(src / name, "rb") as f:
            d = pickle.load(f, encoding="bytes")
        images = d[b"data"].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
        return images, np.asarray(d[b"labels"], dtype=np.uint8)

    parts = [batch(f"data_batch_{i}") for i in range(1, 6)]
    train = (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
    return train, batch("test_batch")


def svhn(src: Path):
    from scipy.io import loadmat

    def split(name):
        m = loadmat(src / name)
        images = m["X"].transpose(3, 0, 1, 2)
        labels = m["y"].reshape(-1) % 10
        return images, labels.astype(np.uint8)

    return split("train_32x32.mat"), split("test_32x32.mat")


def main(kind: str, src: Path, dst: Path) -> None:
    readers = {"cifar10": cifar10, "svhn": svhn}
    if kind not in readers:
        sys.exit(f"unknown dataset {kind!r}; expected one of {sorted(readers)}")
    (train_x, train_y), (test_x, test_y) = readers[kind](src)
    dst.mkdir(parents=True, exist_ok=True)
    for prefix, x, y in (("train", train_x, train_y), ("t10k", test_x, test_y)):
        write_idx(dst / f"{prefix}-images-idx4-ubyte.gz", x)
        write_idx(dst / f"{prefix}-labels-idx1-ubyte.gz", y)
        print(prefix, x.shape)


if __name__ == "__main__":
    if len(sys.argv) != 4:
        sys.exit(__doc__)
    main(sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3]))
