#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the `mnist` npm package into
gzipped IDX files (5,000 train / 5,000 test).

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_subset_from_npm.py package/src/digits data/mnist
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main(src: Path, dst: Path) -> None:
    samples = []
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        count = len(raw) // 784
        for i in range(count):
            pixels = bytes(round(v * 255) for v in raw[i * 784:(i + 1) * 784])
            samples.append((pixels, digit))
    random.Random(0).shuffle(samples)
    half = len(samples) // 2
    dst.mkdir(parents=True, exist_ok=True)
    for prefix, part in (("train", samples[:half]), ("t10k", samples[half:])):
        with gzip.GzipFile(dst / f"{prefix}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">IIII", 2051, len(part), 28, 28))
            for pixels, _ in part:
                f.write(pixels)
        with gzip.GzipFile(dst / f"{prefix}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">II", 2049, len(part)))
            f.write(bytes(label for _, label in part))
        print(prefix, len(part))


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
