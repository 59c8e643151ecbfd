#!/usr/bin/env python3
"""Rebuild data/mnist-subset/ from the `mnist` npm package.

The package bundles 10,000 MNIST digits as JSON arrays of intensities
rounded to three decimals; multiplying by 255 and rounding recovers the
original bytes exactly. Digits are interleaved with a fixed seed so that
contiguous train/validation/test slices are class-balanced.

Usage: scripts/fetch_mnist_subset.py [OUT_DIR]
"""
import gzip
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(__file__), "..", "data", "mnist-subset")
    os.makedirs(out_dir, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        samples = []
        for digit in range(10):
            path = os.path.join(tmp, "package", "src", "digits", f"{digit}.json")
            with open(path) as f:
                flat = json.load(f)["data"]
            for i in range(0, len(flat), 784):
                pixels = bytes(int(round(v * 255)) for v in flat[i:i + 784])
                samples.append((pixels, digit))
    random.Random(20211206).shuffle(samples)

    n = len(samples)
    with gzip.GzipFile(os.path.join(out_dir, "images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with gzip.GzipFile(os.path.join(out_dir, "labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {out_dir}")


if __name__ == "__main__":
    main()
