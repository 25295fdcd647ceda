#!/usr/bin/env python3
# Copyright 2026 The ttrnn Authors. Apache 2.0 License.
#
# Builds a small gzipped IDX copy of MNIST from the digit arrays shipped in
# the `mnist` npm package (10,000 digits, pixel values stored as v/255 with
# three decimals, which round-trips exactly to the original bytes).
#
#   npm pack mnist && tar xzf mnist-*.tgz
#   python3 tools/make_mnist_subset.py package/src/digits data/mnist
#
# The first 8,000 shuffled digits become the "train" pair and the remaining
# 2,000 the "t10k" pair.

import gzip
import json
import pathlib
import random
import struct
import sys


def main():
    src = pathlib.Path(sys.argv[1])
    dst = pathlib.Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for label in range(10):
        data = json.loads((src / f"{label}.json").read_text())["data"]
        count = len(data) // 784
        for k in range(count):
            pixels = bytes(round(v * 255) for v in data[k * 784:(k + 1) * 784])
            samples.append((pixels, label))
    random.Random(20200713).shuffle(samples)
    splits = {"train": samples[:8000], "t10k": samples[8000:]}
    for name, rows in splits.items():
        with gzip.GzipFile(dst / f"{name}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">IIII", 0x803, len(rows), 28, 28))
            for pixels, _ in rows:
                f.write(pixels)
        with gzip.GzipFile(dst / f"{name}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">II", 0x801, len(rows)))
            f.write(bytes(label for _, label in rows))
        print(name, len(rows))


if __name__ == "__main__":
    main()
