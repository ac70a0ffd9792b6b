#!/usr/bin/env python3
"""Convert the digits shipped in the npm `mnist` package (v1.1.0) to IDX files.

The package holds 10,000 MNIST digits as JSON arrays of byte/255 values rounded
to three decimals, which round back to the original bytes. They are shuffled
with a fixed seed and split 8,000 / 2,000 into train and test files.

usage: scripts/mnist_from_npm.py PACKAGE_DIR OUT_DIR
"""

import json
import struct
import sys
from pathlib import Path

import numpy as np

N_TRAIN = 8000
SEED = 20170831


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    images, labels = [], []
    for digit in range(10):
        raw = np.array(json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"])
        pixels = np.rint(raw * 255).astype(np.int64)
        assert pixels.min() >= 0 and pixels.max() <= 255
        assert np.allclose(np.round(pixels / 255, 3), raw)
        pixels = pixels.reshape(-1, 784)
        images.append(pixels)
        labels.append(np.full(len(pixels), digit))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(SEED).permutation(len(labels))
    images, labels = images[order], labels[order]
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", images[:N_TRAIN])
    write_labels(out / "train-labels-idx1-ubyte", labels[:N_TRAIN])
    write_images(out / "t10k-images-idx3-ubyte", images[N_TRAIN:])
    write_labels(out / "t10k-labels-idx1-ubyte", labels[N_TRAIN:])
    print(f"wrote {N_TRAIN} train and {len(labels) - N_TRAIN} test digits to {out}")


if __name__ == "__main__":
    main()
