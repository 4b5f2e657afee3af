#!/usr/bin/env python3
"""Write scikit-learn's bundled 8x8 handwritten digits as IDX train/test files.

The output feeds the image benchmark used by the acceptance suite and the
example configs. The split is a fixed, seeded permutation so the files are
reproducible byte for byte.
"""

import argparse
import pathlib
import struct

import numpy as np
from sklearn.datasets import load_digits


def write_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="tests/data/digits")
    parser.add_argument("--test-fraction", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=20220801)
    args = parser.parse_args()

    digits = load_digits()
    # 0..16 gray levels -> 0..255 bytes
    images = np.rint(digits.images * (255.0 / 16.0)).clip(0, 255)
    labels = digits.target

    perm = np.random.default_rng(args.seed).permutation(len(labels))
    n_test = int(round(len(labels) * args.test_fraction))
    test_idx, train_idx = perm[:n_test], perm[n_test:]

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", images[train_idx])
    write_labels(out / "train-labels-idx1-ubyte", labels[train_idx])
    write_images(out / "test-images-idx3-ubyte", images[test_idx])
    write_labels(out / "test-labels-idx1-ubyte", labels[test_idx])
    print(f"train={len(train_idx)} test={len(test_idx)} -> {out}")


if __name__ == "__main__":
    main()
