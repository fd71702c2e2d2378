#!/usr/bin/env python3
"""Build the desk-scale MNIST subset shipped in data/mnist/.

Reads the per-digit JSON files bundled with the npm `mnist` package
(https://www.npmjs.com/package/mnist, 10,000 genuine MNIST digits with
pixels stored as round(byte/255, 3)), recovers the original pixel bytes,
makes a stratified train/test split, and writes standard big-endian IDX
files. Run once; the output is committed.

Usage:
  python3 scripts/make_mnist_subset.py --digits-dir node_modules/mnist/src/digits \
      --out data/mnist [--train-frac 0.8] [--seed 7]
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np


def write_idx_images(path: Path, images: np.ndarray) -> None:
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits-dir", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--train-frac", type=float, default=0.8)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    digits_dir = Path(args.digits_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(args.seed)
    train_x, train_y, test_x, test_y = [], [], [], []
    for digit in range(10):
        flat = np.array(json.loads((digits_dir / f"{digit}.json").read_text())["data"])
        imgs = flat.reshape(-1, 28, 28)
        bytes_ = np.round(imgs * 255.0)
        assert np.abs(imgs * 255.0 - bytes_).max() < 0.5, "pixel bytes not recoverable"
        imgs = bytes_.astype(np.uint8)
        perm = rng.permutation(len(imgs))
        imgs = imgs[perm]
        n_train = int(round(len(imgs) * args.train_frac))
        train_x.append(imgs[:n_train])
        train_y.append(np.full(n_train, digit))
        test_x.append(imgs[n_train:])
        test_y.append(np.full(len(imgs) - n_train, digit))

    def assemble(xs, ys):
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        perm = rng.permutation(len(x))
        return x[perm], y[perm]

    tr_x, tr_y = assemble(train_x, train_y)
    te_x, te_y = assemble(test_x, test_y)

    write_idx_images(out / "train-images-idx3-ubyte", tr_x)
    write_idx_labels(out / "train-labels-idx1-ubyte", tr_y)
    write_idx_images(out / "test-images-idx3-ubyte", te_x)
    write_idx_labels(out / "test-labels-idx1-ubyte", te_y)
    print(f"wrote {len(tr_x)} train / {len(te_x)} test images to {out}")


if __name__ == "__main__":
    main()
