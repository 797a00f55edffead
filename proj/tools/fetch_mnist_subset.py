#!/usr/bin/env python3
"""Build data/mnist5k from the 5,000-image MNIST subset bundled with mlxtend.

The subset holds 500 training images per digit class, drawn from the
standard MNIST training set. It is written as gzip-compressed IDX files:

  images-idx3-ubyte.gz  (magic 0x00000803, 5000 x 28 x 28, u8)
  labels-idx1-ubyte.gz  (magic 0x00000801, 5000, u8)

Usage: fetch_mnist_subset.py [--out data/mnist5k]
"""

import argparse
import gzip
import io
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_csv(workdir: pathlib.Path) -> bytes:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "mlxtend==0.24.0",
         "--no-deps", "-d", str(workdir)],
        check=True)
    wheel = next(workdir.glob("mlxtend-*.whl"))
    with zipfile.ZipFile(wheel) as zf:
        return zf.read(MEMBER)


def write_idx(path: pathlib.Path, images: np.ndarray, labels: np.ndarray):
    n = images.shape[0]
    header = struct.pack(">IIII", 0x00000803, n, 28, 28)
    with gzip.GzipFile(path / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(header + images.astype(np.uint8).tobytes())
    header = struct.pack(">II", 0x00000801, n)
    with gzip.GzipFile(path / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(header + labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/mnist5k")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        raw = fetch_csv(pathlib.Path(tmp))
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")
    images = table[:, :784].reshape(-1, 28, 28)
    labels = table[:, 784]
    assert images.shape[0] == 5000 and images.max() <= 255
    write_idx(out, images, labels)
    print(f"wrote {images.shape[0]} images to {out}")


if __name__ == "__main__":
    main()
