"""Convert a ``pixels...,label`` CSV of 28x28 digits into gzipped IDX files.

Used to build the small MNIST fixture shipped in ``tests/data`` from the
5000-sample MNIST subset bundled with mlxtend (``mnist_5k.csv.gz``), since the
full dataset cannot be downloaded in every environment.

    python scripts/csv_to_idx.py mnist_5k.csv.gz tests/data/mnist5k
    python scripts/csv_to_idx.py mlxtend-0.24.0-py3-none-any.whl tests/data/mnist5k
"""
import gzip
import io
import struct
import sys
import zipfile

import numpy as np


def read_rows(path):
    if path.endswith(".whl"):
        with zipfile.ZipFile(path) as z:
            raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    elif path.endswith(".gz"):
        with gzip.open(path, "rb") as f:
            raw = f.read()
    else:
        with open(path, "rb") as f:
            raw = f.read()
    return np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)


def main(src, prefix):
    rows = read_rows(src)
    pixels = rows[:, :-1].astype(np.uint8)
    labels = rows[:, -1].astype(np.uint8)
    n = len(rows)
    with gzip.GzipFile(prefix + "-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(pixels.tobytes())
    with gzip.GzipFile(prefix + "-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
