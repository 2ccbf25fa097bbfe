"""Dataset loading, preprocessing and the synthetic whitened generator."""
from __future__ import annotations

import csv
import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32
MNIST_TRAIN_COUNT = 50_000


class DataFormatError(ValueError):
    """A dataset file does not match its binary layout."""

    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: at byte {offset}: {message}")
        self.path = path
        self.offset = offset


@dataclass
class Dataset:
    samples: np.ndarray
    provenance: str = "RAW"
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.shape[0] < 1:
            raise ValueError("a dataset needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("dataset contains non-finite values")

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def head(self, count: int) -> "Dataset":
        labels = None if self.labels is None else self.labels[:count]
        return Dataset(self.samples[:count], self.provenance, labels)


def _read_bytes(path) -> bytes:
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _idx_header(raw: bytes, path, magic: int, ndim: int) -> tuple[int, ...]:
    if len(raw) < 4:
        raise DataFormatError(path, len(raw), "file too short for a magic number")
    got = struct.unpack_from(">I", raw, 0)[0]
    if got != magic:
        raise DataFormatError(path, 0, f"magic 0x{got:08x}, expected 0x{magic:08x}")
    need = 4 * (1 + ndim)
    if len(raw) < need:
        raise DataFormatError(path, len(raw), f"header needs {need} bytes")
    return struct.unpack_from(f">{ndim}I", raw, 4)


def load_mnist_idx(images_path, labels_path=None,
                   limit: int | None = MNIST_TRAIN_COUNT) -> Dataset:
    """Read an IDX image file (optionally gzipped) into ``[0, 1]`` pixels.

    Only the first ``limit`` images are kept; ``None`` keeps them all.
    """
    raw = _read_bytes(images_path)
    count, rows, cols = _idx_header(raw, images_path, IDX_IMAGES_MAGIC, 3)
    size = rows * cols
    need = 16 + count * size
    if len(raw) < need:
        raise DataFormatError(images_path, len(raw),
                              f"truncated: {count} images need {need} bytes")
    keep = count if limit is None else min(count, limit)
    pixels = np.frombuffer(raw, dtype=np.uint8, count=keep * size, offset=16)
    labels = None
    if labels_path is not None:
        lraw = _read_bytes(labels_path)
        (lcount,) = _idx_header(lraw, labels_path, IDX_LABELS_MAGIC, 1)
        if lcount != count or len(lraw) < 8 + lcount:
            raise DataFormatError(labels_path, len(lraw),
                                  f"label count {lcount} does not match {count} images")
        labels = np.frombuffer(lraw, dtype=np.uint8, count=keep, offset=8).copy()
    return Dataset(pixels.reshape(keep, size) / 255.0, "MNIST", labels)


def read_cifar10_bin(path) -> np.ndarray:
    """Images of one CIFAR-10 binary batch as uint8 ``(N, 3, 32, 32)``."""
    raw = _read_bytes(path)
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise DataFormatError(path, len(raw) - len(raw) % CIFAR_RECORD,
                              f"length {len(raw)} is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    return records[:, 1:].reshape(-1, 3, 32, 32)


def load_cifar10_patches(bin_paths, patch: int, num: int,
                         rng: np.random.Generator) -> Dataset:
    """Crop ``num`` random ``patch x patch`` colour patches, pixels in ``[0, 1]``.

    Each patch picks a uniform image and a uniform top-left offset; the result
    is flattened channel-planar, so ``n = 3 * patch**2``.
    """
    if not 1 <= patch <= 32:
        raise ValueError(f"patch size must be in [1, 32], got {patch}")
    if isinstance(bin_paths, (str, os.PathLike)):
        bin_paths = [bin_paths]
    images = np.concatenate([read_cifar10_bin(p) for p in bin_paths])
    idx = rng.integers(0, images.shape[0], size=num)
    span = 32 - patch + 1
    rows = rng.integers(0, span, size=num)
    cols = rng.integers(0, span, size=num)
    out = np.empty((num, 3, patch, patch), dtype=np.uint8)
    for k in range(num):
        r, c = rows[k], cols[k]
        out[k] = images[idx[k], :, r:r + patch, c:c + patch]
    return Dataset(out.reshape(num, -1) / 255.0, "CIFAR10_PATCHES")


def standardize(data: Dataset, std_floor: float = 0.0, mode: str = "sample") -> Dataset:
    """Subtract the mean and divide by ``std + std_floor``.

    ``mode="sample"`` normalizes each sample across its dimensions (population
    std); ``mode="feature"`` normalizes each dimension across samples. A zero
    denominator, or a spread at rounding level, maps the values to zero.
    """
    if std_floor < 0:
        raise ValueError(f"std_floor must be >= 0, got {std_floor}")
    axis = {"sample": 1, "feature": 0}[mode]
    X = data.samples
    centred = X - X.mean(axis=axis, keepdims=True)
    std = X.std(axis=axis, keepdims=True)
    # a spread at rounding level means the values are constant
    scale = np.max(np.abs(X), axis=axis, keepdims=True)
    flat = std <= 1e-12 * scale
    denom = np.where(flat, 0.0, std) + std_floor
    safe = np.where(denom > 0, denom, 1.0)
    out = np.where(flat | (denom == 0), 0.0, centred / safe)
    return Dataset(out, data.provenance, data.labels)


def synth_whitened_gaussian(n: int, N: int, rng: np.random.Generator) -> Dataset:
    """``N x n`` Gaussian sample with exactly zero mean and identity covariance.

    The covariance convention is ``X^T X / N``, matching the population
    variances used by the sparsity metrics.
    """
    if not N > n:
        raise ValueError(f"need N > n for a full-rank sample, got N={N}, n={n}")
    while True:
        X = rng.standard_normal((N, n))
        X -= X.mean(axis=0)
        evals, evecs = np.linalg.eigh(X.T @ X / N)
        if evals.min() > 1e-8 * evals.max():
            break
    X = X @ (evecs / np.sqrt(evals)) @ evecs.T
    X -= X.mean(axis=0)
    return Dataset(X, "SYNTHETIC")


def save_csv(data: Dataset, path) -> None:
    """Write samples as CSV using shortest round-trip float text."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for row in data.samples:
            w.writerow([repr(float(v)) for v in row])


def load_csv(path, provenance: str = "RAW") -> Dataset:
    with open(path, newline="") as f:
        rows = [[float(v) for v in row] for row in csv.reader(f) if row]
    return Dataset(np.array(rows), provenance)
