"""Shared array helpers: seeded generators, initialization, row-norm constraints.

Matrices and vectors are plain float64 numpy arrays stored row-major, so the
encoder rows ``W[j]`` are contiguous.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DTYPE = np.float64
# rows within this relative distance of the constraint surface count as feasible
FEASIBLE_TOL = 1e-12


@dataclass(frozen=True)
class ConstraintKind:
    """Row-norm constraint applied to encoder weights after each update.

    ``kind`` is one of ``"none"``, ``"unit"`` or ``"max"``; ``c`` is the ball
    radius for ``"max"``.
    """

    kind: str = "none"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "unit", "max"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "max" and not self.c > 0:
            raise ValueError(f"max-norm radius must be positive, got {self.c}")

    @classmethod
    def none(cls) -> "ConstraintKind":
        return cls("none")

    @classmethod
    def unit_norm(cls) -> "ConstraintKind":
        return cls("unit")

    @classmethod
    def max_norm(cls, c: float) -> "ConstraintKind":
        return cls("max", float(c))

    @classmethod
    def parse(cls, text: str) -> "ConstraintKind":
        """Parse ``none``, ``unit`` or ``max:<c>``."""
        text = text.strip().lower()
        if text in ("none", "unit"):
            return cls(text)
        if text.startswith("max"):
            _, _, c = text.partition(":")
            return cls.max_norm(float(c) if c else 1.0)
        raise ValueError(f"cannot parse constraint {text!r}")

    def __str__(self) -> str:
        if self.kind == "max":
            return f"max:{self.c:g}"
        return self.kind


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; equal seeds give bit-identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent child streams derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def glorot_init(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform ``m x n`` draw on ``[-sqrt(6/(m+n)), sqrt(6/(m+n))]``."""
    if m < 1 or n < 1:
        raise ValueError(f"glorot_init needs m, n >= 1, got {m}x{n}")
    limit = np.sqrt(6.0 / (m + n))
    return rng.uniform(-limit, limit, size=(m, n)).astype(DTYPE, copy=False)


def row_norms(W: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", W, W))


def project_rows(W: np.ndarray, kind: ConstraintKind) -> np.ndarray:
    """Return a copy of ``W`` with rows projected per ``kind``.

    Rows already feasible to within ``FEASIBLE_TOL`` are copied untouched, which
    makes the projection exactly idempotent. Zero rows stay zero.
    """
    out = W.copy()
    if kind.kind == "none":
        return out
    # scale by the largest entry first so tiny rows do not underflow when squared
    peak = np.max(np.abs(W), axis=1, initial=0.0)
    safe = np.where(peak > 0, peak, 1.0)
    norms = peak * row_norms(W / safe[:, None])
    if kind.kind == "unit":
        move = (norms > 0) & (np.abs(norms - 1.0) > FEASIBLE_TOL)
        out[move] = (W[move] / safe[move, None]) / (norms[move] / safe[move])[:, None]
    else:
        move = norms > kind.c * (1.0 + FEASIBLE_TOL)
        out[move] *= (kind.c / norms[move])[:, None]
    return out
