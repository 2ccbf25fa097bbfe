"""Tied-weight, linearly decoded auto-encoder: forward pass, loss, gradients.

Shapes used throughout: a batch ``x`` is ``(B, n)``, the encoder matrix ``W``
is ``(m, n)``, pre-activations and hidden values are ``(B, m)``. The
reconstruction is ``y = s(x W^T + b_e) W + b_d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import Activation
from .numerics import glorot_init


@dataclass
class ModelParams:
    W: np.ndarray
    b_e: np.ndarray
    b_d: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b_e = np.asarray(self.b_e, dtype=np.float64)
        self.b_d = np.asarray(self.b_d, dtype=np.float64)
        m, n = self.W.shape
        if self.b_e.shape != (m,) or self.b_d.shape != (n,):
            raise ValueError(
                f"bias shapes {self.b_e.shape}, {self.b_d.shape} do not match "
                f"W of shape {self.W.shape}")

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, m: int, n: int) -> "ModelParams":
        return cls(np.zeros((m, n)), np.zeros(m), np.zeros(n))

    @classmethod
    def initialize(cls, m: int, n: int, rng: np.random.Generator) -> "ModelParams":
        """Glorot-uniform weights, zero biases."""
        return cls(glorot_init(m, n, rng), np.zeros(m), np.zeros(n))

    def copy(self) -> "ModelParams":
        return ModelParams(self.W.copy(), self.b_e.copy(), self.b_d.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b_e, self.b_d])

    def with_flat(self, theta: np.ndarray) -> "ModelParams":
        m, n = self.W.shape
        return ModelParams(theta[:m * n].reshape(m, n),
                           theta[m * n:m * n + m], theta[m * n + m:])

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "b_e": self.b_e.tolist(),
                "b_d": self.b_d.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(np.array(d["W"]), np.array(d["b_e"]), np.array(d["b_d"]))


@dataclass
class Gradients:
    dW: np.ndarray
    db_e: np.ndarray
    db_d: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Gradients":
        return cls(np.zeros_like(params.W), np.zeros_like(params.b_e),
                   np.zeros_like(params.b_d))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.dW.ravel(), self.db_e, self.db_d])

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(self.dW + other.dW, self.db_e + other.db_e,
                         self.db_d + other.db_d)

    def scaled(self, c: float) -> "Gradients":
        return Gradients(c * self.dW, c * self.db_e, c * self.db_d)


@dataclass
class ForwardCache:
    x: np.ndarray
    a: np.ndarray
    h: np.ndarray
    y: np.ndarray
    r: np.ndarray
    target: np.ndarray = field(repr=False, default=None)


def _check_batch(batch: np.ndarray, params: ModelParams) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != params.n:
        raise ValueError(
            f"batch of shape {batch.shape} does not match input dimension "
            f"{params.n}")
    return batch


def forward(batch: np.ndarray, params: ModelParams, kind: Activation,
            target: np.ndarray | None = None) -> ForwardCache:
    """Encode ``batch`` and reconstruct it.

    ``target`` defaults to ``batch``; denoising passes the clean samples here
    while encoding the corrupted ones.
    """
    x = _check_batch(batch, params)
    t = x if target is None else _check_batch(target, params)
    if t.shape != x.shape:
        raise ValueError(f"target shape {t.shape} != batch shape {x.shape}")
    a = x @ params.W.T + params.b_e
    h = kind(a)
    y = h @ params.W + params.b_d
    return ForwardCache(x=x, a=a, h=h, y=y, r=t - y, target=t)


def ae_loss(cache: ForwardCache) -> float:
    """Mean over samples of the squared reconstruction error."""
    r = cache.r
    return float(np.einsum("bi,bi->", r, r) / r.shape[0])


def backprop(x_in: np.ndarray, params: ModelParams, h: np.ndarray,
             d1: np.ndarray, g_y: np.ndarray,
             g_h_extra: np.ndarray | None = None) -> Gradients:
    """Push a gradient w.r.t. the reconstruction back to the parameters.

    ``g_y`` is dJ/dy ``(B, n)``; ``g_h_extra`` adds any direct dJ/dh term.
    """
    g_h = g_y @ params.W.T
    if g_h_extra is not None:
        g_h = g_h + g_h_extra
    g_a = g_h * d1
    dW = g_a.T @ x_in + h.T @ g_y
    return Gradients(dW=dW, db_e=g_a.sum(axis=0), db_d=g_y.sum(axis=0))


def ae_grads(batch: np.ndarray, params: ModelParams, kind: Activation,
             cache: ForwardCache | None = None) -> Gradients:
    """Analytic gradient of :func:`ae_loss`.

    Both paths of the tied weights contribute to ``dW``: the encoder path
    ``g_a^T x`` and the decoder path ``h^T g_y``.
    """
    if cache is None:
        cache = forward(batch, params, kind)
    g_y = -2.0 * cache.r / cache.r.shape[0]
    return backprop(cache.x, params, cache.h, kind.d1(cache.a), g_y)
