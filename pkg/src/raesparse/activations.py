"""Encoder nonlinearities with exact first and second derivatives."""
from __future__ import annotations

import enum

import numpy as np
from scipy.special import expit


class Activation(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTPLUS = "softplus"
    TANH = "tanh"

    @classmethod
    def parse(cls, name: str) -> "Activation":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown activation {name!r}; expected one of "
                f"{[a.value for a in cls]}") from None

    @property
    def delta_min(self) -> float:
        """Threshold at or below which a unit counts as de-activated.

        Tanh gets 0.1 only so that sweeps can be compared with the
        negatively-saturating activations.
        """
        return 0.0 if self is Activation.RELU else 0.1

    @property
    def non_decreasing(self) -> bool:
        return True

    @property
    def convex(self) -> bool:
        return self in (Activation.RELU, Activation.SOFTPLUS)

    @property
    def negative_saturation_at_zero(self) -> bool:
        return self is not Activation.TANH

    def __call__(self, a):
        return act(self, a)

    def d1(self, a):
        return act_d1(self, a)

    def d2(self, a):
        return act_d2(self, a)


def act(kind: Activation, a):
    a = np.asarray(a, dtype=np.float64)
    if kind is Activation.RELU:
        return np.maximum(a, 0.0)
    if kind is Activation.SIGMOID:
        return expit(a)
    if kind is Activation.SOFTPLUS:
        return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))
    if kind is Activation.TANH:
        return np.tanh(a)
    raise TypeError(kind)


def act_d1(kind: Activation, a):
    """First derivative. ReLU uses 0 at the kink so dead units stay dead."""
    a = np.asarray(a, dtype=np.float64)
    if kind is Activation.RELU:
        return (a > 0).astype(np.float64)
    if kind is Activation.SIGMOID:
        s = expit(a)
        return s * (1.0 - s)
    if kind is Activation.SOFTPLUS:
        return expit(a)
    if kind is Activation.TANH:
        t = np.tanh(a)
        return 1.0 - t * t
    raise TypeError(kind)


def act_d2(kind: Activation, a):
    """Second derivative; ReLU's Dirac mass at 0 is dropped."""
    a = np.asarray(a, dtype=np.float64)
    if kind is Activation.RELU:
        return np.zeros_like(a)
    if kind is Activation.SIGMOID:
        s = expit(a)
        return s * (1.0 - s) * (1.0 - 2.0 * s)
    if kind is Activation.SOFTPLUS:
        s = expit(a)
        return s * (1.0 - s)
    if kind is Activation.TANH:
        t = np.tanh(a)
        return -2.0 * t * (1.0 - t * t)
    raise TypeError(kind)
