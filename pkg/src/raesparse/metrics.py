"""Hidden-unit sparsity measurements and the theory-side bounds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import Activation
from .model import ForwardCache
from .numerics import row_norms


@dataclass
class SparsityReport:
    avg_activation_fraction: float
    dead_unit_fraction: float
    per_unit_mean_a: np.ndarray
    per_unit_var_a: np.ndarray
    per_unit_activation_fraction: np.ndarray

    def to_dict(self) -> dict:
        return {
            "avg_activation_fraction": self.avg_activation_fraction,
            "dead_unit_fraction": self.dead_unit_fraction,
            "per_unit_mean_a": self.per_unit_mean_a.tolist(),
            "per_unit_var_a": self.per_unit_var_a.tolist(),
            "per_unit_activation_fraction": self.per_unit_activation_fraction.tolist(),
        }


def sparsity_report(H: np.ndarray, A: np.ndarray, delta_min: float) -> SparsityReport:
    """Activation statistics over ``N`` samples and ``m`` units.

    A unit is active on a sample when ``h > delta_min`` (strict), so ReLU's
    exact zeros never count. Dead units are active on no sample.
    """
    H = np.atleast_2d(H)
    A = np.atleast_2d(A)
    if H.shape != A.shape:
        raise ValueError(f"H {H.shape} and A {A.shape} differ in shape")
    per_unit = (H > delta_min).mean(axis=0)
    return SparsityReport(
        avg_activation_fraction=float(per_unit.mean()),
        dead_unit_fraction=float(np.mean(per_unit == 0)),
        per_unit_mean_a=A.mean(axis=0),
        per_unit_var_a=A.var(axis=0),
        per_unit_activation_fraction=per_unit,
    )


def lemma1_bound(sigma_r: float, n: int, W: np.ndarray) -> np.ndarray:
    """Per-unit bound ``2 sigma_r sqrt(n) ||W_j||`` on the AE bias gradient."""
    if sigma_r < 0:
        raise ValueError(f"sigma_r must be >= 0, got {sigma_r}")
    return 2.0 * sigma_r * np.sqrt(n) * row_norms(W)


def residual_std(cache: ForwardCache) -> float:
    """Root mean square of all residual entries (mean fixed at zero)."""
    return float(np.sqrt(np.mean(cache.r ** 2)))


class BoundNotApplicable(ValueError):
    """Raised when the mean pre-activation is not below ``a_min``."""


def chebyshev_sparsity_bound(mean_a: float, var_a: float, a_min: float) -> float:
    """Lower bound on ``P(a <= a_min)`` from Chebyshev's inequality."""
    if not mean_a < a_min:
        raise BoundNotApplicable(
            f"mean pre-activation {mean_a:.6g} is not below a_min={a_min:.6g}")
    return max(0.0, 1.0 - var_a / (a_min - mean_a) ** 2)


def a_min_for(kind: Activation, delta_min: float) -> float:
    """Largest pre-activation whose activation does not exceed ``delta_min``."""
    if kind is Activation.RELU:
        if delta_min < 0:
            raise ValueError(f"ReLU threshold must be >= 0, got {delta_min}")
        return float(delta_min)
    if kind is Activation.SIGMOID:
        if not 0 < delta_min < 1:
            raise ValueError(f"sigmoid threshold must lie in (0, 1), got {delta_min}")
        return float(np.log(delta_min / (1 - delta_min)))
    if kind is Activation.SOFTPLUS:
        if not delta_min > 0:
            raise ValueError(f"softplus threshold must be > 0, got {delta_min}")
        return float(np.log(np.expm1(delta_min)))
    if kind is Activation.TANH:
        if not -1 < delta_min < 1:
            raise ValueError(f"tanh threshold must lie in (-1, 1), got {delta_min}")
        return float(np.arctanh(delta_min))
    raise TypeError(kind)
