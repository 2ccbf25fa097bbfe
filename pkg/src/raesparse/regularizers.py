"""Regularized objectives and their analytic gradients.

Penalty functions (``reg_cae``, ``reg_mdae``, ``reg_sae``, ``reg_generic_c1``,
``reg_generic_c2``) return the bare penalty, without the coefficient and
without the reconstruction term. ``dae_loss`` and ``reg_edae`` return the full
objective because their coefficient is the corruption variance, which lives
inside the loss.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .activations import Activation
from .model import ForwardCache, Gradients, ModelParams, ae_grads, ae_loss, backprop, forward
from .numerics import row_norms


class DomainError(ValueError):
    """A sparsity penalty was evaluated outside its domain."""

    def __init__(self, message: str, unit: int):
        super().__init__(message)
        self.unit = unit


class Objective(enum.Enum):
    AE = "ae"
    DAE = "dae"
    CAE = "cae"
    MDAE = "mdae"
    SAE = "sae"
    EDAE = "edae"
    GENERIC_C1 = "c1"
    GENERIC_C2 = "c2"

    @classmethod
    def parse(cls, name: str) -> "Objective":
        key = name.strip().lower()
        aliases = {"genericc1": "c1", "generic_c1": "c1",
                   "genericc2": "c2", "generic_c2": "c2"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown objective {name!r}") from None

    @property
    def has_penalty(self) -> bool:
        """True when the objective is ``ae_loss + coeff * penalty``."""
        return self not in (Objective.AE, Objective.DAE, Objective.EDAE)


class C2Function(enum.Enum):
    IDENTITY = "identity"
    NEG_LOG_ONE_MINUS = "neglog1m"


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: Objective = Objective.AE
    coeff: float = 0.0
    dae_samples: int = 1
    sae_rho: float = 0.0
    c1_q: int = 2
    c1_p: int = 2
    c2_f: C2Function = C2Function.IDENTITY

    def __post_init__(self):
        if self.coeff < 0:
            raise ValueError(f"coefficient must be >= 0, got {self.coeff}")
        if self.dae_samples < 1:
            raise ValueError("dae_samples must be >= 1")
        if not 0 <= self.sae_rho < 1:
            raise ValueError(f"sae_rho must lie in [0, 1), got {self.sae_rho}")
        if self.c1_q < 1 or self.c1_p < 0:
            raise ValueError(f"need q >= 1 and p >= 0, got q={self.c1_q}, p={self.c1_p}")

    def with_coeff(self, coeff: float) -> "ObjectiveSpec":
        return ObjectiveSpec(self.kind, coeff, self.dae_samples, self.sae_rho,
                             self.c1_q, self.c1_p, self.c2_f)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "coeff": self.coeff,
                "dae_samples": self.dae_samples, "sae_rho": self.sae_rho,
                "c1_q": self.c1_q, "c1_p": self.c1_p, "c2_f": self.c2_f.value}

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveSpec":
        return cls(Objective.parse(d["kind"]), float(d.get("coeff", 0.0)),
                   int(d.get("dae_samples", 1)), float(d.get("sae_rho", 0.0)),
                   int(d.get("c1_q", 2)), int(d.get("c1_p", 2)),
                   C2Function(d.get("c2_f", "identity")))


def _pre_activations(batch, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    return x, x @ params.W.T + params.b_e


def reg_generic_c1(batch, params: ModelParams, kind: Activation, q: int = 2,
                   p: int = 2) -> tuple[float, Gradients]:
    """Batch mean of ``sum_j s'(a_j)^q ||W_j||^p`` and its gradient."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    x, a = _pre_activations(batch, params)
    B = x.shape[0]
    d1 = kind.d1(a)
    d2 = kind.d2(a)
    norms = row_norms(params.W)
    wp = norms ** p
    d1q = d1 ** q
    value = float(np.sum(d1q @ wp) / B)

    g_a = (q * d1 ** (q - 1) * d2) * wp / B
    # d||W_j||^p / dW_j = p ||W_j||^(p-2) W_j, taken as 0 on zero rows
    radial = np.zeros_like(norms)
    if p > 0:
        nz = norms > 0
        radial[nz] = p * norms[nz] ** (p - 2)
    radial *= d1q.sum(axis=0) / B
    dW = g_a.T @ x + radial[:, None] * params.W
    return value, Gradients(dW, g_a.sum(axis=0), np.zeros(params.n))


def reg_cae(batch, params: ModelParams, kind: Activation) -> tuple[float, Gradients]:
    """Contractive penalty ``E ||dh/dx||_F^2`` in its closed form for tied weights."""
    return reg_generic_c1(batch, params, kind, q=2, p=2)


def reg_mdae(batch, params: ModelParams, kind: Activation) -> tuple[float, Gradients]:
    """Marginalized denoising penalty with equal per-dimension variance."""
    return reg_generic_c1(batch, params, kind, q=2, p=4)


def _mean_activation(batch, params: ModelParams, kind: Activation):
    x, a = _pre_activations(batch, params)
    return x, a, kind(a).mean(axis=0)


def reg_sae(batch, params: ModelParams, kind: Activation,
            rho: float = 0.0) -> tuple[float, Gradients]:
    """KL sparsity penalty on mean activations (natural log).

    With ``rho == 0`` this reduces to ``-sum_j log(1 - rho_j)``.
    """
    x, a, rho_j = _mean_activation(batch, params, kind)
    B = x.shape[0]
    bad = np.flatnonzero(rho_j >= 1.0)
    if bad.size:
        j = int(bad[0])
        raise DomainError(f"unit {j} has mean activation {rho_j[j]:.6g} >= 1", j)
    if rho > 0:
        bad = np.flatnonzero(rho_j <= 0.0)
        if bad.size:
            j = int(bad[0])
            raise DomainError(f"unit {j} has mean activation {rho_j[j]:.6g} <= 0 "
                              f"with target rho={rho}", j)
        value = float(np.sum(rho * np.log(rho / rho_j)
                             + (1 - rho) * np.log((1 - rho) / (1 - rho_j))))
        dv = -rho / rho_j + (1 - rho) / (1 - rho_j)
    else:
        value = float(-np.sum(np.log1p(-rho_j)))
        dv = 1.0 / (1.0 - rho_j)
    g_a = kind.d1(a) * dv / B
    return value, Gradients(g_a.T @ x, g_a.sum(axis=0), np.zeros(params.n))


def reg_generic_c2(batch, params: ModelParams, kind: Activation,
                   f: C2Function = C2Function.IDENTITY) -> tuple[float, Gradients]:
    """``sum_j f(E[h_j])`` for a non-decreasing ``f``."""
    if f is C2Function.NEG_LOG_ONE_MINUS:
        return reg_sae(batch, params, kind, rho=0.0)
    x, a, rho_j = _mean_activation(batch, params, kind)
    g_a = kind.d1(a) / x.shape[0]
    return float(rho_j.sum()), Gradients(g_a.T @ x, g_a.sum(axis=0), np.zeros(params.n))


# -- denoising ---------------------------------------------------------------

def corruption_noise(rng: np.random.Generator, K: int, B: int, n: int,
                     antithetic: bool = False) -> np.ndarray:
    """Standard normal draws of shape ``(K, B, n)``.

    With ``antithetic`` the second half is the negation of the first, which
    cancels every odd-order term of the corruption expansion exactly.
    """
    if not antithetic:
        return rng.standard_normal((K, B, n))
    if K % 2:
        raise ValueError(f"antithetic sampling needs an even K, got {K}")
    z = rng.standard_normal((K // 2, B, n))
    return np.concatenate([z, -z])


def dae_draws(batch, params: ModelParams, kind: Activation, sigma2: float, K: int,
              rng: np.random.Generator, antithetic: bool = False) -> np.ndarray:
    """Per-corruption reconstruction loss averaged over the batch, shape ``(K,)``."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    B, n = x.shape
    z = corruption_noise(rng, K, B, n, antithetic)
    xt = x[None] + np.sqrt(sigma2) * z
    y = kind(xt @ params.W.T + params.b_e) @ params.W + params.b_d
    r = x[None] - y
    return np.einsum("kbi,kbi->k", r, r) / B


def dae_loss(batch, params: ModelParams, kind: Activation, sigma2: float, K: int,
             rng: np.random.Generator,
             antithetic: bool = False) -> tuple[float, Gradients]:
    """Explicit-corruption denoising objective and its gradient.

    Every sample is corrupted ``K`` times with ``N(0, sigma2 I)`` noise; the
    loss is the mean squared reconstruction error of the clean sample from each
    corrupted copy.
    """
    if sigma2 < 0 or K < 1:
        raise ValueError(f"need sigma2 >= 0 and K >= 1, got {sigma2}, {K}")
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if sigma2 == 0:
        cache = forward(x, params, kind)
        return ae_loss(cache), ae_grads(x, params, kind, cache)
    B, n = x.shape
    z = corruption_noise(rng, K, B, n, antithetic)
    xt = (x[None] + np.sqrt(sigma2) * z).reshape(K * B, n)
    target = np.broadcast_to(x[None], (K, B, n)).reshape(K * B, n)
    cache = forward(xt, params, kind, target=target)
    return ae_loss(cache), ae_grads(xt, params, kind, cache)


def dae_taylor_terms(batch, params: ModelParams, kind: Activation,
                     cache: ForwardCache | None = None):
    """Per-sample second-order corruption terms, each of shape ``(B,)``.

    Returns ``(self_term, cross_term, residual_term)``:
    ``sum_j s'_j^2 ||W_j||^4``, ``sum_{j != k} s'_j s'_k (W_j . W_k)^2`` and
    ``sum_i e^T W^T (s''  * W[:, i]^2)`` with ``e = y - x``. The last one
    collapses to ``sum_j s''_j ||W_j||^2 (W_j . e)``.
    """
    if cache is None:
        cache = forward(batch, params, kind)
    W = params.W
    d1 = kind.d1(cache.a)
    d2 = kind.d2(cache.a)
    G2 = (W @ W.T) ** 2
    sq = np.diag(G2).copy()
    self_term = (d1 * d1) @ sq
    cross_term = np.einsum("bj,jk,bk->b", d1, G2, d1) - self_term
    e = -cache.r
    residual_term = (d2 * (e @ W.T)) @ np.sqrt(sq)
    return self_term, cross_term, residual_term


def dae_taylor_value(batch, params: ModelParams, kind: Activation,
                     sigma2: float) -> float:
    """Second-order expansion of the denoising objective in the noise variance."""
    cache = forward(batch, params, kind)
    t1, t2, t3 = dae_taylor_terms(batch, params, kind, cache)
    return ae_loss(cache) + sigma2 * float(np.mean(t1 + t2 + t3))


def edae_first_order_term(cache: ForwardCache, params: ModelParams, kind: Activation,
                          eps: np.ndarray) -> np.ndarray:
    """Per-sample ``eps^T grad_x l`` at the clean input, shape ``(B,)``."""
    u = eps @ params.W.T
    v = cache.r @ params.W.T
    return -2.0 * np.einsum("bj,bj,bj->b", u, kind.d1(cache.a), v)


def reg_edae(batch, params: ModelParams, kind: Activation, sigma2: float, K: int,
             rng: np.random.Generator) -> tuple[float, Gradients]:
    """Clean reconstruction loss plus the sampled first-order corruption term.

    The term is linear in the noise, so ``K`` draws collapse to their mean. The
    gradient differentiates through ``grad_x l`` and therefore picks up
    second-derivative contributions for smooth activations.
    """
    if sigma2 < 0 or K < 1:
        raise ValueError(f"need sigma2 >= 0 and K >= 1, got {sigma2}, {K}")
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    B, n = x.shape
    cache = forward(x, params, kind)
    base = ae_grads(x, params, kind, cache)
    if sigma2 == 0:
        return ae_loss(cache), base
    eps = np.sqrt(sigma2) * corruption_noise(rng, K, B, n).mean(axis=0)

    W = params.W
    d1 = kind.d1(cache.a)
    d2 = kind.d2(cache.a)
    u = eps @ W.T
    v = cache.r @ W.T
    t = -2.0 * np.einsum("bj,bj,bj->b", u, d1, v)
    value = ae_loss(cache) + float(t.mean())

    # t = -2 c^T W r with c = u * s'(a), u = W eps, r = x - W^T h - b_d
    c = u * d1
    # path through the reconstruction: dt/dy = 2 W^T c
    through_y = backprop(x, params, cache.h, d1, 2.0 * (c @ W) / B)
    # path through s'(a) inside c
    g_a_curv = -2.0 * v * u * d2 / B
    dW = (through_y.dW
          - 2.0 * c.T @ cache.r / B        # W in v = W r
          - 2.0 * (v * d1).T @ eps / B     # W in u = W eps
          + g_a_curv.T @ x)
    grads = Gradients(dW, through_y.db_e + g_a_curv.sum(axis=0), through_y.db_d)
    return value, base + grads


# -- assembly ----------------------------------------------------------------

def penalty(spec: ObjectiveSpec, batch, params: ModelParams,
            kind: Activation) -> tuple[float, Gradients]:
    """The bare regularizer of a penalty-type objective."""
    k = spec.kind
    if k is Objective.CAE:
        return reg_cae(batch, params, kind)
    if k is Objective.MDAE:
        return reg_mdae(batch, params, kind)
    if k is Objective.SAE:
        return reg_sae(batch, params, kind, spec.sae_rho)
    if k is Objective.GENERIC_C1:
        return reg_generic_c1(batch, params, kind, spec.c1_q, spec.c1_p)
    if k is Objective.GENERIC_C2:
        return reg_generic_c2(batch, params, kind, spec.c2_f)
    raise ValueError(f"objective {k.value} has no separable penalty term")


def objective(spec: ObjectiveSpec, batch, params: ModelParams, kind: Activation,
              rng: np.random.Generator | None = None) -> tuple[float, Gradients]:
    """Full training objective and gradient for one minibatch."""
    k = spec.kind
    if k is Objective.DAE:
        return dae_loss(batch, params, kind, spec.coeff, spec.dae_samples, rng)
    if k is Objective.EDAE:
        return reg_edae(batch, params, kind, spec.coeff, spec.dae_samples, rng)
    cache = forward(batch, params, kind)
    value, grads = ae_loss(cache), ae_grads(batch, params, kind, cache)
    if k is Objective.AE or spec.coeff == 0:
        return value, grads
    pen, pgrads = penalty(spec, batch, params, kind)
    return value + spec.coeff * pen, grads + pgrads.scaled(spec.coeff)


def bias_reg_gradient(spec: ObjectiveSpec, batch, params: ModelParams,
                      kind: Activation) -> np.ndarray:
    """dR/db_e of the penalty alone, without the coefficient."""
    return penalty(spec, batch, params, kind)[1].db_e
