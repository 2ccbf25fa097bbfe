"""Independent oracles, gradient checks and training certificates.

Nothing here is used by training. Each oracle recomputes a quantity along a
different route (finite differences, numeric Jacobians, explicit loops,
Monte Carlo) so that agreement is evidence rather than tautology.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .activations import Activation
from .data import Dataset
from .metrics import (
    BoundNotApplicable, a_min_for, chebyshev_sparsity_bound, lemma1_bound, residual_std)
from .model import Gradients, ModelParams, ae_loss, forward
from .numerics import make_rng, row_norms
from .optimizer import (
    EpochRecord, TrainConfig, TrainHistory, evaluate, init_params, sgd_momentum_step)
from .regularizers import (
    bias_reg_gradient, corruption_noise, dae_taylor_value, objective)


@dataclass
class CheckReport:
    name: str
    passed: bool
    max_rel_error: float
    details: str = ""
    status: str = ""
    tolerance: float = 0.0
    data: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.max_rel_error = float(self.max_rel_error)
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("data")
        return json.dumps(d)


def rel_error(analytic: np.ndarray, reference: np.ndarray, floor: float = 1e-10) -> float:
    """Normwise relative error ``|a - r|_inf / max(|a|_inf, |r|_inf, floor)``."""
    a = np.ravel(analytic)
    r = np.ravel(reference)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(r), initial=0.0), floor)
    return float(np.max(np.abs(a - r), initial=0.0) / scale)


def finite_diff_grads(fn: Callable[[ModelParams], float], params: ModelParams,
                      step: float | None = None) -> Gradients:
    """Central differences of ``fn`` at every parameter coordinate.

    The default step for coordinate ``i`` is ``1e-5 * max(1, |theta_i|)``.
    """
    theta = params.flat()
    g = np.empty_like(theta)
    for i in range(theta.size):
        h = step if step is not None else 1e-5 * max(1.0, abs(theta[i]))
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (fn(params.with_flat(tp)) - fn(params.with_flat(tm))) / (2 * h)
    m, n = params.W.shape
    return Gradients(g[:m * n].reshape(m, n), g[m * n:m * n + m], g[m * n + m:])


def gradient_check(name: str, fn: Callable[[ModelParams], tuple[float, Gradients]],
                   params: ModelParams, tol: float = 1e-6,
                   step: float | None = None) -> CheckReport:
    """Compare ``fn``'s analytic gradient with :func:`finite_diff_grads`."""
    analytic = fn(params)[1]
    numeric = finite_diff_grads(lambda p: fn(p)[0], params, step)
    err = rel_error(analytic.flat(), numeric.flat())
    return CheckReport(name, err <= tol, err, tolerance=tol)


def numeric_encoder_jacobian(x: np.ndarray, params: ModelParams, kind: Activation,
                             step: float = 1e-6) -> np.ndarray:
    """Central-difference ``dh/dx`` at one input, shape ``(m, n)``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    J = np.empty((params.m, params.n))
    for i in range(params.n):
        e = np.zeros_like(x)
        e[i] = step
        hp = kind(params.W @ (x + e) + params.b_e)
        hm = kind(params.W @ (x - e) + params.b_e)
        J[:, i] = (hp - hm) / (2 * step)
    return J


def cae_jacobian_values(batch, params: ModelParams, kind: Activation,
                        step: float = 1e-6) -> np.ndarray:
    """Per-sample ``||dh/dx||_F^2`` from numeric Jacobians."""
    return np.array([np.sum(numeric_encoder_jacobian(x, params, kind, step) ** 2)
                     for x in np.atleast_2d(batch)])


def mdae_double_sum(batch, params: ModelParams, kind: Activation) -> float:
    """Batch mean of ``sum_i sum_j ||W_j||^2 (s'(a_j) W_ji)^2`` by explicit loops."""
    W = params.W
    total = 0.0
    X = np.atleast_2d(batch)
    for x in X:
        d1 = kind.d1(W @ x + params.b_e)
        for i in range(params.n):
            for j in range(params.m):
                total += np.dot(W[j], W[j]) * (d1[j] * W[j, i]) ** 2
    return total / X.shape[0]


def taylor_trace_oracle(batch, params: ModelParams, kind: Activation,
                        sigma2: float) -> float:
    """Second-order denoising objective in trace form.

    Uses ``tr(D W W^T D W W^T)`` plus a column-by-column sum of the residual
    curvature term, one sample at a time.
    """
    W = params.W
    X = np.atleast_2d(batch)
    extra = 0.0
    for x in X:
        a = W @ x + params.b_e
        D = np.diag(kind.d1(a))
        d2 = kind.d2(a)
        e = params.b_d + W.T @ kind(a) - x
        G = W @ W.T
        extra += np.trace(D @ G @ D @ G)
        for i in range(params.n):
            extra += e @ W.T @ (d2 * W[:, i] * W[:, i])
    return ae_loss(forward(X, params, kind)) + sigma2 * extra / X.shape[0]


def input_hessian(x: np.ndarray, params: ModelParams, kind: Activation) -> np.ndarray:
    """Hessian of ``||x - f(x_tilde)||^2`` w.r.t. ``x_tilde`` at ``x_tilde = x``."""
    W = params.W
    a = W @ x + params.b_e
    r = x - (W.T @ kind(a) + params.b_d)
    M = W.T @ (kind.d1(a)[:, None] * W)
    return 2.0 * M @ M - 2.0 * W.T @ ((kind.d2(a) * (W @ r))[:, None] * W)


def mc_dae_estimate(batch, params: ModelParams, kind: Activation, sigma2: float,
                    K: int, seed: int, control_variate: bool = True) -> tuple[float, float]:
    """Monte-Carlo denoising loss and its standard error.

    Reusing ``seed`` across noise levels gives common random numbers. With
    ``control_variate`` the draws come in antithetic pairs and the zero-mean
    quadratic ``sigma2/2 (z^T H z - tr H)`` is subtracted, leaving only
    fourth-order effects and their noise.
    """
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    B, n = X.shape
    z = corruption_noise(make_rng(seed), K, B, n, antithetic=control_variate)
    xt = X[None] + np.sqrt(sigma2) * z
    y = kind(xt @ params.W.T + params.b_e) @ params.W + params.b_d
    r = X[None] - y
    per_draw = np.einsum("kbi,kbi->kb", r, r)
    if control_variate:
        for b in range(B):
            H = input_hessian(X[b], params, kind)
            quad = np.einsum("ki,ij,kj->k", z[:, b], H, z[:, b])
            per_draw[:, b] -= 0.5 * sigma2 * (quad - np.trace(H))
    draws = per_draw.mean(axis=1)
    if control_variate:
        half = K // 2
        draws = 0.5 * (draws[:half] + draws[half:])
    return float(draws.mean()), float(draws.std(ddof=1) / np.sqrt(draws.size))


def mc_dae_check(batch, params: ModelParams, kind: Activation, sigmas, K: int,
                 seed: int, min_shrink: float = 3.0) -> CheckReport:
    """Taylor residual ``|MC - Taylor|`` must shrink by ``min_shrink`` per halving.

    ``sigmas`` are standard deviations in descending order.
    """
    sigmas = list(sigmas)
    if sorted(sigmas, reverse=True) != sigmas:
        raise ValueError("sigmas must be sorted in descending order")
    residuals, errors = [], []
    for s in sigmas:
        if s == 0:
            residuals.append(0.0)
            errors.append(0.0)
            continue
        mc, se = mc_dae_estimate(batch, params, kind, s * s, K, seed)
        residuals.append(abs(mc - dae_taylor_value(batch, params, kind, s * s)))
        errors.append(se)
    shrink = [residuals[i] / residuals[i + 1] if residuals[i + 1] > 0 else np.inf
              for i in range(len(sigmas) - 1) if sigmas[i + 1] > 0]
    worst = min(shrink, default=np.inf)
    passed = all(r == 0 for r in residuals) or worst >= min_shrink
    return CheckReport(
        f"mc_dae_taylor[{kind.value}]", passed,
        # reported as the shortfall against the required shrink factor
        max(0.0, min_shrink / worst - 1.0) if worst > 0 else np.inf,
        details=f"sigmas={sigmas} residuals={residuals} shrink={shrink} se={errors}",
        tolerance=0.0, data={"residuals": residuals, "shrink": shrink, "se": errors})


def mc_dae_agreement(batch, params: ModelParams, kind: Activation, sigma2: float,
                     K: int, seed: int, n_se: float = 3.0) -> CheckReport:
    """Plain Monte Carlo versus the Taylor value, within ``n_se`` standard errors."""
    mc, se = mc_dae_estimate(batch, params, kind, sigma2, K, seed, control_variate=False)
    taylor = dae_taylor_value(batch, params, kind, sigma2)
    gap = abs(mc - taylor)
    ratio = gap / se if se > 0 else (0.0 if gap == 0 else np.inf)
    return CheckReport(f"mc_dae_agreement[{kind.value}]", ratio <= n_se, ratio,
                       details=f"mc={mc!r} taylor={taylor!r} se={se!r}",
                       tolerance=n_se)


def certify_theorem1(config: TrainConfig, data: Dataset, window: int,
                     params: ModelParams | None = None) -> CheckReport:
    """Step-by-step check of the pre-activation descent condition.

    Every step is a full-data gradient step. Before each one the hypothesis
    ``coeff * dR/db_j > 2 sigma_r sqrt(n) ||W_j||`` is evaluated per unit; for
    units that satisfy it the full-data mean pre-activation must strictly drop.
    The variance identity ``Var[a_j] = ||W_j||^2`` is checked to within three
    standard errors after every step. The per-step records are returned in
    ``report.data["history"]`` for the Chebyshev certificate.
    """
    spec = config.objective
    kind = config.activation
    X = data.samples
    N, n = X.shape
    if params is None:
        params = init_params(config, n)
    velocity = Gradients.zeros_like(params)
    noise_rng = make_rng(config.seed)
    satisfied = violated = 0
    var_worst = 0.0
    steps_ok = []
    records = []
    initial = evaluate(config, X, params, 0)
    for t in range(window):
        cache = forward(X, params, kind)
        bound = lemma1_bound(residual_std(cache), n, params.W)
        if spec.kind.has_penalty and spec.coeff > 0:
            hyp = spec.coeff * bias_reg_gradient(spec, X, params, kind) > bound
        else:
            hyp = np.zeros(params.m, dtype=bool)
        before = cache.a.mean(axis=0)
        _, grads = objective(spec, X, params, kind, noise_rng)
        params, velocity = sgd_momentum_step(params, grads, velocity, config.learning_rate,
                                             config.momentum, config.constraint)
        after = forward(X, params, kind).a
        dropped = after.mean(axis=0) < before
        satisfied += int(hyp.sum())
        bad = int(np.sum(hyp & ~dropped))
        violated += bad
        steps_ok.append(bool(hyp.any() and bad == 0))
        w2 = row_norms(params.W) ** 2
        se = w2 * np.sqrt(2.0 / (N - 1))
        dev = np.abs(after.var(axis=0) - w2)
        var_worst = max(var_worst, float(np.max(dev / np.where(se > 0, se, 1.0))))
        records.append(evaluate(config, X, params, t + 1))
    history = TrainHistory(config, records, params, initial)
    data_out = {"history": history, "steps_ok": steps_ok, "satisfied": satisfied,
                "violated": violated, "var_worst_se": var_worst}
    details = (f"hypothesis held for {satisfied} unit-steps, descent failed on "
               f"{violated}; worst variance deviation {var_worst:.3g} SE")
    if satisfied == 0:
        return CheckReport("theorem1", False, 0.0, details, status="inconclusive",
                           data=data_out)
    frac = violated / satisfied
    passed = violated == 0 and var_worst <= 3.0
    return CheckReport("theorem1", passed, frac, details, tolerance=0.0, data=data_out)


def certify_theorem2(history: TrainHistory, kind: Activation, delta_min: float,
                     steps=None, min_fraction: float = 0.95) -> CheckReport:
    """Chebyshev lower bound on de-activation must not decrease.

    Consecutive records ``t -> t+1`` are compared for every unit whose mean
    pre-activation lies below ``a_min`` at both ends; ``steps`` optionally
    restricts the transitions to those whose index is truthy. A unit passes
    when its bound never drops (up to 1e-12).
    """
    recs: list[EpochRecord] = list(history.records)
    # steps[k] describes the transition into records[k]
    offset = 1
    if history.initial_record is not None:
        recs = [history.initial_record] + recs
        offset = 0
    a_min = a_min_for(kind, delta_min)
    m = len(recs[0].per_unit_mean_a) if recs else 0
    applicable = np.zeros(m, dtype=bool)
    ok = np.ones(m, dtype=bool)
    for t in range(len(recs) - 1):
        if steps is not None and not steps[t + offset]:
            continue
        r0, r1 = recs[t], recs[t + 1]
        for j in range(m):
            try:
                p0 = chebyshev_sparsity_bound(r0.per_unit_mean_a[j], r0.per_unit_var_a[j], a_min)
                p1 = chebyshev_sparsity_bound(r1.per_unit_mean_a[j], r1.per_unit_var_a[j], a_min)
            except BoundNotApplicable:
                continue
            applicable[j] = True
            if p1 < p0 - 1e-12:
                ok[j] = False
    count = int(applicable.sum())
    if count == 0:
        return CheckReport("theorem2", False, 0.0, "no unit below a_min",
                           status="inconclusive")
    frac = float(np.sum(ok & applicable) / count)
    return CheckReport("theorem2", frac >= min_fraction, 1.0 - frac,
                       details=f"{frac:.4f} of {count} applicable units non-decreasing "
                               f"(a_min={a_min:.5g})",
                       tolerance=1.0 - min_fraction)
