"""Verification suite shared by ``raesparse verify`` and the acceptance tests."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .activations import Activation
from .data import synth_whitened_gaussian
from .metrics import lemma1_bound, residual_std
from .model import ModelParams, ae_grads, ae_loss, forward
from .numerics import ConstraintKind, glorot_init, make_rng, project_rows, row_norms
from .optimizer import TrainConfig, train
from .regularizers import (
    C2Function, DomainError, Objective, ObjectiveSpec, corruption_noise, dae_loss,
    dae_taylor_value, reg_cae, reg_edae, reg_generic_c1, reg_generic_c2, reg_mdae,
    reg_sae)
from .verify import (
    CheckReport, cae_jacobian_values, certify_theorem1, certify_theorem2,
    gradient_check, mc_dae_agreement, mc_dae_check, mdae_double_sum, rel_error,
    taylor_trace_oracle)

ObjectiveFn = Callable[[ModelParams], tuple]
# builder(x, kind) -> (objective of params, inputs that reach the encoder)
Builder = Callable[[np.ndarray, Activation], tuple[ObjectiveFn, np.ndarray]]

KINK_MARGIN = 1e-4
# -log(1 - rho) has a pole at rho = 1; instances can sit within 1e-4 of it,
# where a 1e-5 step carries O(1e-4) truncation error
BARRIER_STEP = 1e-7
BARRIER_CASES = ("sae", "c2_neglog1m")
DAE_SIGMA2 = 0.1
DAE_K = 2


def _plain(f) -> Builder:
    def build(x, kind):
        return (lambda p: f(x, p, kind)), x
    return build


def _ae(x, p, kind):
    cache = forward(x, p, kind)
    return ae_loss(cache), ae_grads(x, p, kind, cache)


def _dae_builder(seed: int) -> Builder:
    def build(x, kind):
        z = corruption_noise(make_rng(seed), DAE_K, *x.shape)
        seen = (x[None] + np.sqrt(DAE_SIGMA2) * z).reshape(-1, x.shape[1])
        return (lambda p: dae_loss(x, p, kind, DAE_SIGMA2, DAE_K, make_rng(seed))), seen
    return build


def _edae_builder(seed: int) -> Builder:
    def build(x, kind):
        return (lambda p: reg_edae(x, p, kind, DAE_SIGMA2, DAE_K, make_rng(seed))), x
    return build


def gradient_cases(seed: int = 0) -> dict[str, Builder]:
    """Every objective whose analytic gradient is checked, keyed by name."""
    cases: dict[str, Builder] = {
        "ae": _plain(_ae),
        "dae": _dae_builder(seed),
        "cae": _plain(reg_cae),
        "mdae": _plain(reg_mdae),
        "sae": _plain(lambda x, p, k: reg_sae(x, p, k, 0.0)),
        "edae": _edae_builder(seed),
    }
    for q in (1, 2, 3):
        for pw in (0, 2, 4):
            cases[f"c1_q{q}_p{pw}"] = _plain(
                lambda x, p, k, q=q, pw=pw: reg_generic_c1(x, p, k, q, pw))
    cases["c2_identity"] = _plain(lambda x, p, k: reg_generic_c2(x, p, k, C2Function.IDENTITY))
    cases["c2_neglog1m"] = _plain(
        lambda x, p, k: reg_generic_c2(x, p, k, C2Function.NEG_LOG_ONE_MINUS))
    return cases


def random_instance(rng: np.random.Generator, n: int = 7, m: int = 5,
                    batch: int = 3) -> tuple[np.ndarray, ModelParams]:
    W = rng.normal(0.0, 0.5, size=(m, n))
    params = ModelParams(W, rng.normal(0.0, 0.3, size=m), rng.normal(0.0, 0.3, size=n))
    return rng.normal(size=(batch, n)), params


def _clear_of_kink(kind: Activation, inputs: np.ndarray, params: ModelParams) -> bool:
    if kind is not Activation.RELU:
        return True
    a = inputs @ params.W.T + params.b_e
    return bool(np.min(np.abs(a)) > KINK_MARGIN)


def gradient_suite(instances: int = 100, seed: int = 0, tol: float = 1e-6,
                   cases: Iterable[str] | None = None,
                   activations: Iterable[Activation] = tuple(Activation)) -> list[CheckReport]:
    """Finite-difference gradient checks, one report per (objective, activation)."""
    all_cases = gradient_cases(seed)
    names = list(all_cases) if cases is None else list(cases)
    reports = []
    for name in names:
        build = all_cases[name]
        step = BARRIER_STEP if name in BARRIER_CASES else None
        for kind in activations:
            rng = make_rng(seed)
            worst = 0.0
            done = 0
            while done < instances:
                x, params = random_instance(rng)
                fn, seen = build(x, kind)
                if not _clear_of_kink(kind, seen, params):
                    continue
                try:
                    rep = gradient_check(name, fn, params, tol, step)
                except DomainError:
                    continue
                worst = max(worst, rep.max_rel_error)
                done += 1
            reports.append(CheckReport(f"grad[{name},{kind.value}]", worst <= tol, worst,
                                       details=f"{instances} instances", tolerance=tol))
    return reports


def activation_suite(samples: int = 100_000, seed: int = 0) -> list[CheckReport]:
    rng = make_rng(seed)
    a = rng.uniform(-10, 10, size=samples)
    a = a[np.abs(a) > 1e-3]
    reports = []
    for kind in Activation:
        d1 = kind.d1(a)
        h = 1e-6
        fd1 = (kind(a + h) - kind(a - h)) / (2 * h)
        fd2 = (kind.d1(a + h) - kind.d1(a - h)) / (2 * h)
        e1 = rel_error(d1, fd1)
        e2 = rel_error(kind.d2(a), fd2)
        in_range = bool(np.all((d1 >= 0) & (d1 <= 1)))
        convex_ok = (not kind.convex) or bool(np.all(kind.d2(a) >= 0))
        sat_ok = (not kind.negative_saturation_at_zero) or float(kind(-50.0)) <= 1e-8
        ok = in_range and convex_ok and sat_ok and e1 <= 1e-6 and e2 <= 1e-5
        reports.append(CheckReport(
            f"activation[{kind.value}]", ok, max(e1, e2),
            details=f"d1 in [0,1]: {in_range}; d1 err {e1:.2e}; d2 err {e2:.2e}; "
                    f"convex flag ok: {convex_ok}; saturation flag ok: {sat_ok}",
            tolerance=1e-5))
    return reports


def _oracle_instances(count: int, seed: int, kind: Activation):
    rng = make_rng(seed)
    out = []
    while len(out) < count:
        x, params = random_instance(rng)
        if _clear_of_kink(kind, x, params):
            out.append((x, params))
    return out


def cae_oracle_suite(instances: int = 50, seed: int = 0, tol: float = 1e-6) -> list[CheckReport]:
    """Closed-form contractive penalty against numeric Jacobians, per sample."""
    reports = []
    for kind in Activation:
        worst = 0.0
        for x, params in _oracle_instances(instances, seed, kind):
            for row in x:
                closed = reg_cae(row[None], params, kind)[0]
                worst = max(worst, rel_error(closed, cae_jacobian_values(row[None], params, kind)))
        reports.append(CheckReport(f"cae_jacobian[{kind.value}]", worst <= tol, worst,
                                   tolerance=tol))
    return reports


def mdae_oracle_suite(instances: int = 50, seed: int = 0, tol: float = 1e-12) -> list[CheckReport]:
    reports = []
    for kind in Activation:
        worst = 0.0
        for x, params in _oracle_instances(instances, seed, kind):
            worst = max(worst, rel_error(reg_mdae(x, params, kind)[0],
                                         mdae_double_sum(x, params, kind)))
        reports.append(CheckReport(f"mdae_double_sum[{kind.value}]", worst <= tol, worst,
                                   tolerance=tol))
    return reports


def taylor_oracle_suite(instances: int = 50, seed: int = 0, sigma2: float = 0.1,
                        tol: float = 1e-10) -> list[CheckReport]:
    reports = []
    for kind in Activation:
        worst = 0.0
        for x, params in _oracle_instances(instances, seed, kind):
            worst = max(worst, rel_error(dae_taylor_value(x, params, kind, sigma2),
                                         taylor_trace_oracle(x, params, kind, sigma2)))
        reports.append(CheckReport(f"taylor_trace[{kind.value}]", worst <= tol, worst,
                                   tolerance=tol))
    return reports


def projection_suite(seed: int = 0) -> list[CheckReport]:
    rng = make_rng(seed)
    W = rng.normal(size=(50, 30)) * rng.uniform(0.1, 5, size=(50, 1))
    W[3] = 0.0
    unit = ConstraintKind.unit_norm()
    maxn = ConstraintKind.max_norm(1.5)
    pu = project_rows(W, unit)
    pm = project_rows(W, maxn)
    norms = row_norms(pu)
    dev = float(np.max(np.abs(norms[norms > 0] - 1.0)))
    idem = (np.array_equal(project_rows(pu, unit), pu)
            and np.array_equal(project_rows(pm, maxn), pm))
    ok = dev <= 1e-12 and idem and not np.any(pu[3]) and bool(np.all(row_norms(pm) <= 1.5 + 1e-12))
    return [CheckReport("projection", ok, dev,
                        details=f"idempotent: {idem}; unit-norm deviation {dev:.2e}",
                        tolerance=1e-12)]


def whitening_suite(seed: int = 0, n: int = 10, N: int = 10_000, m: int = 20) -> list[CheckReport]:
    """Exact whitening and ``Var[a_j] = ||W_j||^2`` within three standard errors."""
    rng = make_rng(seed)
    data = synth_whitened_gaussian(n, N, rng)
    X = data.samples
    mean_err = float(np.max(np.abs(X.mean(axis=0))))
    cov_err = float(np.max(np.abs(X.T @ X / N - np.eye(n))))
    W = glorot_init(m, n, rng) * 3
    a = X @ W.T + rng.normal(size=m)
    w2 = row_norms(W) ** 2
    z = np.max(np.abs(a.var(axis=0) - w2) / (w2 * np.sqrt(2.0 / (N - 1))))
    return [
        CheckReport("whitening_mean", mean_err <= 1e-10, mean_err, tolerance=1e-10),
        CheckReport("whitening_cov", cov_err <= 1e-8, cov_err, tolerance=1e-8),
        CheckReport("preactivation_variance", z <= 3.0, float(z),
                    details="max deviation in standard errors", tolerance=3.0),
    ]


def lemma1_suite(seed: int = 0, checkpoints: int = 20, n: int = 16, N: int = 2000,
                 m: int = 32, slack: float = 1.05) -> list[CheckReport]:
    """AE bias gradient within the residual bound at checkpoints of a real run."""
    data = synth_whitened_gaussian(n, N, make_rng(seed))
    reports = []
    for kind in (Activation.RELU, Activation.SIGMOID, Activation.SOFTPLUS):
        config = TrainConfig(epochs=checkpoints, batch_size=100, learning_rate=0.003,
                             momentum=0.9, constraint=ConstraintKind.max_norm(2.0),
                             objective=ObjectiveSpec(Objective.AE), activation=kind,
                             hidden_units=m, seed=seed)
        worst = [0.0]

        def hook(epoch, b, params, batch):
            if b != 0:
                return
            cache = forward(data.samples, params, kind)
            g = ae_grads(data.samples, params, kind, cache).db_e
            bound = lemma1_bound(residual_std(cache), n, params.W)
            worst[0] = max(worst[0], float(np.max(np.abs(g) / (bound * slack))))

        train(config, data, step_hook=hook)
        reports.append(CheckReport(f"lemma1[{kind.value}]", worst[0] <= 1.0, worst[0],
                                   details=f"max |db_e| / ({slack} x bound) over "
                                           f"{checkpoints} checkpoints", tolerance=1.0))
    return reports


def sign_law_suite(instances: int = 10_000, seed: int = 0) -> list[CheckReport]:
    """Non-negative penalty bias gradients where the corollaries promise them."""
    rng = make_rng(seed)
    worst_c1 = 0.0
    worst_c2 = 0.0
    for _ in range(instances):
        x, params = random_instance(rng)
        for kind in (Activation.RELU, Activation.SOFTPLUS):
            for q, p in ((1, 0), (2, 2), (2, 4), (3, 2)):
                db = reg_generic_c1(x, params, kind, q, p)[1].db_e
                worst_c1 = min(worst_c1, float(db.min()))
        for kind in Activation:
            db = reg_generic_c2(x, params, kind)[1].db_e
            worst_c2 = min(worst_c2, float(db.min()))
    return [CheckReport("sign_law_c1", worst_c1 >= 0, -worst_c1,
                        details="most negative bias gradient", tolerance=0.0),
            CheckReport("sign_law_c2", worst_c2 >= 0, -worst_c2,
                        details="most negative bias gradient", tolerance=0.0)]


def mc_dae_suite(seed: int = 0, K: int = 100_000) -> list[CheckReport]:
    rng = make_rng(seed)
    x, params = random_instance(rng)
    reports = [mc_dae_check(x, params, Activation.SIGMOID, [0.05, 0.025], K, seed)]
    # ReLU instance whose pre-activations stay at least 6 noise std from the kink
    sigma = 0.05
    while True:
        x, params = random_instance(rng)
        a = x @ params.W.T + params.b_e
        if np.all(np.abs(a) > 6 * sigma * row_norms(params.W)):
            break
    reports.append(mc_dae_agreement(x, params, Activation.RELU, sigma ** 2, K, seed))
    return reports


def theorem1_config(seed: int = 0, window: int = 50) -> TrainConfig:
    """Sigmoid, unit-norm rows, identity mean-activation penalty, strong coefficient."""
    return TrainConfig(
        epochs=window, batch_size=10**9, learning_rate=2e-4, momentum=0.0,
        constraint=ConstraintKind.unit_norm(),
        objective=ObjectiveSpec(Objective.GENERIC_C2, coeff=2000.0),
        activation=Activation.SIGMOID, hidden_units=8, seed=seed)


def theorem_suite(seed: int = 0, window: int = 50, n: int = 10,
                  N: int = 2000) -> list[CheckReport]:
    data = synth_whitened_gaussian(n, N, make_rng(seed))
    config = theorem1_config(seed, window)
    t1 = certify_theorem1(config, data, window)
    t2 = certify_theorem2(t1.data["history"], config.activation, config.threshold,
                          steps=t1.data["steps_ok"])
    return [t1, t2]


def run(scale: str = "quick", seed: int = 0) -> list[CheckReport]:
    if scale not in ("quick", "full"):
        raise ValueError(f"scale must be 'quick' or 'full', got {scale!r}")
    quick = scale == "quick"
    reports = []
    reports += activation_suite(10_000 if quick else 100_000, seed)
    reports += projection_suite(seed)
    reports += gradient_suite(5 if quick else 100, seed)
    reports += cae_oracle_suite(10 if quick else 50, seed)
    reports += mdae_oracle_suite(10 if quick else 50, seed)
    reports += taylor_oracle_suite(10 if quick else 50, seed)
    reports += whitening_suite(seed)
    reports += sign_law_suite(500 if quick else 10_000, seed)
    reports += lemma1_suite(seed, checkpoints=5 if quick else 20)
    if not quick:
        reports += mc_dae_suite(seed)
        reports += theorem_suite(seed)
    return reports
