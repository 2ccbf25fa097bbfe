import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raesparse.activations import Activation
from raesparse.model import ModelParams, ae_grads, ae_loss, forward
from raesparse.numerics import ConstraintKind, make_rng, project_rows
from raesparse.regularizers import (
    C2Function, DomainError, Objective, ObjectiveSpec, bias_reg_gradient, corruption_noise,
    dae_loss, dae_taylor_value, edae_first_order_term, objective, reg_cae, reg_edae,
    reg_generic_c1, reg_generic_c2, reg_mdae, reg_sae)
from raesparse.verify import (
    cae_jacobian_values, gradient_check, mdae_double_sum, rel_error, taylor_trace_oracle)

from conftest import small_params

KINDS = list(Activation)

# Oracle values on one seeded instance (numeric Jacobian, explicit double sum,
# trace form), computed once and frozen.
FROZEN = {
    Activation.RELU: (2.4570990134477166, 4.219371089983397, 4.453962189108476),
    Activation.SIGMOID: (0.39920678113958225, 0.6980797217316884, 6.886000815725517),
    Activation.SOFTPLUS: (1.7405889235615752, 2.9372954342947466, 9.832471393366701),
    Activation.TANH: (4.909811298063196, 8.825611863344479, 4.485197148447829),
}


def frozen_instance():
    rng = np.random.default_rng(2024)
    W = rng.normal(0, 0.5, (5, 7))
    p = ModelParams(W, rng.normal(0, 0.3, 5), rng.normal(0, 0.3, 7))
    return rng.normal(size=(3, 7)), p


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.value)
def test_frozen_oracle_values(kind):
    x, p = frozen_instance()
    cae, mdae, taylor = FROZEN[kind]
    assert reg_cae(x, p, kind)[0] == pytest.approx(cae, rel=1e-6)
    assert reg_mdae(x, p, kind)[0] == pytest.approx(mdae, rel=1e-12)
    assert dae_taylor_value(x, p, kind, 0.1) == pytest.approx(taylor, rel=1e-10)


def test_cae_examples():
    x = np.random.default_rng(0).normal(size=(4, 3))
    assert reg_cae(x, ModelParams.zeros(2, 3), Activation.SIGMOID)[0] == 0.0
    # ReLU, all units active, unit rows: each unit contributes 1
    W = project_rows(np.abs(np.random.default_rng(1).normal(size=(6, 3))),
                     ConstraintKind.unit_norm())
    p = ModelParams(W, np.ones(6), np.zeros(3))
    assert reg_cae(np.abs(x), p, Activation.RELU)[0] == pytest.approx(6.0, rel=1e-14)
    p1 = ModelParams(np.array([[1.0, 0.0]]), np.zeros(1), np.zeros(2))
    val = reg_cae(np.zeros((1, 2)), p1, Activation.SIGMOID)[0]
    assert val == 0.0625
    assert val == pytest.approx(cae_jacobian_values(np.zeros((1, 2)), p1, Activation.SIGMOID)[0],
                                rel=1e-6)


def test_mdae_examples():
    x = np.zeros((1, 2))
    assert reg_mdae(x, ModelParams.zeros(1, 2), Activation.SIGMOID)[0] == 0.0
    p = ModelParams(np.array([[0.6, 0.8]]), np.ones(1), np.zeros(2))
    assert reg_mdae(np.ones((1, 2)), p, Activation.RELU)[0] == pytest.approx(1.0, rel=1e-14)
    p2 = ModelParams(np.array([[1.0, 1.0]]), np.zeros(1), np.zeros(2))
    assert reg_mdae(x, p2, Activation.SIGMOID)[0] == pytest.approx(0.25, rel=1e-14)
    assert mdae_double_sum(x, p2, Activation.SIGMOID) == 0.25


def test_sae_examples():
    x = np.zeros((2, 3))
    # mean activations 0 everywhere
    assert reg_sae(x, ModelParams.zeros(4, 3), Activation.RELU, 0.0)[0] == 0.0
    # sigmoid at zero gives rho_j = 0.5 for three units
    val = reg_sae(x, ModelParams.zeros(3, 3), Activation.SIGMOID, 0.0)[0]
    assert val == pytest.approx(3 * np.log(2), rel=1e-14)
    p = ModelParams(np.zeros((2, 3)), np.full(2, 1.0), np.zeros(3))
    with pytest.raises(DomainError) as info:
        reg_sae(x, p, Activation.RELU, 0.0)
    assert info.value.unit == 0


def test_sae_kl_form_gradients(rng):
    x = rng.normal(size=(3, 7))
    p = small_params(rng)
    rep = gradient_check("sae_kl", lambda q: reg_sae(x, q, Activation.SIGMOID, 0.05), p)
    assert rep.passed, rep.max_rel_error


def test_dae_examples(rng):
    x = rng.normal(size=(3, 7))
    p = small_params(rng)
    for k in KINDS:
        assert dae_loss(x, p, k, 0.0, 3, make_rng(0))[0] == ae_loss(forward(x, p, k))
        assert dae_taylor_value(x, p, k, 0.0) == ae_loss(forward(x, p, k))
        assert reg_edae(x, p, k, 0.0, 3, make_rng(0))[0] == ae_loss(forward(x, p, k))
    a = dae_loss(x, p, Activation.SIGMOID, 0.1, 1, make_rng(9))
    b = dae_loss(x, p, Activation.SIGMOID, 0.1, 1, make_rng(9))
    assert a[0] == b[0] and np.array_equal(a[1].flat(), b[1].flat())
    a = reg_edae(x, p, Activation.TANH, 0.1, 2, make_rng(9))
    b = reg_edae(x, p, Activation.TANH, 0.1, 2, make_rng(9))
    assert a[0] == b[0] and np.array_equal(a[1].flat(), b[1].flat())


def test_taylor_relu_orthogonal_rows():
    # rows are orthonormal and every unit is active: cross and curvature terms vanish
    Q = np.linalg.qr(np.random.default_rng(3).normal(size=(5, 5)))[0][:3]
    p = ModelParams(Q, np.full(3, 10.0), np.zeros(5))
    x = np.random.default_rng(4).normal(size=(4, 5))
    assert np.all(forward(x, p, Activation.RELU).a > 0)
    expect = ae_loss(forward(x, p, Activation.RELU)) + 0.3 * 3
    assert dae_taylor_value(x, p, Activation.RELU, 0.3) == pytest.approx(expect, rel=1e-13)


def test_taylor_exact_for_linear_region():
    # on an all-active ReLU the corrupted loss is exactly quadratic in the noise:
    # E||r - W^T W e||^2 = ||r||^2 + sigma^2 tr((W^T W)^2)
    rng = np.random.default_rng(5)
    W = rng.normal(0, 0.4, (4, 6))
    p = ModelParams(W, np.full(4, 50.0), rng.normal(size=6))
    x = rng.normal(size=(3, 6))
    G = W.T @ W
    expect = ae_loss(forward(x, p, Activation.RELU)) + 0.2 * np.trace(G @ G)
    assert dae_taylor_value(x, p, Activation.RELU, 0.2) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.value)
def test_taylor_matches_trace_form(kind):
    rng = make_rng(21)
    for _ in range(10):
        x = rng.normal(size=(3, 7))
        p = small_params(rng)
        assert rel_error(dae_taylor_value(x, p, kind, 0.05),
                         taylor_trace_oracle(x, p, kind, 0.05)) <= 1e-10


def test_edae_first_order_term_shrinks_like_inverse_sqrt_k():
    rng = make_rng(8)
    x = rng.normal(size=(3, 7))
    p = small_params(rng)
    kind = Activation.SIGMOID
    cache = forward(x, p, kind)
    spreads = []
    for K in (16, 1024):
        means = [np.mean(edae_first_order_term(
            cache, p, kind, 0.3 * corruption_noise(make_rng(s), K, 3, 7).mean(axis=0)))
            for s in range(200)]
        spreads.append(np.std(means))
    # 64x more draws: the spread should drop about 8x
    assert 5 < spreads[0] / spreads[1] < 12


def test_edae_unbiased_in_expectation():
    rng = make_rng(12)
    x = rng.normal(size=(3, 7))
    p = small_params(rng)
    vals = [reg_edae(x, p, Activation.SOFTPLUS, 0.1, 1, make_rng(s))[0] for s in range(4000)]
    base = ae_loss(forward(x, p, Activation.SOFTPLUS))
    se = np.std(vals) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - base) <= 4 * se


def test_generic_definitional_identities(rng):
    for _ in range(10):
        x = rng.normal(size=(3, 7))
        p = small_params(rng)
        for k in KINDS:
            c, m = reg_cae(x, p, k), reg_mdae(x, p, k)
            g22, g24 = reg_generic_c1(x, p, k, 2, 2), reg_generic_c1(x, p, k, 2, 4)
            assert c[0] == g22[0] and np.array_equal(c[1].flat(), g22[1].flat())
            assert m[0] == g24[0] and np.array_equal(m[1].flat(), g24[1].flat())
            try:
                s = reg_sae(x, p, k, 0.0)
            except DomainError:
                continue
            c2 = reg_generic_c2(x, p, k, C2Function.NEG_LOG_ONE_MINUS)
            assert s[0] == pytest.approx(c2[0], rel=1e-14)
            np.testing.assert_allclose(s[1].flat(), c2[1].flat(), rtol=1e-13, atol=1e-15)


def test_c1_q1_p0_sigmoid_at_zero():
    p = ModelParams(np.zeros((4, 3)), np.zeros(4), np.zeros(3))
    assert reg_generic_c1(np.zeros((1, 3)), p, Activation.SIGMOID, 1, 0)[0] == 1.0


def test_c2_identity_examples(rng):
    assert reg_generic_c2(np.zeros((2, 3)), ModelParams.zeros(4, 3), Activation.RELU)[0] == 0.0
    x = rng.normal(size=(5, 7))
    p = small_params(rng)
    val, g = reg_generic_c2(x, p, Activation.RELU, C2Function.IDENTITY)
    c = forward(x, p, Activation.RELU)
    assert val == pytest.approx(c.h.mean(axis=0).sum(), rel=1e-14)
    np.testing.assert_allclose(g.db_e, (c.a > 0).mean(axis=0), rtol=1e-14)


def test_bias_gradient_examples(rng):
    x = rng.normal(size=(5, 7))
    p = small_params(rng)
    cae = ObjectiveSpec(Objective.CAE, 1.0)
    assert np.array_equal(bias_reg_gradient(cae, x, p, Activation.RELU), np.zeros(5))
    c2 = ObjectiveSpec(Objective.GENERIC_C2, 1.0)
    g = bias_reg_gradient(c2, x, p, Activation.SIGMOID)
    np.testing.assert_allclose(g, Activation.SIGMOID.d1(x @ p.W.T + p.b_e).mean(axis=0),
                               rtol=1e-14)
    assert np.all(g > 0)
    for kind in (Objective.AE, Objective.DAE, Objective.EDAE):
        with pytest.raises(ValueError):
            bias_reg_gradient(ObjectiveSpec(kind, 1.0), x, p, Activation.RELU)


def test_cae_softplus_bias_gradient_sign():
    rng = make_rng(31)
    spec = ObjectiveSpec(Objective.CAE, 1.0)
    for _ in range(10_000):
        x = rng.normal(size=(3, 7))
        p = small_params(rng)
        assert np.all(bias_reg_gradient(spec, x, p, Activation.SOFTPLUS) >= 0)


@given(st.integers(0, 2**31), st.sampled_from([Activation.RELU, Activation.SOFTPLUS]),
       st.integers(1, 3), st.sampled_from([0, 2, 4]))
@settings(max_examples=200, deadline=None)
def test_c1_sign_law(seed, kind, q, pw):
    rng = make_rng(seed)
    x = rng.normal(size=(3, 7))
    assert np.all(reg_generic_c1(x, small_params(rng), kind, q, pw)[1].db_e >= 0)


@given(st.integers(0, 2**31), st.sampled_from(KINDS), st.sampled_from(list(C2Function)))
@settings(max_examples=200, deadline=None)
def test_c2_sign_law(seed, kind, f):
    rng = make_rng(seed)
    x = rng.normal(size=(3, 7))
    try:
        db = reg_generic_c2(x, small_params(rng), kind, f)[1].db_e
    except DomainError:
        return
    assert np.all(db >= 0)


@given(st.integers(0, 2**31), st.sampled_from(KINDS))
@settings(max_examples=100, deadline=None)
def test_cae_equals_mdae_on_unit_rows(seed, kind):
    rng = make_rng(seed)
    x = rng.normal(size=(3, 7))
    p = small_params(rng)
    p.W = project_rows(p.W, ConstraintKind.unit_norm())
    assert reg_cae(x, p, kind)[0] == pytest.approx(reg_mdae(x, p, kind)[0], rel=1e-12)


def test_objective_assembly(rng):
    x = rng.normal(size=(3, 7))
    p = small_params(rng)
    k = Activation.SIGMOID
    spec = ObjectiveSpec(Objective.CAE, 0.3)
    val, g = objective(spec, x, p, k, make_rng(0))
    r, rg = reg_cae(x, p, k)
    assert val == pytest.approx(ae_loss(forward(x, p, k)) + 0.3 * r, rel=1e-14)
    np.testing.assert_allclose(g.flat(), (ae_grads(x, p, k) + rg.scaled(0.3)).flat(),
                               rtol=1e-13, atol=1e-16)
    val, _ = objective(ObjectiveSpec(Objective.AE), x, p, k, make_rng(0))
    assert val == ae_loss(forward(x, p, k))


def test_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        ObjectiveSpec(Objective.CAE, -1.0)
    with pytest.raises(ValueError):
        ObjectiveSpec(Objective.GENERIC_C1, 1.0, c1_q=0)
    s = ObjectiveSpec(Objective.SAE, 0.5, sae_rho=0.05)
    assert ObjectiveSpec.from_dict(s.to_dict()) == s
    assert Objective.parse("mDAE") is Objective.MDAE
