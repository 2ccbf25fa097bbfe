import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raesparse.activations import Activation
from raesparse.data import synth_whitened_gaussian
from raesparse.metrics import lemma1_bound, residual_std
from raesparse.model import Gradients, ModelParams, ae_grads, ae_loss, forward
from raesparse.numerics import make_rng, row_norms
from raesparse.verify import finite_diff_grads, rel_error

from conftest import small_params

KINDS = list(Activation)


def test_forward_relu_identity():
    p = ModelParams(np.eye(2), np.zeros(2), np.zeros(2))
    c = forward(np.array([[1.0, -1.0]]), p, Activation.RELU)
    assert np.array_equal(c.a, [[1.0, -1.0]])
    assert np.array_equal(c.h, [[1.0, 0.0]])
    assert np.array_equal(c.y, [[1.0, 0.0]])
    assert np.array_equal(c.r, [[0.0, -1.0]])


@pytest.mark.parametrize("kind", [Activation.RELU, Activation.TANH])
def test_forward_zero_weights_reconstructs_nothing(kind, rng):
    x = rng.normal(size=(4, 3))
    c = forward(x, ModelParams.zeros(2, 3), kind)
    assert np.array_equal(c.y, np.zeros_like(x))
    assert np.array_equal(c.r, x)


def test_forward_sigmoid_scalar():
    p = ModelParams(np.eye(1), np.zeros(1), np.zeros(1))
    c = forward(np.zeros((1, 1)), p, Activation.SIGMOID)
    assert c.h[0, 0] == 0.5 and c.y[0, 0] == 0.5 and c.r[0, 0] == -0.5


def test_forward_rejects_bad_shapes():
    with pytest.raises(ValueError):
        forward(np.zeros((2, 3)), ModelParams.zeros(2, 4), Activation.RELU)
    with pytest.raises(ValueError):
        ModelParams(np.zeros((2, 3)), np.zeros(3), np.zeros(3))


def _cache_with_residual(r):
    r = np.atleast_2d(np.asarray(r, dtype=float))
    p = ModelParams.zeros(1, r.shape[1])
    return forward(r, p, Activation.RELU)


def test_ae_loss_examples():
    assert ae_loss(_cache_with_residual([[0.0, 0.0]])) == 0.0
    assert ae_loss(_cache_with_residual([[3.0, 4.0]])) == 25.0
    assert ae_loss(_cache_with_residual([[1.0, 0.0], [0.0, 1.0]])) == 1.0


def test_ae_grads_vanish_on_perfect_reconstruction():
    p = ModelParams(np.eye(2), np.zeros(2), np.zeros(2))
    g = ae_grads(np.array([[1.0, 2.0], [0.5, 0.1]]), p, Activation.RELU)
    assert not np.any(g.flat())


def test_sigmoid_zero_weights_zero_bias_gradient(rng):
    p = ModelParams(np.zeros((3, 4)), np.zeros(3), rng.normal(size=4))
    g = ae_grads(rng.normal(size=(1, 4)), p, Activation.SIGMOID)
    assert np.array_equal(g.db_e, np.zeros(3))


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.value)
def test_ae_grads_match_finite_differences(kind):
    rng = make_rng(11)
    checked = 0
    while checked < 20:
        x = rng.normal(size=(3, 7))
        p = small_params(rng)
        if kind is Activation.RELU and np.min(np.abs(x @ p.W.T + p.b_e)) < 1e-4:
            continue
        fd = finite_diff_grads(lambda q: ae_loss(forward(x, q, kind)), p)
        assert rel_error(ae_grads(x, p, kind).flat(), fd.flat()) <= 1e-6
        checked += 1


def test_params_round_trips(rng):
    p = small_params(rng)
    assert np.array_equal(p.with_flat(p.flat()).flat(), p.flat())
    q = ModelParams.from_dict(p.to_dict())
    assert np.array_equal(q.flat(), p.flat())
    c = p.copy()
    c.W[0, 0] += 1
    assert c.W[0, 0] != p.W[0, 0]


def test_gradient_arithmetic(rng):
    p = small_params(rng)
    g = Gradients(p.W, p.b_e, p.b_d)
    assert np.array_equal((g + g).flat(), g.scaled(2.0).flat())
    assert not np.any(Gradients.zeros_like(p).flat())


def test_lemma1_bound_on_whitened_batches():
    data = synth_whitened_gaussian(16, 2000, make_rng(3))
    rng = make_rng(4)
    for kind in (Activation.RELU, Activation.SIGMOID, Activation.SOFTPLUS, Activation.TANH):
        for _ in range(5):
            p = ModelParams(rng.normal(0, 0.4, (12, 16)), rng.normal(size=12),
                            rng.normal(0, 0.3, 16))
            cache = forward(data.samples, p, kind)
            g = ae_grads(data.samples, p, kind, cache).db_e
            assert np.all(np.abs(g) <= lemma1_bound(residual_std(cache), 16, p.W) * 1.05)


def test_preactivation_variance_on_whitened_data():
    N = 10_000
    X = synth_whitened_gaussian(10, N, make_rng(5)).samples
    rng = make_rng(6)
    W = rng.normal(size=(20, 10))
    b = rng.normal(size=20)
    a = X @ W.T + b
    w2 = row_norms(W) ** 2
    # on exactly whitened data both moments are exact, far inside 3 standard errors
    np.testing.assert_allclose(a.mean(axis=0), b, atol=1e-10)
    assert np.all(np.abs(a.var(axis=0) - w2) <= 3 * w2 * np.sqrt(2 / (N - 1)))
    np.testing.assert_allclose(a.var(axis=0), w2, rtol=1e-9)


@given(st.integers(0, 10_000), st.sampled_from(KINDS))
@settings(max_examples=40, deadline=None)
def test_loss_non_negative_and_finite(seed, kind):
    rng = make_rng(seed)
    x = rng.normal(size=(3, 7))
    c = forward(x, small_params(rng), kind)
    assert ae_loss(c) >= 0
    assert np.all(np.isfinite(ae_grads(x, small_params(make_rng(seed)), kind).flat()))
