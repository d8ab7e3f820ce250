"""
Tests for token-level adaptive pooling with residual max fusion
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import config
from core.tap_lme import (
    PoolingParams,
    attention_weights,
    backward,
    forward,
    fuse,
    fusion_lambda,
    logistic,
    max_pool,
    softmax,
    tap_pool,
    with_lambda,
)
from errors import DimensionMismatchError

token_matrices = arrays(
    np.float64,
    st.tuples(st.integers(1, 12), st.just(4)),
    elements=st.floats(-50.0, 50.0, allow_nan=False, allow_infinity=False),
)


@pytest.fixture
def params():
    return PoolingParams.initialize(4, seed=3)


def test_softmax_is_a_distribution(rng):
    for _ in range(1000):
        scores = rng.uniform(-1e4, 1e4, size=int(rng.integers(1, 20)))
        alpha = softmax(scores)
        assert np.all(np.isfinite(alpha))
        assert np.all(alpha >= 0.0)
        assert alpha.sum() == pytest.approx(1.0, abs=1e-12)


def test_logistic_saturates_without_overflow():
    assert logistic(0.0) == 0.5
    assert logistic(1000.0) == 1.0
    assert logistic(-1000.0) == 0.0


@settings(max_examples=60, deadline=None)
@given(T=token_matrices)
def test_attention_weights_sum_to_one(T):
    alpha = attention_weights(T, PoolingParams.initialize(4, seed=1))
    assert alpha.shape == (T.shape[0],)
    assert alpha.sum() == pytest.approx(1.0, abs=1e-12)


def test_fusion_endpoints(rng):
    g_tap = rng.normal(size=5)
    g_max = rng.normal(size=5)

    np.testing.assert_array_equal(fuse(g_tap, g_max, 0.0), g_max)
    np.testing.assert_array_equal(fuse(g_tap, g_max, 1.0), g_tap)


def test_baseline_is_column_max(rng, params):
    T = rng.normal(size=(7, 4))
    out = forward(T, params, "baseline_max")

    np.testing.assert_array_equal(out.g, T.max(axis=0))
    assert out.lam == 0.0


def test_tap_only_is_attention_pool(rng, params):
    T = rng.normal(size=(6, 4))
    out = forward(T, params, "tap_only")

    np.testing.assert_array_equal(out.g, tap_pool(T, attention_weights(T, params)))
    assert out.lam == 1.0


def test_variant_lambdas(params):
    assert fusion_lambda("baseline_max", params) == 0.0
    assert fusion_lambda("tap_only", params) == 1.0
    assert fusion_lambda("tap_res_fixed", params) == config.FIXED_FUSION_LAMBDA
    assert fusion_lambda("tap_res_learnt", params) == 0.5
    assert fusion_lambda("tap_res_learnt", with_lambda(params, 0.3)) == pytest.approx(0.3)


@pytest.mark.parametrize("lam, reference", [(1e-9, "baseline_max"), (1.0 - 1e-9, "tap_only")])
def test_learnt_fusion_approaches_the_endpoint_variants(rng, params, lam, reference):
    T = rng.normal(size=(6, 4))
    learnt = forward(T, with_lambda(params, lam), "tap_res_learnt")
    np.testing.assert_allclose(learnt.g, forward(T, params, reference).g, rtol=0, atol=1e-6)


def test_unknown_variant(params):
    with pytest.raises(ValueError, match="variant"):
        forward(np.ones((2, 4)), params, "tap_mean")


def test_weight_only_uses_uniform_weights(rng, params):
    T = rng.normal(size=(5, 4))
    out = forward(T, params, "tap_weight_only")

    np.testing.assert_allclose(out.alpha, 0.2)
    np.testing.assert_allclose(out.g_tap, T.mean(axis=0))


def test_fused_output(rng, params):
    T = rng.normal(size=(9, 4))
    learnt = with_lambda(params, 0.8)
    out = forward(T, learnt, "tap_res_learnt")

    alpha = softmax(np.maximum(T @ learnt.W.T + learnt.b, 0.0) @ learnt.w)
    np.testing.assert_allclose(out.g, 0.8 * (alpha @ T) + 0.2 * T.max(axis=0), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("variant", config.POOLING_VARIANTS)
def test_single_token_passes_through(rng, params, variant):
    T = rng.normal(size=(1, 4))
    out = forward(T, params, variant)
    np.testing.assert_allclose(out.g, T[0], rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("variant", config.POOLING_VARIANTS)
def test_token_order_does_not_matter(rng, params, variant):
    T = rng.normal(size=(8, 4))
    perm = rng.permutation(8)
    np.testing.assert_allclose(forward(T[perm], params, variant).g, forward(T, params, variant).g,
                               rtol=1e-12, atol=1e-14)


def test_max_pool_breaks_ties_toward_lowest_index():
    values, argmax = max_pool([[1.0, 5.0], [1.0, 2.0], [0.0, 5.0]])
    np.testing.assert_array_equal(values, [1.0, 5.0])
    np.testing.assert_array_equal(argmax, [0, 0])


# ============================================================================
# Backward
# ============================================================================

def test_baseline_gradients_route_to_argmax(rng, params):
    T = rng.normal(size=(6, 4))
    upstream = rng.normal(size=4)
    grads = backward(T, params, upstream, "baseline_max")

    expected = np.zeros_like(T)
    expected[T.argmax(axis=0), np.arange(4)] = upstream
    np.testing.assert_array_equal(grads.T, expected)
    assert not grads.W.any() and not grads.b.any() and not grads.w.any()
    assert grads.lambda_raw == 0.0


def test_fixed_variants_have_no_lambda_gradient(rng, params):
    T = rng.normal(size=(4, 4))
    for variant in ("tap_only", "tap_res_fixed"):
        assert backward(T, params, rng.normal(size=4), variant).lambda_raw == 0.0


def test_weight_only_has_no_attention_gradient(rng, params):
    T = rng.normal(size=(4, 4))
    grads = backward(T, params, rng.normal(size=4), "tap_weight_only")

    assert not grads.W.any() and not grads.w.any()
    assert grads.lambda_raw != 0.0


def test_lambda_gradient(rng, params):
    T = rng.normal(size=(5, 4))
    upstream = rng.normal(size=4)
    out = forward(T, params, "tap_res_learnt")
    grads = backward(T, params, upstream, "tap_res_learnt")

    lam = out.lam
    assert grads.lambda_raw == pytest.approx(upstream @ (out.g_tap - out.g_max) * lam * (1 - lam), rel=1e-12)


@pytest.mark.parametrize("variant", config.POOLING_VARIANTS)
def test_zero_upstream_gives_zero_gradients(rng, params, variant):
    grads = backward(rng.normal(size=(5, 4)), params, np.zeros(4), variant)

    for name, grad in grads.as_dict().items():
        assert not np.any(grad), name


def test_single_token_has_no_attention_gradient(rng, params):
    grads = backward(rng.normal(size=(1, 4)), params, rng.normal(size=4))

    assert not grads.W.any() and not grads.b.any() and not grads.w.any()


def test_upstream_length_is_checked(params):
    with pytest.raises(DimensionMismatchError):
        backward(np.ones((3, 4)), params, np.ones(3))


# ============================================================================
# Parameters and validation
# ============================================================================

def test_initialization_bounds():
    p = PoolingParams.initialize(16, seed=0)

    assert np.all(np.abs(p.W) <= 0.25) and np.all(np.abs(p.w) <= 0.25)
    assert not p.b.any()
    assert p.lambda_raw == 0.0
    assert p.lam == 0.5


def test_params_text_is_exact(tmp_path, params):
    path = str(tmp_path / "params.txt")
    with_lambda(params, 0.7).save(path)
    loaded = PoolingParams.load(path)

    np.testing.assert_array_equal(loaded.W, params.W)
    np.testing.assert_array_equal(loaded.w, params.w)
    assert loaded.lam == pytest.approx(0.7)
    with open(path, encoding="utf-8") as f:
        assert f.readline().strip() == "W"


def test_malformed_params_text():
    with pytest.raises(ValueError, match="malformed"):
        PoolingParams.from_text("W\n1 2\nb\n0\n")


def test_inconsistent_param_shapes():
    with pytest.raises(DimensionMismatchError):
        PoolingParams(W=np.eye(3), b=np.zeros(2), w=np.zeros(3))


@pytest.mark.parametrize("tokens", [np.ones(4), np.ones((0, 4)), np.ones((3, 5))])
def test_token_dimension_errors(params, tokens):
    with pytest.raises(DimensionMismatchError):
        forward(tokens, params)


def test_non_finite_tokens_rejected(params):
    T = np.ones((2, 4))
    T[1, 2] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        forward(T, params)


def test_with_lambda_bounds(params):
    for lam in (0.0, 1.0):
        with pytest.raises(ValueError):
            with_lambda(params, lam)
