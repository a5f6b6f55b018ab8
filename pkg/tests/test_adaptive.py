import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import conv_loop, dispatch_loop, merge_loop, racnn_pixel_loop, split_loop
from racnn import _backend, gradcheck
from racnn.adaptive import (RacnnParams, SparseStats, alpha_merged_gemm, clip01, conv2d,
                            embed_center, hard_forward, hard_merge, hard_split, hollow_compact,
                            make_hollow, make_split_plan, predict_time_factor, racnn_backward,
                            racnn_forward_dense, racnn_forward_sparse,
                            selector_bias_for_zero_fraction, standard_macs)
from racnn.errors import CacheError, NumericError, ShapeError
from racnn.lowering import center_rows, im2col
from racnn.tensor import count_macs


def layer(rng, h, c, d, f, dtype=np.float64, bias=0.5):
    x = rng.uniform(-1, 1, (h, c, d)).astype(dtype)
    return x, RacnnParams.random(rng, d, f, alpha_bias=bias, alpha_scale=1.0, dtype=dtype)


# -- parameters and weight sharing -----------------------------------------

def test_random_params_share_the_centre(rng):
    p = RacnnParams.random(rng, 4, 5)
    assert p.w3_hollow.shape == (36, 5) and p.w1.shape == (4, 5)
    assert not p.w3_hollow[center_rows(4)].any()
    assert p.num_params() == 9 * 4 * 5 + 4 + 1
    assert p.dtype == np.float32


def test_validate_rejects_bad_params(rng):
    p = RacnnParams.random(rng, 2, 3)
    p.w3_hollow[center_rows(2)] = 1
    with pytest.raises(ValueError, match="centre"):
        p.validate()
    with pytest.raises(ShapeError):
        RacnnParams(np.zeros((2, 3)), np.zeros((17, 3)), np.zeros(2)).validate()
    with pytest.raises(ShapeError):
        RacnnParams(np.zeros((2, 3)), np.zeros((18, 3)), np.zeros(3)).validate()


def test_make_hollow_and_embed_round_trip(rng):
    w3 = rng.uniform(-1, 1, (27, 4))
    w1 = w3[center_rows(3)].copy()
    hollow = make_hollow(w3, w1)
    p = RacnnParams(w1, hollow, np.zeros(3))
    assert np.array_equal(embed_center(p), w3)
    compact = hollow_compact(hollow, 3)
    assert compact.shape == (24, 4)
    assert np.array_equal(compact, np.delete(hollow, np.s_[12:15], axis=0))


# -- forward paths -------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 6), c=st.integers(1, 6), d=st.integers(1, 4), f=st.integers(1, 4),
       seed=st.integers(0, 2**16))
def test_dense_forward_matches_pixel_loop(h, c, d, f, seed):
    x, p = layer(np.random.default_rng(seed), h, c, d, f)
    want, alpha = racnn_pixel_loop(x, p.w1, p.w3_hollow, p.w_alpha, p.b_alpha)
    got, amap = racnn_forward_dense(x, p)
    np.testing.assert_allclose(got, want, atol=1e-12)
    np.testing.assert_allclose(amap.clipped.reshape(h, c), alpha, atol=1e-15)


@pytest.mark.parametrize("value,k", [(1.0, 3), (0.0, 1)])
def test_forced_alpha_recovers_standard_conv(backend, rng, value, k):
    x, p = layer(rng, 9, 8, 5, 6, dtype=np.float32)
    p.w_alpha[:] = 0
    p.b_alpha = value
    w = embed_center(p) if k == 3 else p.w1
    got, _ = racnn_forward_dense(x, p)
    assert np.abs(got - conv_loop(x, w, k)).max() <= 1e-5
    sparse, _, stats = racnn_forward_sparse(x, p)
    assert np.abs(sparse - conv_loop(x, w, k)).max() <= 1e-5
    assert stats.skipped_pixels == (72 if value == 0 else 0)


def test_conv2d_matches_loop(backend, rng):
    x = rng.uniform(-1, 1, (5, 7, 3))
    w = rng.uniform(-1, 1, (27, 2))
    np.testing.assert_allclose(conv2d(x, w, 3), conv_loop(x, w, 3), atol=1e-12)
    with pytest.raises(ShapeError):
        conv2d(x, w[:-1], 3)


def test_sparse_matches_dense_mixed_alpha(backend, rng):
    x, p = layer(rng, 12, 11, 6, 7, dtype=np.float32)
    p.b_alpha = selector_bias_for_zero_fraction(x, p, 0.3)
    dense, amap = racnn_forward_dense(x, p)
    sparse, amap_s, stats = racnn_forward_sparse(x, p)
    assert np.array_equal(amap.clipped, amap_s.clipped)
    assert 0 < stats.skipped_pixels < stats.total_pixels
    assert np.abs(dense - sparse).max() <= 1e-5


def test_sparse_tau_skips_small_alphas(rng):
    x, p = layer(rng, 8, 8, 3, 4)
    tau = 0.3
    out, amap, stats = racnn_forward_sparse(x, p, tau)
    a = amap.clipped
    assert stats.active_pixels == np.count_nonzero(a > tau)
    # the oracle: dense forward with every alpha <= tau treated as 0
    s = im2col(x, 3) @ p.w3_hollow
    want = im2col(x, 1) @ p.w1 + np.where(a > tau, a, 0)[:, None] * s
    np.testing.assert_allclose(out.reshape(-1, 4), want, atol=1e-12)
    for bad in (-0.1, 1.0):
        with pytest.raises(ValueError):
            racnn_forward_sparse(x, p, bad)


def test_batched_forward_equals_per_image(backend, rng):
    xs = rng.uniform(-1, 1, (3, 5, 4, 2)).astype(np.float32)
    p = RacnnParams.random(rng, 2, 3, alpha_bias=0.5, alpha_scale=1.0)
    batch, _ = racnn_forward_dense(xs, p)
    for i in range(3):
        np.testing.assert_allclose(batch[i], racnn_forward_dense(xs[i], p)[0], atol=1e-6)


def test_merged_gemm_is_one_product(rng):
    x, p = layer(rng, 4, 4, 3, 5)
    i1 = im2col(x, 1)
    with count_macs() as m:
        raw, o1 = alpha_merged_gemm(i1, p)
    assert m.calls == [(16, 3, 6)]
    np.testing.assert_allclose(raw, i1 @ p.w_alpha + p.b_alpha, atol=1e-14)
    np.testing.assert_allclose(o1, i1 @ p.w1, atol=1e-14)


def test_clip_rejects_nan():
    with pytest.raises(NumericError):
        clip01(np.array([0.5, np.nan]))
    amap = clip01(np.array([-2.0, 0.25, 7.0]))
    assert amap.clipped.tolist() == [0.0, 0.25, 1.0]


def test_forward_shape_errors(rng):
    x, p = layer(rng, 3, 3, 2, 2)
    with pytest.raises(ShapeError):
        racnn_forward_dense(np.zeros((3, 3, 5)), p)
    with pytest.raises(ShapeError):
        racnn_forward_sparse(np.zeros((3, 3)), p)


# -- hard radius path -------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(rows=st.integers(1, 40), seed=st.integers(0, 2**16))
def test_split_plan_matches_sequential_splitter(rows, seed):
    rng = np.random.default_rng(seed)
    rhat = rng.integers(0, 2, rows)
    i3 = rng.uniform(-1, 1, (rows, 9))
    i1 = rng.uniform(-1, 1, (rows, 1))
    i3h, i1h, plan = hard_split(i3, i1, rhat)
    w3h, w1h, mapping = split_loop(i3, i1, rhat)
    assert np.array_equal(i3h, w3h) and np.array_equal(i1h, w1h)
    assert plan.mapping.tolist() == mapping
    o3, o1 = i3h[:, :1] * 2, i1h * 3
    assert np.array_equal(hard_merge(o3, o1, plan), merge_loop(o3, o1, rhat, mapping))


@pytest.mark.parametrize("seed", range(5))
def test_hard_forward_exact_on_integers(backend, seed):
    rng = np.random.default_rng(seed)
    h, c, d, f = 6, 5, 3, 4
    x = rng.integers(-4, 5, (h, c, d)).astype(np.float32)
    w3 = rng.integers(-4, 5, (9 * d, f)).astype(np.float32)
    w1 = rng.integers(-4, 5, (d, f)).astype(np.float32)
    rhat = rng.integers(0, 2, h * c)
    want = dispatch_loop(im2col(x, 3), im2col(x, 1), w3, w1, rhat)
    assert np.array_equal(hard_forward(x, w3, w1, rhat), want)


def test_hard_path_all_one_side(rng):
    x = rng.integers(-2, 3, (3, 3, 2)).astype(np.float64)
    w3 = rng.integers(-2, 3, (18, 2)).astype(np.float64)
    w1 = rng.integers(-2, 3, (2, 2)).astype(np.float64)
    assert np.array_equal(hard_forward(x, w3, w1, np.ones(9, int)), conv_loop(x, w3, 3).reshape(9, 2))
    assert np.array_equal(hard_forward(x, w3, w1, np.zeros(9, int)), conv_loop(x, w1, 1).reshape(9, 2))


def test_hard_path_errors():
    with pytest.raises(ValueError):
        make_split_plan([0, 2])
    with pytest.raises(ShapeError):
        hard_split(np.zeros((3, 9)), np.zeros((2, 1)), [0, 1, 0])
    plan = make_split_plan([1, 0])
    with pytest.raises(ShapeError):
        hard_merge(np.zeros((2, 1)), np.zeros((1, 1)), plan)


# -- cost model ----------------------------------------------------------------

def test_predict_time_factor():
    assert predict_time_factor(0.5) == 5 / 9
    assert predict_time_factor(0.0) == 1.0
    assert predict_time_factor(1.0) == 1 / 9
    with pytest.raises(ValueError):
        predict_time_factor(1.5)


@pytest.mark.parametrize("fraction", [0.0, 0.25, 0.5, 1.0])
def test_counted_macs(rng, fraction):
    h, c, d, f = 10, 10, 4, 8
    x, p = layer(rng, h, c, d, f)
    p.b_alpha = selector_bias_for_zero_fraction(x, p, fraction)
    with count_macs() as m:
        _, _, stats = racnn_forward_sparse(x, p)
    n_active = stats.active_pixels
    assert stats.skipped_pixels == round(fraction * h * c)
    assert m.macs == h * c * d * (f + 1) + n_active * 8 * d * f
    assert m.macs <= standard_macs(h, c, d, f) * (1 + 1 / (9 * f)) + 1


def test_sparse_stats_counts():
    st_ = SparseStats.from_alpha(np.array([0, 0, 0.2, 1, 1, 1, 0.5, 0]), tau=0.3)
    assert (st_.total_pixels, st_.active_pixels, st_.skipped_pixels) == (8, 4, 4)
    assert st_.fraction_alpha_zero == 0.375
    assert st_.fraction_alpha_one == 0.375
    assert st_.fraction_alpha_mid == 0.25


def test_selector_bias_hits_exact_fractions(rng):
    x, p = layer(rng, 16, 16, 8, 4, dtype=np.float32)
    for fraction in np.linspace(0, 1, 9):
        p.b_alpha = selector_bias_for_zero_fraction(x, p, fraction)
        _, amap = racnn_forward_dense(x, p)
        assert np.count_nonzero(amap.clipped == 0) == round(fraction * 256)


# -- backward ---------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(4))
def test_layer_gradients_finite_differences(seed):
    errors = gradcheck.check_racnn_layer(seed)
    assert max(errors.values()) <= 1e-5, errors


def test_backward_batch_and_gate(rng):
    xs = rng.uniform(-1, 1, (2, 4, 4, 3))
    p = RacnnParams.random(rng, 3, 2, alpha_bias=5.0, dtype=np.float64)
    out, _, cache = racnn_forward_dense(xs, p, return_cache=True)
    grads, gx = racnn_backward(xs, p, cache, np.ones_like(out))
    # every alpha saturated at 1: no selector gradient
    assert grads.b_alpha == 0 and not grads.w_alpha.any()
    assert gx.shape == xs.shape
    assert not grads.w3_hollow[center_rows(3)].any()


def test_backward_errors(rng):
    x, p = layer(rng, 3, 3, 2, 2)
    out, _, cache = racnn_forward_dense(x, p, return_cache=True)
    with pytest.raises(CacheError):
        racnn_backward(x, p, None, out)
    with pytest.raises(CacheError):
        racnn_backward(np.zeros((4, 3, 2)), p, cache, out)
    with pytest.raises(ShapeError):
        racnn_backward(x, p, cache, out[:2])


def test_backends_agree_on_layer(rng):
    if len(_backend.available()) < 2:
        pytest.skip("native extension not built")
    x, p = layer(rng, 20, 20, 16, 8, dtype=np.float32)
    outs = []
    for name in ("native", "numpy"):
        with _backend.use_backend(name):
            outs.append(racnn_forward_sparse(x, p)[0])
    assert np.abs(outs[0] - outs[1]).max() <= 1e-5
