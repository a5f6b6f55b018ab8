"""Radius-adaptive convolution.

A layer blends a 1x1 and a 3x3 convolution per pixel::

    out[p] = I1[p] @ w1 + alpha[p] * (I3[p] @ w3_hollow)
    alpha[p] = clip(I1[p] @ w_alpha + b_alpha, 0, 1)

where ``w3_hollow`` is the 3x3 kernel minus the zero-padded 1x1 kernel, so
its centre tap is zero and the 3x3 kernel's centre is shared with ``w1``.
Pixels with ``alpha == 0`` need no 3x3 work at all; the sparse forward
gathers only the remaining rows into one GEMM and scatters the scaled result
back. The dense forward computes every pixel and is what training
differentiates.
"""

from dataclasses import dataclass

import numpy as np

from . import config
from .errors import CacheError, NumericError, ShapeError
from .lowering import center_rows, col2im, im2col, im2col_rows
from .tensor import as_batch, matmul, scatter_add_scaled_rows


@dataclass
class RacnnParams:
    """Shared-weight parameters of one adaptive layer.

    ``w1`` is (d, f), ``w3_hollow`` is (9d, f) with the centre rows
    ``[4d, 5d)`` zero, ``w_alpha`` has length d and ``b_alpha`` is the
    selector bias (0 reproduces the bias-free selector exactly).
    """

    w1: np.ndarray
    w3_hollow: np.ndarray
    w_alpha: np.ndarray
    b_alpha: float = 0.0

    @property
    def d(self):
        return self.w1.shape[0]

    @property
    def f(self):
        return self.w1.shape[1]

    @property
    def dtype(self):
        return self.w1.dtype

    def num_params(self):
        return self.w3_hollow.size + self.w_alpha.size + 1

    def validate(self):
        d, f = self.w1.shape
        if self.w3_hollow.shape != (9 * d, f):
            raise ShapeError(f"w3_hollow must be {(9 * d, f)}, got {self.w3_hollow.shape}")
        if self.w_alpha.shape != (d,):
            raise ShapeError(f"w_alpha must have length {d}, got shape {self.w_alpha.shape}")
        if np.any(self.w3_hollow[center_rows(d)] != 0):
            raise ValueError("w3_hollow centre rows must be zero")
        return self

    def copy(self):
        return RacnnParams(self.w1.copy(), self.w3_hollow.copy(),
                           self.w_alpha.copy(), float(self.b_alpha))

    def astype(self, dtype):
        return RacnnParams(self.w1.astype(dtype), self.w3_hollow.astype(dtype),
                           self.w_alpha.astype(dtype), float(self.b_alpha))

    @classmethod
    def zeros(cls, d, f, dtype=None):
        dt = dtype or config.default_dtype()
        return cls(np.zeros((d, f), dt), np.zeros((9 * d, f), dt), np.zeros(d, dt), 0.0)

    @classmethod
    def random(cls, rng, d, f, *, alpha_bias=1.0, alpha_scale=None, dtype=None):
        """He-uniform 3x3 kernel split into (w1, hollow); small uniform selector."""
        dt = dtype or config.default_dtype()
        limit = np.sqrt(6.0 / (9 * d))
        w3 = rng.uniform(-limit, limit, size=(9 * d, f))
        w1 = w3[center_rows(d)].copy()
        scale = alpha_scale if alpha_scale is not None else 1.0 / np.sqrt(d)
        w_alpha = rng.uniform(-scale, scale, size=d)
        return cls(w1.astype(dt), make_hollow(w3, w1).astype(dt), w_alpha.astype(dt),
                   float(alpha_bias))


@dataclass
class AlphaMap:
    raw: np.ndarray
    clipped: np.ndarray


@dataclass
class SplitPlan:
    rhat: np.ndarray
    mapping: np.ndarray
    idx_active: np.ndarray
    idx_rest: np.ndarray


@dataclass
class SparseStats:
    total_pixels: int
    active_pixels: int
    skipped_pixels: int
    fraction_alpha_zero: float
    fraction_alpha_one: float
    fraction_alpha_mid: float

    @classmethod
    def from_alpha(cls, alpha, tau=0.0):
        a = np.asarray(alpha).reshape(-1)
        total = a.size
        active = int(np.count_nonzero(a > tau))
        zero = int(np.count_nonzero(a == 0))
        one = int(np.count_nonzero(a == 1))
        mid = total - zero - one
        return cls(total, active, total - active, zero / total, one / total, mid / total)


# -- standard convolution and weight sharing ------------------------------

def conv2d(x, w, k):
    """Standard "same" convolution as one GEMM: ``im2col(x, k) @ w``."""
    xb = as_batch(x)
    n, h, c, d = xb.shape
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] != k * k * d:
        raise ShapeError(f"kernel must have {k * k * d} rows for k={k}, d={d}; got {w.shape}")
    out = matmul(im2col(xb, k), w).reshape(n, h, c, w.shape[1])
    return out[0] if np.ndim(x) == 3 else out


def embed_center(params):
    """Dense 3x3 kernel: the hollow kernel with ``w1`` written into its centre."""
    w3 = params.w3_hollow.copy()
    w3[center_rows(params.d)] = params.w1
    return w3


def make_hollow(w3_dense, w1):
    """``w3 - pad(w1)`` with the centre zeroed: the hollow kernel."""
    w3_dense = np.asarray(w3_dense)
    w1 = np.asarray(w1)
    d, f = w1.shape
    if w3_dense.shape != (9 * d, f):
        raise ShapeError(f"dense kernel must be {(9 * d, f)}, got {w3_dense.shape}")
    hollow = w3_dense.copy()
    hollow[center_rows(d)] = 0
    return hollow


def hollow_compact(w3_hollow, d):
    """Hollow kernel without its (zero) centre rows: (8d, f)."""
    mid = center_rows(d)
    return np.ascontiguousarray(np.concatenate([w3_hollow[:mid.start], w3_hollow[mid.stop:]]))


# -- hard split / merge ---------------------------------------------------

def make_split_plan(rhat):
    """Index sets and mapping table for a binary radius vector.

    Vectorised form of the sequential splitter: pixel p gets the running
    count of earlier pixels on its own side.
    """
    rhat = np.asarray(rhat).reshape(-1)
    if not np.all((rhat == 0) | (rhat == 1)):
        raise ValueError("rhat must be binary")
    rhat = rhat.astype(np.int8)
    idx_active = np.flatnonzero(rhat == 1)
    idx_rest = np.flatnonzero(rhat == 0)
    mapping = np.empty(rhat.size, dtype=np.int64)
    mapping[idx_active] = np.arange(idx_active.size)
    mapping[idx_rest] = np.arange(idx_rest.size)
    return SplitPlan(rhat, mapping, idx_active, idx_rest)


def hard_split(i3, i1, rhat):
    i3 = np.asarray(i3)
    i1 = np.asarray(i1)
    if not (i3.shape[0] == i1.shape[0] == np.size(rhat)):
        raise ShapeError(
            f"row counts differ: I3 {i3.shape[0]}, I1 {i1.shape[0]}, rhat {np.size(rhat)}")
    plan = make_split_plan(rhat)
    return i3[plan.idx_active], i1[plan.idx_rest], plan


def hard_merge(o3, o1, plan):
    o3 = np.asarray(o3)
    o1 = np.asarray(o1)
    if o3.shape[0] != plan.idx_active.size or o1.shape[0] != plan.idx_rest.size:
        raise ShapeError(
            f"expected {plan.idx_active.size} and {plan.idx_rest.size} rows, "
            f"got {o3.shape[0]} and {o1.shape[0]}")
    if o3.shape[1] != o1.shape[1]:
        if o3.shape[0] and o1.shape[0]:
            raise ShapeError(f"column counts differ: {o3.shape[1]} vs {o1.shape[1]}")
    cols = o3.shape[1] if o3.shape[0] else o1.shape[1]
    out = np.empty((plan.rhat.size, cols), dtype=np.result_type(o3, o1))
    out[plan.idx_active] = o3
    out[plan.idx_rest] = o1
    return out


def hard_forward(x, w3, w1, rhat):
    """Binary-radius convolution: split rows, one GEMM per radius, merge."""
    i3 = im2col(x, 3)
    i1 = im2col(x, 1)
    i3_hat, i1_hat, plan = hard_split(i3, i1, rhat)
    return hard_merge(matmul(i3_hat, w3), matmul(i1_hat, w1), plan)


# -- soft selector --------------------------------------------------------

def alpha_merged_gemm(i1, params):
    """One GEMM against ``[w_alpha | w1]`` giving (alpha_raw, I1 @ w1)."""
    i1 = np.asarray(i1)
    if i1.ndim != 2 or i1.shape[1] != params.d:
        raise ShapeError(f"I1 must have {params.d} columns, got shape {i1.shape}")
    wcat = np.empty((params.d, params.f + 1), dtype=params.dtype)
    wcat[:, 0] = params.w_alpha
    wcat[:, 1:] = params.w1
    fused = matmul(i1, wcat)
    alpha_raw = fused[:, 0] + fused.dtype.type(params.b_alpha)
    return alpha_raw, np.ascontiguousarray(fused[:, 1:])


def clip01(alpha_raw):
    raw = np.asarray(alpha_raw)
    if np.isnan(raw).any():
        raise NumericError("alpha_raw contains NaN")
    return AlphaMap(raw=raw, clipped=np.minimum(np.maximum(raw, 0), 1))


def predict_time_factor(p_zero):
    """Cost of the adaptive layer relative to a standard 3x3 convolution.

    The fused selector/1x1 GEMM costs 1/9; the hollow 3x3 part costs 8/9 for
    the pixels that are not skipped.
    """
    if not 0.0 <= p_zero <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {p_zero}")
    return (1.0 + 8.0 * (1.0 - p_zero)) / 9.0


def standard_macs(h, c, d, f, n=1):
    return n * h * c * 9 * d * f


# -- forward passes -------------------------------------------------------

def _check_input(x, params):
    xb = as_batch(x)
    if xb.shape[-1] != params.d:
        raise ShapeError(f"input has {xb.shape[-1]} channels, layer expects {params.d}")
    if xb.dtype != params.dtype:
        xb = xb.astype(params.dtype)
    return xb


@dataclass
class DenseCache:
    x_shape: tuple
    i1: np.ndarray
    i3: np.ndarray
    hollow_out: np.ndarray
    alpha: AlphaMap


def racnn_forward_dense(x, params, *, return_cache=False):
    """Reference forward: every pixel gets its full blend, nothing skipped."""
    xb = _check_input(x, params)
    n, h, c, _ = xb.shape
    i1 = im2col(xb, 1)
    i3 = im2col(xb, 3)
    alpha_raw, o1 = alpha_merged_gemm(i1, params)
    amap = clip01(alpha_raw)
    s = matmul(i3, params.w3_hollow)
    out = o1 + amap.clipped[:, None] * s
    out = out.reshape(n, h, c, params.f)
    if np.ndim(x) == 3:
        out = out[0]
    if return_cache:
        return out, amap, DenseCache(xb.shape, i1, i3, s, amap)
    return out, amap


def racnn_forward_sparse(x, params, tau=0.0):
    """Skip-path forward: hollow 3x3 GEMM only over rows with alpha > tau.

    ``tau == 0`` matches the dense forward (up to float reassociation);
    ``tau > 0`` also skips small-but-nonzero alphas and is approximate.
    """
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"tau must lie in [0, 1), got {tau}")
    xb = _check_input(x, params)
    n, h, c, d = xb.shape
    alpha_raw, out = alpha_merged_gemm(im2col(xb, 1), params)
    amap = clip01(alpha_raw)
    active = np.flatnonzero(amap.clipped > tau)
    if active.size:
        patches = im2col_rows(xb, active, 3, skip_center=True)
        s = matmul(patches, hollow_compact(params.w3_hollow, d))
        scatter_add_scaled_rows(out, s, active, amap.clipped[active], inplace=True)
    out = out.reshape(n, h, c, params.f)
    if np.ndim(x) == 3:
        out = out[0]
    return out, amap, SparseStats.from_alpha(amap.clipped, tau)


# -- backward -------------------------------------------------------------

def racnn_backward(x, params, cache, g):
    """Gradients of the dense forward given the output cotangent ``g``.

    Returns ``(grads, grad_x)`` where ``grads`` is a :class:`RacnnParams`
    (centre rows of the hollow gradient are zero, since those weights are
    tied to ``w1``). The clip derivative is 1 strictly inside (0, 1), else 0.
    """
    if cache is None:
        raise CacheError("racnn_backward needs the cache from racnn_forward_dense")
    xb = as_batch(x)
    if tuple(xb.shape) != tuple(cache.x_shape):
        raise CacheError(f"cache is for input {cache.x_shape}, got {xb.shape}")
    n, h, c, d = cache.x_shape
    g = np.asarray(g, dtype=params.dtype).reshape(-1, params.f)
    if g.shape[0] != n * h * c:
        raise ShapeError(f"cotangent must have {n * h * c} rows, got {g.shape[0]}")
    alpha = cache.alpha.clipped
    raw = cache.alpha.raw
    i1t = np.ascontiguousarray(cache.i1.T)

    ag = alpha[:, None] * g
    gate = ((raw > 0) & (raw < 1)).astype(g.dtype)
    dalpha = gate * np.einsum("pf,pf->p", g, cache.hollow_out)

    grad_w1 = matmul(i1t, g)
    grad_w3 = matmul(np.ascontiguousarray(cache.i3.T), ag)
    grad_w3[center_rows(d)] = 0
    grad_wa = matmul(i1t, dalpha[:, None])[:, 0]
    grad_b = float(dalpha.sum())

    gx = matmul(g, np.ascontiguousarray(params.w1.T)).reshape(n, h, c, d)
    gx += col2im(matmul(ag, np.ascontiguousarray(params.w3_hollow.T)), h, c, d, 3, n=n)
    gx += (dalpha[:, None] * params.w_alpha[None, :]).reshape(n, h, c, d)
    if np.ndim(x) == 3:
        gx = gx[0]
    return RacnnParams(grad_w1, grad_w3, grad_wa, grad_b), gx


def selector_bias_for_zero_fraction(x, params, fraction):
    """Selector bias that sends exactly ``round(fraction * pixels)`` alphas to 0.

    The bias is placed midway between neighbouring sorted selector outputs,
    so the split survives float rounding of the fused GEMM.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    probe = RacnnParams(params.w1, params.w3_hollow, params.w_alpha, 0.0)
    s, _ = alpha_merged_gemm(im2col(_check_input(x, params), 1), probe)
    s = np.sort(s.astype(np.float64))
    q = int(round(fraction * s.size))
    spread = max(float(s[-1] - s[0]), 1.0)
    if q == 0:
        return float(-s[0] + 0.25 * spread)
    if q == s.size:
        return float(-s[-1] - 0.25 * spread)
    return float(-(s[q - 1] + s[q]) / 2.0)
