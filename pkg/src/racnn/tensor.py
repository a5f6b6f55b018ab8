"""Dense tensor helpers and the GEMM primitive everything lowers to.

Feature maps are plain ndarrays of shape ``(h, c, d)`` (or a stacked batch
``(n, h, c, d)``), pixel-major with channels innermost. Matrices are 2-D
C-contiguous arrays. Kernels come from the active backend (see ``_backend``).
"""

import contextlib
from dataclasses import dataclass, field

import numpy as np

from . import _backend, config
from .errors import NumericError, ShapeError

_FLOATS = (np.float32, np.float64)


def _float_dtype(*arrays):
    dt = np.result_type(*arrays)
    if dt in _FLOATS:
        return dt
    if np.issubdtype(dt, np.floating):
        return np.dtype(np.float64)
    return np.dtype(config.default_dtype())


def as_index(idx, upper=None):
    """Validate an index list and return it as a contiguous int64 array."""
    arr = np.ascontiguousarray(idx, dtype=np.int64).reshape(-1)
    if upper is not None and arr.size and (arr.min() < 0 or arr.max() >= upper):
        bad = arr[(arr < 0) | (arr >= upper)][0]
        raise IndexError(f"row index {bad} out of range [0, {upper})")
    return arr


# -- operation counting -------------------------------------------------

@dataclass
class MacCounter:
    """Multiply-accumulate tally of every matmul issued while active."""

    macs: int = 0
    calls: list = field(default_factory=list)

    def add(self, m, k, n):
        self.macs += m * k * n
        self.calls.append((m, k, n))


_counters = []


@contextlib.contextmanager
def count_macs():
    counter = MacCounter()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)


# -- GEMM ----------------------------------------------------------------

def matmul(a, b, *, threads=None):
    """Blocked GEMM ``a @ b`` on the active backend.

    Output rows may be split across ``threads`` workers (default from
    :func:`racnn.config.threads`); results match single-threaded execution
    bit for bit.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    dt = _float_dtype(a, b)
    a = np.ascontiguousarray(a, dtype=dt)
    b = np.ascontiguousarray(b, dtype=dt)
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=dt)
    for counter in _counters:
        counter.add(m, k, n)
    _backend.kernels().gemm(a, b, out, threads or config.threads())
    return out


def matmul_naive(a, b):
    """Reference triple loop, accumulated in Python floats. Slow on purpose."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    m, k = a.shape
    n = b.shape[1]
    al = a.tolist()
    bl = b.tolist()
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        row = al[i]
        orow = out[i]
        for t in range(k):
            ait = row[t]
            brow = bl[t]
            for j in range(n):
                orow[j] += ait * brow[j]
    return np.array(out, dtype=_float_dtype(a, b)).reshape(m, n)


# -- row gather / scatter ------------------------------------------------

def gather_rows(a, idx):
    """Rows ``a[idx[i]]`` in the given order; empty ``idx`` gives a 0-row matrix."""
    a = np.ascontiguousarray(a)
    if a.ndim != 2:
        raise ShapeError("gather_rows expects a matrix")
    idx = as_index(idx, a.shape[0])
    out = np.empty((idx.size, a.shape[1]), dtype=a.dtype)
    _backend.kernels().gather_rows(a, idx, out)
    return out


def scatter_add_scaled_rows(dst, src, idx, scale, *, inplace=False):
    """``dst[idx[i], :] += scale[i] * src[i, :]``; other rows untouched.

    Returns a new matrix unless ``inplace`` (then ``dst`` must already be a
    C-contiguous float array and is modified and returned).
    """
    dst = np.asarray(dst)
    src = np.asarray(src)
    if dst.ndim != 2 or src.ndim != 2:
        raise ShapeError("scatter_add_scaled_rows expects matrices")
    idx = as_index(idx, dst.shape[0])
    scale = np.asarray(scale).reshape(-1)
    if not (idx.size == src.shape[0] == scale.size):
        raise ShapeError(
            f"length mismatch: {idx.size} indices, {src.shape[0]} rows, {scale.size} scales")
    if src.shape[1] != dst.shape[1]:
        raise ShapeError(f"column mismatch: src has {src.shape[1]}, dst has {dst.shape[1]}")
    if np.unique(idx).size != idx.size:
        raise ValueError("scatter indices must be unique")
    dt = _float_dtype(dst, src)
    if inplace:
        if dst.dtype != dt or not dst.flags.c_contiguous:
            raise ValueError("in-place scatter needs a C-contiguous destination of the result dtype")
        out = dst
    else:
        out = np.array(dst, dtype=dt, order="C", copy=True)
    _backend.kernels().scatter_add_scaled(
        out,
        np.ascontiguousarray(src, dtype=dt),
        idx,
        np.ascontiguousarray(scale, dtype=dt),
    )
    return out


# -- construction and checks ---------------------------------------------

def make_rng(seed):
    """Seeded PCG64 generator; same seed gives the same stream everywhere."""
    return np.random.default_rng(seed)


def random_tensor(rng, h, c, d, *, dtype=None):
    """Uniform[-1, 1] feature map of shape (h, c, d)."""
    if min(h, c, d) < 1:
        raise ShapeError(f"tensor dimensions must be >= 1, got {(h, c, d)}")
    dt = dtype or config.default_dtype()
    return rng.uniform(-1.0, 1.0, size=(h, c, d)).astype(dt)


def check_finite(arr, what="tensor"):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} contains NaN or Inf")
    return arr


def as_batch(x):
    """View a (h, c, d) map as a 1-image batch; (n, h, c, d) passes through."""
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4:
        raise ShapeError(f"expected (h, c, d) or (n, h, c, d), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ShapeError(f"feature map dimensions must be >= 1, got {x.shape}")
    if x.dtype not in _FLOATS:
        x = x.astype(config.default_dtype())
    return np.ascontiguousarray(x)
