"""Image-to-column lowering and its adjoint.

Row ``p = (b*h + i)*c + j`` of a lowered matrix holds the k x k neighbourhood
of pixel (i, j) of image b. Offsets are scanned dy-major (dy = -r..r outer,
dx = -r..r inner) with the d channels of each tap contiguous, and taps that
fall outside the image are zero ("same" padding, stride 1). Kernel matrices
use the identical row order.
"""

import numpy as np

from . import _backend
from .errors import ShapeError
from .tensor import as_batch, as_index

SUPPORTED_K = (1, 3)


def _check_k(k):
    if k not in SUPPORTED_K:
        if isinstance(k, int) and k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {k}")
        raise ValueError(f"kernel size must be one of {SUPPORTED_K}, got {k}")


def center_rows(d, k=3):
    """Slice of the rows of a (k*k*d, f) kernel matrix that hold the centre tap."""
    mid = (k * k) // 2
    return slice(mid * d, (mid + 1) * d)


def im2col(x, k):
    """Lower ``x`` ((h, c, d) or (n, h, c, d)) to a (n*h*c, k*k*d) matrix.

    ``k == 1`` is a pure reshape of the pixel-major data.
    """
    _check_k(k)
    xb = as_batch(x)
    n, h, c, d = xb.shape
    if k == 1:
        return xb.reshape(n * h * c, d)
    out = np.empty((n * h * c, k * k * d), dtype=xb.dtype)
    _backend.kernels().im2col(xb, k, out)
    return out


def im2col_rows(x, idx, k, *, skip_center=False):
    """Lowered rows for the flat pixel indices ``idx`` only.

    Equivalent to ``im2col(x, k)[idx]`` without materialising the full
    matrix. ``skip_center`` drops the centre tap (columns ``center_rows``),
    which is how the hollow 3x3 product avoids multiplying known zeros.
    """
    _check_k(k)
    xb = as_batch(x)
    n, h, c, d = xb.shape
    idx = as_index(idx, n * h * c)
    taps = k * k - (1 if skip_center else 0)
    out = np.empty((idx.size, taps * d), dtype=xb.dtype)
    _backend.kernels().gather_patches(xb, idx, k, bool(skip_center), out)
    return out


def col2im(g, h, c, d, k, n=None):
    """Adjoint of :func:`im2col`: sum every lowered entry back onto its source pixel.

    Returns shape (h, c, d), or (n, h, c, d) when ``n`` is given.
    """
    _check_k(k)
    g = np.asarray(g)
    nb = 1 if n is None else n
    if g.ndim != 2 or g.shape != (nb * h * c, k * k * d):
        raise ShapeError(f"col2im expects ({nb * h * c}, {k * k * d}), got {g.shape}")
    dt = g.dtype if g.dtype in (np.float32, np.float64) else np.float64
    g = np.ascontiguousarray(g, dtype=dt)
    if k == 1:
        out = g.reshape(nb, h, c, d).copy()
    else:
        out = np.zeros((nb, h, c, d), dtype=dt)
        _backend.kernels().col2im(g, k, out)
    return out[0] if n is None else out
