"""Pure-Python (numpy) implementations of the kernels in ``_kernels.pyx``.

Same call signatures and output conventions as the compiled module, so the
dispatcher in ``_backend`` can swap one for the other.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Fixed row chunking: each chunk is one BLAS call regardless of thread count,
# which keeps multi-threaded results identical to single-threaded ones.
_ROW_CHUNK = 1024


def gemm(a, b, out, threads=1):
    m = a.shape[0]
    if m == 0:
        return
    starts = range(0, m, _ROW_CHUNK)
    if threads <= 1 or m <= _ROW_CHUNK:
        for s in starts:
            np.matmul(a[s:s + _ROW_CHUNK], b, out=out[s:s + _ROW_CHUNK])
        return

    def work(s):
        np.matmul(a[s:s + _ROW_CHUNK], b, out=out[s:s + _ROW_CHUNK])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(work, starts))


def _offsets(k):
    r = k // 2
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]


def im2col(x, k, out):
    n, h, c, d = x.shape
    r = k // 2
    xp = np.pad(x, ((0, 0), (r, r), (r, r), (0, 0)))
    view = out.reshape(n, h, c, k * k, d)
    for o, (dy, dx) in enumerate(_offsets(k)):
        view[:, :, :, o, :] = xp[:, r + dy:r + dy + h, r + dx:r + dx + c, :]


def gather_patches(x, idx, k, skip_center, out):
    if len(idx) == 0:
        return
    n, h, c, d = x.shape
    r = k // 2
    xp = np.pad(x, ((0, 0), (r, r), (r, r), (0, 0)))
    b, rem = np.divmod(idx, h * c)
    i, j = np.divmod(rem, c)
    col = 0
    for dy, dx in _offsets(k):
        if skip_center and dy == 0 and dx == 0:
            continue
        out[:, col:col + d] = xp[b, i + r + dy, j + r + dx, :]
        col += d


def col2im(g, k, out):
    n, h, c, d = out.shape
    r = k // 2
    gp = np.zeros((n, h + 2 * r, c + 2 * r, d), dtype=out.dtype)
    view = g.reshape(n, h, c, k * k, d)
    for o, (dy, dx) in enumerate(_offsets(k)):
        gp[:, r + dy:r + dy + h, r + dx:r + dx + c, :] += view[:, :, :, o, :]
    out += gp[:, r:r + h, r:r + c, :]


def gather_rows(a, idx, out):
    np.take(a, idx, axis=0, out=out)


def scatter_add_scaled(dst, src, idx, scale):
    # idx is unique, so fancy-index accumulation is safe.
    dst[idx] += scale[:, None] * src
