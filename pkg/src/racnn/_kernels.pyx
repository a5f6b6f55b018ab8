# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: blocked GEMM, patch lowering and row gather/scatter.

Every function writes into a caller-allocated C-contiguous output and does no
argument validation; the Python layer in ``racnn.tensor`` and
``racnn.lowering`` checks shapes and index ranges first.
"""

from cython.parallel cimport prange
from libc.string cimport memcpy, memset

ctypedef fused real:
    float
    double

# Output rows per parallel task, and depth block of the GEMM.
cdef enum:
    MC = 64
    KC = 256


cdef inline Py_ssize_t _min(Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    return a if a < b else b


cdef extern from "_gemm_rows.h" nogil:
    void racnn_rows4_f(const float* a, Py_ssize_t lda, const float* b, Py_ssize_t n,
                       float* c0, float* c1, float* c2, float* c3,
                       Py_ssize_t t0, Py_ssize_t t1)
    void racnn_rows4_d(const double* a, Py_ssize_t lda, const double* b, Py_ssize_t n,
                       double* c0, double* c1, double* c2, double* c3,
                       Py_ssize_t t0, Py_ssize_t t1)
    void racnn_rows1_f(const float* a, const float* b, Py_ssize_t n, float* c0,
                       Py_ssize_t t0, Py_ssize_t t1)
    void racnn_rows1_d(const double* a, const double* b, Py_ssize_t n, double* c0,
                       Py_ssize_t t0, Py_ssize_t t1)


cdef void _gemm_block(const real* a, const real* b, real* c,
                      Py_ssize_t i0, Py_ssize_t i1,
                      Py_ssize_t k, Py_ssize_t n) noexcept nogil:
    # c[i0:i1, :] = a[i0:i1, :] @ b, with c rows pre-zeroed. Depth is blocked
    # by KC so the active panel of b stays cache resident; each c[i, j]
    # still accumulates over t in increasing order, whatever the row grouping.
    cdef Py_ssize_t kk = 0, kend, i
    while kk < k:
        kend = _min(kk + KC, k)
        i = i0
        while i + 4 <= i1:
            if real is float:
                racnn_rows4_f(a + i * k, k, b, n, c + i * n, c + (i + 1) * n,
                              c + (i + 2) * n, c + (i + 3) * n, kk, kend)
            else:
                racnn_rows4_d(a + i * k, k, b, n, c + i * n, c + (i + 1) * n,
                              c + (i + 2) * n, c + (i + 3) * n, kk, kend)
            i += 4
        while i < i1:
            if real is float:
                racnn_rows1_f(a + i * k, b, n, c + i * n, kk, kend)
            else:
                racnn_rows1_d(a + i * k, b, n, c + i * n, kk, kend)
            i += 1
        kk = kend


def gemm(const real[:, ::1] a, const real[:, ::1] b, real[:, ::1] out, int threads=1):
    """out = a @ b (out must be zero-filled)."""
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t nblk = (m + MC - 1) // MC
    cdef Py_ssize_t blk
    if m == 0 or n == 0 or k == 0:
        return
    cdef const real* pa = &a[0, 0]
    cdef const real* pb = &b[0, 0]
    cdef real* pc = &out[0, 0]
    if threads <= 1:
        with nogil:
            for blk in range(nblk):
                _gemm_block(pa, pb, pc, blk * MC, _min(blk * MC + MC, m), k, n)
    else:
        for blk in prange(nblk, nogil=True, num_threads=threads, schedule="static"):
            _gemm_block(pa, pb, pc, blk * MC, _min(blk * MC + MC, m), k, n)


def im2col(const real[:, :, :, ::1] x, int k, real[:, ::1] out):
    """Lower a (n, h, c, d) batch into (n*h*c, k*k*d) patch rows."""
    cdef Py_ssize_t nb = x.shape[0], h = x.shape[1], c = x.shape[2], d = x.shape[3]
    cdef Py_ssize_t r = k // 2
    cdef Py_ssize_t b, i, j, dy, dx, yy, xx
    cdef size_t nbytes = d * sizeof(real)
    cdef real* dst
    if out.shape[0] == 0:
        return
    with nogil:
        dst = &out[0, 0]
        for b in range(nb):
            for i in range(h):
                for j in range(c):
                    for dy in range(-r, r + 1):
                        yy = i + dy
                        for dx in range(-r, r + 1):
                            xx = j + dx
                            if 0 <= yy < h and 0 <= xx < c:
                                memcpy(dst, &x[b, yy, xx, 0], nbytes)
                            else:
                                memset(dst, 0, nbytes)
                            dst += d


def gather_patches(const real[:, :, :, ::1] x, const long long[::1] idx, int k,
                   bint skip_center, real[:, ::1] out):
    """Lower only the pixels listed in ``idx`` (flat n*h*c indices).

    With ``skip_center`` the centre tap is left out, giving (k*k - 1)*d
    columns per row.
    """
    cdef Py_ssize_t h = x.shape[1], c = x.shape[2], d = x.shape[3]
    cdef Py_ssize_t r = k // 2
    cdef Py_ssize_t q, p, b, i, j, dy, dx, yy, xx, hc = h * c
    cdef size_t nbytes = d * sizeof(real)
    cdef real* dst
    if idx.shape[0] == 0:
        return
    with nogil:
        dst = &out[0, 0]
        for q in range(idx.shape[0]):
            p = idx[q]
            b = p // hc
            i = (p % hc) // c
            j = p % c
            for dy in range(-r, r + 1):
                yy = i + dy
                for dx in range(-r, r + 1):
                    if skip_center and dy == 0 and dx == 0:
                        continue
                    xx = j + dx
                    if 0 <= yy < h and 0 <= xx < c:
                        memcpy(dst, &x[b, yy, xx, 0], nbytes)
                    else:
                        memset(dst, 0, nbytes)
                    dst += d


def col2im(const real[:, ::1] g, int k, real[:, :, :, ::1] out):
    """Adjoint of im2col: accumulate patch rows back into ``out`` (zeroed)."""
    cdef Py_ssize_t nb = out.shape[0], h = out.shape[1], c = out.shape[2], d = out.shape[3]
    cdef Py_ssize_t r = k // 2
    cdef Py_ssize_t b, i, j, dy, dx, yy, xx, ch
    cdef const real* src
    cdef real* dst
    if g.shape[0] == 0:
        return
    with nogil:
        src = &g[0, 0]
        for b in range(nb):
            for i in range(h):
                for j in range(c):
                    for dy in range(-r, r + 1):
                        yy = i + dy
                        for dx in range(-r, r + 1):
                            xx = j + dx
                            if 0 <= yy < h and 0 <= xx < c:
                                dst = &out[b, yy, xx, 0]
                                for ch in range(d):
                                    dst[ch] += src[ch]
                            src += d


def gather_rows(const real[:, ::1] a, const long long[::1] idx, real[:, ::1] out):
    cdef Py_ssize_t q, n = a.shape[1]
    cdef size_t nbytes = n * sizeof(real)
    if idx.shape[0] == 0 or n == 0:
        return
    with nogil:
        for q in range(idx.shape[0]):
            memcpy(&out[q, 0], &a[idx[q], 0], nbytes)


def scatter_add_scaled(real[:, ::1] dst, const real[:, ::1] src,
                       const long long[::1] idx, const real[::1] scale):
    """dst[idx[q], :] += scale[q] * src[q, :] in place."""
    cdef Py_ssize_t q, j, n = dst.shape[1]
    cdef real s
    cdef real* drow
    cdef const real* srow
    if idx.shape[0] == 0 or n == 0:
        return
    with nogil:
        for q in range(idx.shape[0]):
            s = scale[q]
            drow = &dst[idx[q], 0]
            srow = &src[q, 0]
            for j in range(n):
                drow[j] += s * srow[j]
