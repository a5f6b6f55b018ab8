/* Row-panel GEMM step: c[0:4, :] += a[0:4, t0:t1] @ b[t0:t1, :].
 * restrict lets the compiler vectorise the contiguous j loop without
 * runtime alias checks. Accumulation over t is ascending. */
#ifndef RACNN_GEMM_ROWS_H
#define RACNN_GEMM_ROWS_H
#include <stddef.h>

#define RACNN_DEFINE_ROWS4(NAME, T)                                            \
static inline void NAME(const T *restrict a, ptrdiff_t lda,                   \
                        const T *restrict b, ptrdiff_t n,                     \
                        T *restrict c0, T *restrict c1,                       \
                        T *restrict c2, T *restrict c3,                       \
                        ptrdiff_t t0, ptrdiff_t t1)                           \
{                                                                             \
    for (ptrdiff_t t = t0; t < t1; ++t) {                                     \
        const T *restrict brow = b + t * n;                                   \
        const T a0 = a[t], a1 = a[lda + t], a2 = a[2 * lda + t],              \
                a3 = a[3 * lda + t];                                          \
        for (ptrdiff_t j = 0; j < n; ++j) {                                   \
            const T bj = brow[j];                                             \
            c0[j] += a0 * bj;                                                 \
            c1[j] += a1 * bj;                                                 \
            c2[j] += a2 * bj;                                                 \
            c3[j] += a3 * bj;                                                 \
        }                                                                     \
    }                                                                         \
}

#define RACNN_DEFINE_ROWS1(NAME, T)                                            \
static inline void NAME(const T *restrict a, const T *restrict b,             \
                        ptrdiff_t n, T *restrict c0,                          \
                        ptrdiff_t t0, ptrdiff_t t1)                           \
{                                                                             \
    for (ptrdiff_t t = t0; t < t1; ++t) {                                     \
        const T *restrict brow = b + t * n;                                   \
        const T a0 = a[t];                                                    \
        for (ptrdiff_t j = 0; j < n; ++j)                                     \
            c0[j] += a0 * brow[j];                                            \
    }                                                                         \
}

RACNN_DEFINE_ROWS4(racnn_rows4_f, float)
RACNN_DEFINE_ROWS4(racnn_rows4_d, double)
RACNN_DEFINE_ROWS1(racnn_rows1_f, float)
RACNN_DEFINE_ROWS1(racnn_rows1_d, double)

#endif
