#include "kernels_detail.hpp"

// Plain reference implementations. These define the numeric contract; the
// OpenMP kernels must match them bit for bit.

namespace aunerf::kernels::serial {

using namespace detail;

void unary(Unary u, int64_t n, const double* x, double* y, double attr, double attr2) {
    switch (u) {
#define AUNERF_CASE(K)                                                   \
    case Unary::K:                                                       \
        for (int64_t i = 0; i < n; ++i)                                  \
            y[i] = unary_apply(Unary::K, x[i], attr, attr2);             \
        break;
        AUNERF_CASE(Relu)
        AUNERF_CASE(LeakyRelu)
        AUNERF_CASE(Sigmoid)
        AUNERF_CASE(Tanh)
        AUNERF_CASE(Softplus)
        AUNERF_CASE(Exp)
        AUNERF_CASE(LogClamped)
        AUNERF_CASE(Sqrt)
        AUNERF_CASE(Abs)
        AUNERF_CASE(Sign)
        AUNERF_CASE(Step)
        AUNERF_CASE(Affine)
#undef AUNERF_CASE
    }
}

void binary(Binary b, int64_t n, const double* a, const double* bb, double* y) {
    switch (b) {
#define AUNERF_CASE(K)                                                   \
    case Binary::K:                                                      \
        for (int64_t i = 0; i < n; ++i)                                  \
            y[i] = binary_apply(Binary::K, a[i], bb[i]);                 \
        break;
        AUNERF_CASE(Add)
        AUNERF_CASE(Sub)
        AUNERF_CASE(Mul)
        AUNERF_CASE(Div)
#undef AUNERF_CASE
    }
}

void matmul_nn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C) {
    for (int64_t i = 0; i < m; ++i) matmul_nn_row(i, k, n, A, B, C);
}

void matmul_nt(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C) {
    for (int64_t i = 0; i < m; ++i) matmul_nt_row(i, k, n, A, B, C);
}

void matmul_tn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C) {
    for (int64_t i = 0; i < m; ++i) matmul_tn_row(i, m, k, n, A, B, C);
}

double sum_blocked(int64_t n, const double* x) {
    const int64_t nblocks = (n + kSumBlock - 1) / kSumBlock;
    double acc = 0.0;
    for (int64_t b = 0; b < nblocks; ++b) {
        const int64_t lo = b * kSumBlock;
        const int64_t hi = lo + kSumBlock < n ? lo + kSumBlock : n;
        acc += sum_range(x, lo, hi);
    }
    return acc;
}

void col_sum(int64_t m, int64_t n, const double* X, double* y) {
    for (int64_t j = 0; j < n; ++j) y[j] = 0.0;
    for (int64_t i = 0; i < m; ++i) {
        const double* row = X + i * n;
        for (int64_t j = 0; j < n; ++j) y[j] += row[j];
    }
}

void row_sum(int64_t m, int64_t n, const double* X, double* y) {
    for (int64_t i = 0; i < m; ++i) {
        const double* row = X + i * n;
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j) acc += row[j];
        y[i] = acc;
    }
}

void broadcast_row(int64_t m, int64_t n, const double* v, double* Y) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) Y[i * n + j] = v[j];
}

void broadcast_col(int64_t m, int64_t n, const double* v, double* Y) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) Y[i * n + j] = v[i];
}

void concat_cols(int64_t m, int64_t na, int64_t nb, const double* A, const double* B, double* Y) {
    const int64_t n = na + nb;
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < na; ++j) Y[i * n + j] = A[i * na + j];
        for (int64_t j = 0; j < nb; ++j) Y[i * n + na + j] = B[i * nb + j];
    }
}

void slice_cols(int64_t m, int64_t n, int64_t c0, int64_t c1, const double* X, double* Y) {
    const int64_t w = c1 - c0;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < w; ++j) Y[i * w + j] = X[i * n + c0 + j];
}

void im2col(const Conv2dDims& d, const double* X, double* Y) {
    const int64_t rows = d.n * d.oh * d.ow;
    for (int64_t r = 0; r < rows; ++r) im2col_row(d, r, X, Y);
}

void col2im(const Conv2dDims& d, const double* G, double* Y) {
    const int64_t total = d.n * d.h * d.w * d.c;
    for (int64_t i = 0; i < total; ++i) col2im_elem(d, i, G, Y);
}

void upsample2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y) {
    const int64_t oh = 2 * h, ow = 2 * w;
    for (int64_t i = 0; i < n * oh * ow; ++i) {
        const int64_t x = (i % ow) / 2;
        const int64_t y = ((i / ow) % oh) / 2;
        const int64_t b = i / (ow * oh);
        const double* src = X + ((b * h + y) * w + x) * c;
        double* dst = Y + i * c;
        for (int64_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
    }
}

void downsum2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y) {
    // X is (n, 2h, 2w, c); Y is (n, h, w, c), each cell the sum of a 2x2 block.
    const int64_t ih = 2 * h, iw = 2 * w;
    for (int64_t i = 0; i < n * h * w; ++i) {
        const int64_t x = i % w;
        const int64_t y = (i / w) % h;
        const int64_t b = i / (w * h);
        double* dst = Y + i * c;
        for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = ((b * ih + 2 * y) * iw + 2 * x) * c + ch;
            dst[ch] = X[base] + X[base + c] + X[base + iw * c] + X[base + iw * c + c];
        }
    }
}

void volume_render_fwd(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, double* color) {
    for (int64_t r = 0; r < rays; ++r)
        vr_ray_fwd(s, sigma + r * s, rgb + r * s * 3, delta + r * s, bg, color + r * 3);
}

void volume_render_vjp(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, const double* gcolor,
                       double* dsigma, double* drgb) {
    for (int64_t r = 0; r < rays; ++r)
        vr_ray_vjp(s, sigma + r * s, rgb + r * s * 3, delta + r * s, bg, gcolor + r * 3,
                   dsigma + r * s, drgb + r * s * 3);
}

}  // namespace aunerf::kernels::serial
