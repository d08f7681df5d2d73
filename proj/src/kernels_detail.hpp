#pragma once

#include <cmath>

#include "aunerf/kernels.hpp"

// Per-element / per-ray bodies shared by the serial reference and the OpenMP
// kernels, so the two differ only in loop scheduling.

namespace aunerf::kernels::detail {

inline double unary_apply(Unary u, double x, double a, double a2) {
    switch (u) {
        case Unary::Relu: return x > 0.0 ? x : 0.0;
        case Unary::LeakyRelu: return x > 0.0 ? x : a * x;
        case Unary::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Unary::Tanh: return std::tanh(x);
        case Unary::Softplus:
            // overflow-safe: softplus(x) = max(x,0) + log1p(exp(-|x|))
            return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
        case Unary::Exp: return std::exp(x);
        case Unary::LogClamped: return std::log(x < a ? a : x);
        case Unary::Sqrt: return std::sqrt(x);
        case Unary::Abs: return std::fabs(x);
        case Unary::Sign: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        case Unary::Step: return x > 0.0 ? 1.0 : 0.0;
        case Unary::Affine: return a * x + a2;
    }
    return 0.0;
}

inline double binary_apply(Binary b, double x, double y) {
    switch (b) {
        case Binary::Add: return x + y;
        case Binary::Sub: return x - y;
        case Binary::Mul: return x * y;
        case Binary::Div: return x / y;
    }
    return 0.0;
}

// C[i,:] += A[i,k] * B[k,:] accumulation, one output row at a time; the k
// loop runs in fixed order so every backend produces identical bits.
inline void matmul_nn_row(int64_t i, int64_t k, int64_t n, const double* A, const double* B,
                          double* C) {
    double* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) c[j] = 0.0;
    const double* arow = A + i * k;
    for (int64_t p = 0; p < k; ++p) {
        const double a = arow[p];
        const double* brow = B + p * n;
        for (int64_t j = 0; j < n; ++j) c[j] += a * brow[j];
    }
}

// C = A (m x k) * B^T (n x k) -> row i: dot products against rows of B.
inline void matmul_nt_row(int64_t i, int64_t k, int64_t n, const double* A, const double* B,
                          double* C) {
    const double* arow = A + i * k;
    double* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
        const double* brow = B + j * k;
        double acc = 0.0;
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        c[j] = acc;
    }
}

// C = A^T (k x m -> m x k stored) * B (k x n); row i of C accumulates over k.
inline void matmul_tn_row(int64_t i, int64_t m, int64_t k, int64_t n, const double* A,
                          const double* B, double* C) {
    double* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) c[j] = 0.0;
    for (int64_t p = 0; p < k; ++p) {
        const double a = A[p * m + i];
        const double* brow = B + p * n;
        for (int64_t j = 0; j < n; ++j) c[j] += a * brow[j];
    }
}

constexpr int64_t kSumBlock = 4096;

inline double sum_range(const double* x, int64_t lo, int64_t hi) {
    double acc = 0.0;
    for (int64_t i = lo; i < hi; ++i) acc += x[i];
    return acc;
}

// One im2col output row: row index encodes (sample, oy, ox).
inline void im2col_row(const Conv2dDims& d, int64_t row, const double* X, double* Y) {
    const int64_t ox = row % d.ow;
    const int64_t oy = (row / d.ow) % d.oh;
    const int64_t n = row / (d.ow * d.oh);
    const int64_t ncols = d.kh * d.kw * d.c;
    double* out = Y + row * ncols;
    for (int64_t ky = 0; ky < d.kh; ++ky) {
        const int64_t y = oy * d.stride + ky - d.pad;
        for (int64_t kx = 0; kx < d.kw; ++kx) {
            const int64_t x = ox * d.stride + kx - d.pad;
            double* dst = out + (ky * d.kw + kx) * d.c;
            if (y < 0 || y >= d.h || x < 0 || x >= d.w) {
                for (int64_t ch = 0; ch < d.c; ++ch) dst[ch] = 0.0;
            } else {
                const double* src = X + ((n * d.h + y) * d.w + x) * d.c;
                for (int64_t ch = 0; ch < d.c; ++ch) dst[ch] = src[ch];
            }
        }
    }
}

// col2im as a gather: each input element sums the patch entries that read it.
inline void col2im_elem(const Conv2dDims& d, int64_t idx, const double* G, double* Y) {
    const int64_t ch = idx % d.c;
    const int64_t x = (idx / d.c) % d.w;
    const int64_t y = (idx / (d.c * d.w)) % d.h;
    const int64_t n = idx / (d.c * d.w * d.h);
    const int64_t ncols = d.kh * d.kw * d.c;
    double acc = 0.0;
    for (int64_t ky = 0; ky < d.kh; ++ky) {
        const int64_t ynum = y + d.pad - ky;
        if (ynum < 0 || ynum % d.stride != 0) continue;
        const int64_t oy = ynum / d.stride;
        if (oy >= d.oh) continue;
        for (int64_t kx = 0; kx < d.kw; ++kx) {
            const int64_t xnum = x + d.pad - kx;
            if (xnum < 0 || xnum % d.stride != 0) continue;
            const int64_t ox = xnum / d.stride;
            if (ox >= d.ow) continue;
            const int64_t row = (n * d.oh + oy) * d.ow + ox;
            const int64_t col = (ky * d.kw + kx) * d.c + ch;
            acc += G[row * ncols + col];
        }
    }
    Y[idx] = acc;
}

// Discrete quadrature of the rendering integral for one ray:
//   alpha_i = 1 - exp(-sigma_i * delta_i), T_i = prod_{j<i} (1 - alpha_j),
//   C = sum_i T_i alpha_i c_i + T_{S+1} * bg.
inline void vr_ray_fwd(int64_t s, const double* sigma, const double* rgb, const double* delta,
                       const double* bg, double* color) {
    double T = 1.0;
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    for (int64_t i = 0; i < s; ++i) {
        const double alpha = 1.0 - std::exp(-sigma[i] * delta[i]);
        const double w = T * alpha;
        c0 += w * rgb[i * 3 + 0];
        c1 += w * rgb[i * 3 + 1];
        c2 += w * rgb[i * 3 + 2];
        T *= 1.0 - alpha;
    }
    color[0] = c0 + T * bg[0];
    color[1] = c1 + T * bg[1];
    color[2] = c2 + T * bg[2];
}

// Reverse sweep for dC/dsigma_i and dC/dc_i. With A_i the color accumulated
// behind sample i under unit transmittance,
//   dC/dalpha_i = T_i (c_i - A_i),   dalpha_i/dsigma_i = delta_i (1-alpha_i),
//   dC/dc_i     = T_i alpha_i.
inline void vr_ray_vjp(int64_t s, const double* sigma, const double* rgb, const double* delta,
                       const double* bg, const double* g, double* dsigma, double* drgb) {
    // forward transmittances
    double Tcur = 1.0;
    // First pass: record per-sample alpha and T_i in dsigma as scratch.
    for (int64_t i = 0; i < s; ++i) {
        const double alpha = 1.0 - std::exp(-sigma[i] * delta[i]);
        dsigma[i] = Tcur;  // scratch: T_i
        drgb[i * 3 + 0] = alpha;  // scratch: alpha_i (channel 0 slot)
        Tcur *= 1.0 - alpha;
    }
    // Backward pass: suffix color behind sample i.
    double a0 = bg[0], a1 = bg[1], a2 = bg[2];
    for (int64_t i = s - 1; i >= 0; --i) {
        const double Ti = dsigma[i];
        const double alpha = drgb[i * 3 + 0];
        const double r = rgb[i * 3 + 0], gg = rgb[i * 3 + 1], b = rgb[i * 3 + 2];
        const double dCda0 = Ti * (r - a0);
        const double dCda1 = Ti * (gg - a1);
        const double dCda2 = Ti * (b - a2);
        const double dadsigma = delta[i] * (1.0 - alpha);
        dsigma[i] = (g[0] * dCda0 + g[1] * dCda1 + g[2] * dCda2) * dadsigma;
        const double w = Ti * alpha;
        drgb[i * 3 + 0] = g[0] * w;
        drgb[i * 3 + 1] = g[1] * w;
        drgb[i * 3 + 2] = g[2] * w;
        a0 = alpha * r + (1.0 - alpha) * a0;
        a1 = alpha * gg + (1.0 - alpha) * a1;
        a2 = alpha * b + (1.0 - alpha) * a2;
    }
}

}  // namespace aunerf::kernels::detail
