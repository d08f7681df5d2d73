#pragma once

#include <cstdint>

namespace aunerf::kernels {

// All kernels are deterministic: the OpenMP implementations partition work
// over independent output elements (or fixed-size blocks for reductions), so
// results are bit-identical to the serial reference at any thread count.

enum class Backend { Serial, OpenMP };

void set_backend(Backend b);
Backend backend();

enum class Unary {
    Relu,
    LeakyRelu,   // attr = negative slope
    Sigmoid,
    Tanh,
    Softplus,
    Exp,
    LogClamped,  // attr = clamp floor for the argument
    Sqrt,
    Abs,
    Sign,        // -1 / 0 / +1
    Step,        // 1 if x > 0 else 0
    Affine,      // attr * x + attr2
};

enum class Binary { Add, Sub, Mul, Div };

struct Conv2dDims {
    int64_t n, h, w, c;    // input, NHWC
    int64_t kh, kw;
    int64_t stride, pad;
    int64_t oh, ow;
};

inline int64_t conv_out(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Dispatchers (select the backend set with set_backend).
void unary(Unary u, int64_t n, const double* x, double* y, double attr = 0.0, double attr2 = 0.0);
void binary(Binary b, int64_t n, const double* a, const double* bb, double* y);
void matmul_nn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C);
void matmul_nt(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C);
void matmul_tn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C);
double sum_blocked(int64_t n, const double* x);
void col_sum(int64_t m, int64_t n, const double* X, double* y);
void row_sum(int64_t m, int64_t n, const double* X, double* y);
void broadcast_row(int64_t m, int64_t n, const double* v, double* Y);
void broadcast_col(int64_t m, int64_t n, const double* v, double* Y);
void concat_cols(int64_t m, int64_t na, int64_t nb, const double* A, const double* B, double* Y);
void slice_cols(int64_t m, int64_t n, int64_t c0, int64_t c1, const double* X, double* Y);
void im2col(const Conv2dDims& d, const double* X, double* Y);
void col2im(const Conv2dDims& d, const double* G, double* Y);
void upsample2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y);
void downsum2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y);
// Alpha-compositing quadrature over S samples per ray; bg is one RGB triple.
void volume_render_fwd(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, double* color);
void volume_render_vjp(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, const double* gcolor,
                       double* dsigma, double* drgb);

// Serial reference implementations, kept for testing and benchmarking.
namespace serial {
void unary(Unary u, int64_t n, const double* x, double* y, double attr, double attr2);
void binary(Binary b, int64_t n, const double* a, const double* bb, double* y);
void matmul_nn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C);
void matmul_nt(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C);
void matmul_tn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C);
double sum_blocked(int64_t n, const double* x);
void col_sum(int64_t m, int64_t n, const double* X, double* y);
void row_sum(int64_t m, int64_t n, const double* X, double* y);
void broadcast_row(int64_t m, int64_t n, const double* v, double* Y);
void broadcast_col(int64_t m, int64_t n, const double* v, double* Y);
void concat_cols(int64_t m, int64_t na, int64_t nb, const double* A, const double* B, double* Y);
void slice_cols(int64_t m, int64_t n, int64_t c0, int64_t c1, const double* X, double* Y);
void im2col(const Conv2dDims& d, const double* X, double* Y);
void col2im(const Conv2dDims& d, const double* G, double* Y);
void upsample2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y);
void downsum2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y);
void volume_render_fwd(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, double* color);
void volume_render_vjp(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, const double* gcolor,
                       double* dsigma, double* drgb);
}  // namespace serial

namespace par {
void unary(Unary u, int64_t n, const double* x, double* y, double attr, double attr2);
void binary(Binary b, int64_t n, const double* a, const double* bb, double* y);
void matmul_nn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C);
void matmul_nt(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C);
void matmul_tn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C);
double sum_blocked(int64_t n, const double* x);
void col_sum(int64_t m, int64_t n, const double* X, double* y);
void row_sum(int64_t m, int64_t n, const double* X, double* y);
void broadcast_row(int64_t m, int64_t n, const double* v, double* Y);
void broadcast_col(int64_t m, int64_t n, const double* v, double* Y);
void concat_cols(int64_t m, int64_t na, int64_t nb, const double* A, const double* B, double* Y);
void slice_cols(int64_t m, int64_t n, int64_t c0, int64_t c1, const double* X, double* Y);
void im2col(const Conv2dDims& d, const double* X, double* Y);
void col2im(const Conv2dDims& d, const double* G, double* Y);
void upsample2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y);
void downsum2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y);
void volume_render_fwd(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, double* color);
void volume_render_vjp(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, const double* gcolor,
                       double* dsigma, double* drgb);
}  // namespace par

}  // namespace aunerf::kernels
