#include "aunerf/kernels.hpp"

#include <atomic>

namespace aunerf::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::OpenMP};
}

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() { return g_backend.load(std::memory_order_relaxed); }

#define AUNERF_DISPATCH(fn, ...)                      \
    if (backend() == Backend::Serial)                 \
        serial::fn(__VA_ARGS__);                      \
    else                                              \
        par::fn(__VA_ARGS__)

void unary(Unary u, int64_t n, const double* x, double* y, double attr, double attr2) {
    AUNERF_DISPATCH(unary, u, n, x, y, attr, attr2);
}
void binary(Binary b, int64_t n, const double* a, const double* bb, double* y) {
    AUNERF_DISPATCH(binary, b, n, a, bb, y);
}
void matmul_nn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C) {
    AUNERF_DISPATCH(matmul_nn, m, k, n, A, B, C);
}
void matmul_nt(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C) {
    AUNERF_DISPATCH(matmul_nt, m, k, n, A, B, C);
}
void matmul_tn(int64_t m, int64_t k, int64_t n, const double* A, const double* B, double* C) {
    AUNERF_DISPATCH(matmul_tn, m, k, n, A, B, C);
}
double sum_blocked(int64_t n, const double* x) {
    return backend() == Backend::Serial ? serial::sum_blocked(n, x) : par::sum_blocked(n, x);
}
void col_sum(int64_t m, int64_t n, const double* X, double* y) {
    AUNERF_DISPATCH(col_sum, m, n, X, y);
}
void row_sum(int64_t m, int64_t n, const double* X, double* y) {
    AUNERF_DISPATCH(row_sum, m, n, X, y);
}
void broadcast_row(int64_t m, int64_t n, const double* v, double* Y) {
    AUNERF_DISPATCH(broadcast_row, m, n, v, Y);
}
void broadcast_col(int64_t m, int64_t n, const double* v, double* Y) {
    AUNERF_DISPATCH(broadcast_col, m, n, v, Y);
}
void concat_cols(int64_t m, int64_t na, int64_t nb, const double* A, const double* B, double* Y) {
    AUNERF_DISPATCH(concat_cols, m, na, nb, A, B, Y);
}
void slice_cols(int64_t m, int64_t n, int64_t c0, int64_t c1, const double* X, double* Y) {
    AUNERF_DISPATCH(slice_cols, m, n, c0, c1, X, Y);
}
void im2col(const Conv2dDims& d, const double* X, double* Y) { AUNERF_DISPATCH(im2col, d, X, Y); }
void col2im(const Conv2dDims& d, const double* G, double* Y) { AUNERF_DISPATCH(col2im, d, G, Y); }
void upsample2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y) {
    AUNERF_DISPATCH(upsample2, n, h, w, c, X, Y);
}
void downsum2(int64_t n, int64_t h, int64_t w, int64_t c, const double* X, double* Y) {
    AUNERF_DISPATCH(downsum2, n, h, w, c, X, Y);
}
void volume_render_fwd(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, double* color) {
    AUNERF_DISPATCH(volume_render_fwd, rays, s, sigma, rgb, delta, bg, color);
}
void volume_render_vjp(int64_t rays, int64_t s, const double* sigma, const double* rgb,
                       const double* delta, const double* bg, const double* gcolor,
                       double* dsigma, double* drgb) {
    AUNERF_DISPATCH(volume_render_vjp, rays, s, sigma, rgb, delta, bg, gcolor, dsigma, drgb);
}

#undef AUNERF_DISPATCH

}  // namespace aunerf::kernels
