#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "aunerf/kernels.hpp"
#include "aunerf/rng.hpp"

using namespace aunerf;
namespace K = kernels;

namespace {

std::vector<double> randv(size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

void check_equal(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        // bit-identical, not approximately equal
        CHECK(a[i] == b[i]);
    }
}

}  // namespace

TEST_CASE("OpenMP kernels match the serial reference bit for bit") {
    Rng rng(2024);

    SUBCASE("unary") {
        auto x = randv(5001, rng);
        for (auto u : {K::Unary::Relu, K::Unary::LeakyRelu, K::Unary::Sigmoid, K::Unary::Tanh,
                       K::Unary::Softplus, K::Unary::Exp, K::Unary::LogClamped, K::Unary::Sqrt,
                       K::Unary::Abs, K::Unary::Sign, K::Unary::Step, K::Unary::Affine}) {
            std::vector<double> xs = x;
            if (u == K::Unary::Sqrt || u == K::Unary::LogClamped)
                for (auto& v : xs) v = std::fabs(v) + 1e-3;
            std::vector<double> ys(xs.size()), yp(xs.size());
            K::serial::unary(u, (int64_t)xs.size(), xs.data(), ys.data(), 0.2, 0.7);
            K::par::unary(u, (int64_t)xs.size(), xs.data(), yp.data(), 0.2, 0.7);
            check_equal(ys, yp);
        }
    }

    SUBCASE("binary") {
        auto a = randv(4097, rng);
        auto b = randv(4097, rng, 0.5, 2.0);
        for (auto op : {K::Binary::Add, K::Binary::Sub, K::Binary::Mul, K::Binary::Div}) {
            std::vector<double> ys(a.size()), yp(a.size());
            K::serial::binary(op, (int64_t)a.size(), a.data(), b.data(), ys.data());
            K::par::binary(op, (int64_t)a.size(), a.data(), b.data(), yp.data());
            check_equal(ys, yp);
        }
    }

    SUBCASE("matmul variants") {
        const int64_t m = 37, k = 53, n = 29;
        auto A = randv((size_t)(m * k), rng);
        auto B = randv((size_t)(k * n), rng);
        std::vector<double> Cs((size_t)(m * n)), Cp((size_t)(m * n));
        K::serial::matmul_nn(m, k, n, A.data(), B.data(), Cs.data());
        K::par::matmul_nn(m, k, n, A.data(), B.data(), Cp.data());
        check_equal(Cs, Cp);

        auto Bt = randv((size_t)(n * k), rng);
        K::serial::matmul_nt(m, k, n, A.data(), Bt.data(), Cs.data());
        K::par::matmul_nt(m, k, n, A.data(), Bt.data(), Cp.data());
        check_equal(Cs, Cp);

        auto At = randv((size_t)(k * m), rng);
        K::serial::matmul_tn(m, k, n, At.data(), B.data(), Cs.data());
        K::par::matmul_tn(m, k, n, At.data(), B.data(), Cp.data());
        check_equal(Cs, Cp);
    }

    SUBCASE("reductions and broadcasts") {
        auto x = randv(100000, rng);
        CHECK(K::serial::sum_blocked((int64_t)x.size(), x.data()) ==
              K::par::sum_blocked((int64_t)x.size(), x.data()));
        const int64_t m = 61, n = 47;
        auto M = randv((size_t)(m * n), rng);
        std::vector<double> rs((size_t)m), rp((size_t)m), cs((size_t)n), cp((size_t)n);
        K::serial::row_sum(m, n, M.data(), rs.data());
        K::par::row_sum(m, n, M.data(), rp.data());
        check_equal(rs, rp);
        K::serial::col_sum(m, n, M.data(), cs.data());
        K::par::col_sum(m, n, M.data(), cp.data());
        check_equal(cs, cp);
    }

    SUBCASE("im2col / col2im") {
        K::Conv2dDims d;
        d.n = 3;
        d.h = 9;
        d.w = 7;
        d.c = 4;
        d.kh = d.kw = 3;
        d.stride = 2;
        d.pad = 1;
        d.oh = K::conv_out(d.h, 3, 2, 1);
        d.ow = K::conv_out(d.w, 3, 2, 1);
        auto X = randv((size_t)(d.n * d.h * d.w * d.c), rng);
        const size_t cols = (size_t)(d.n * d.oh * d.ow * d.kh * d.kw * d.c);
        std::vector<double> Ys(cols), Yp(cols);
        K::serial::im2col(d, X.data(), Ys.data());
        K::par::im2col(d, X.data(), Yp.data());
        check_equal(Ys, Yp);
        auto G = randv(cols, rng);
        std::vector<double> Zs(X.size()), Zp(X.size());
        K::serial::col2im(d, G.data(), Zs.data());
        K::par::col2im(d, G.data(), Zp.data());
        check_equal(Zs, Zp);
    }

    SUBCASE("volume render forward and vjp") {
        const int64_t rays = 33, s = 17;
        auto sigma = randv((size_t)(rays * s), rng, 0.0, 3.0);
        auto rgb = randv((size_t)(rays * s * 3), rng, 0.0, 1.0);
        auto delta = randv((size_t)(rays * s), rng, 0.01, 0.2);
        double bg[3] = {0.2, 0.3, 0.4};
        std::vector<double> cs((size_t)rays * 3), cp((size_t)rays * 3);
        K::serial::volume_render_fwd(rays, s, sigma.data(), rgb.data(), delta.data(), bg,
                                     cs.data());
        K::par::volume_render_fwd(rays, s, sigma.data(), rgb.data(), delta.data(), bg,
                                  cp.data());
        check_equal(cs, cp);
        auto g = randv((size_t)rays * 3, rng);
        std::vector<double> ds1(sigma.size()), ds2(sigma.size()), dr1(rgb.size()),
            dr2(rgb.size());
        K::serial::volume_render_vjp(rays, s, sigma.data(), rgb.data(), delta.data(), bg,
                                     g.data(), ds1.data(), dr1.data());
        K::par::volume_render_vjp(rays, s, sigma.data(), rgb.data(), delta.data(), bg, g.data(),
                                  ds2.data(), dr2.data());
        check_equal(ds1, ds2);
        check_equal(dr1, dr2);
    }

    SUBCASE("upsample / downsum") {
        auto X = randv((size_t)(2 * 6 * 6 * 3), rng);
        std::vector<double> Us((size_t)(2 * 12 * 12 * 3)), Up(Us.size());
        K::serial::upsample2(2, 6, 6, 3, X.data(), Us.data());
        K::par::upsample2(2, 6, 6, 3, X.data(), Up.data());
        check_equal(Us, Up);
        std::vector<double> Ds(X.size()), Dp(X.size());
        K::serial::downsum2(2, 6, 6, 3, Us.data(), Ds.data());
        K::par::downsum2(2, 6, 6, 3, Us.data(), Dp.data());
        check_equal(Ds, Dp);
    }
}

TEST_CASE("col2im is the exact adjoint of im2col") {
    // <im2col(x), g> == <x, col2im(g)> for random x, g
    Rng rng(77);
    K::Conv2dDims d;
    d.n = 2;
    d.h = 6;
    d.w = 5;
    d.c = 3;
    d.kh = d.kw = 3;
    d.stride = 2;
    d.pad = 1;
    d.oh = K::conv_out(d.h, 3, 2, 1);
    d.ow = K::conv_out(d.w, 3, 2, 1);
    auto x = randv((size_t)(d.n * d.h * d.w * d.c), rng);
    const size_t cols = (size_t)(d.n * d.oh * d.ow * d.kh * d.kw * d.c);
    auto g = randv(cols, rng);
    std::vector<double> y(cols), xt(x.size());
    K::serial::im2col(d, x.data(), y.data());
    K::serial::col2im(d, g.data(), xt.data());
    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
    for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * xt[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("blocked sum is exact on integers and stable on large arrays") {
    std::vector<double> v(10000, 1.0);
    CHECK(K::serial::sum_blocked((int64_t)v.size(), v.data()) == 10000.0);
    CHECK(K::par::sum_blocked((int64_t)v.size(), v.data()) == 10000.0);
}
