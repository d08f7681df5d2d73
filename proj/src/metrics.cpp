#include "aunerf/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace aunerf {

double psnr(const Image& a, const Image& b, double peak) {
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

namespace {

constexpr int kWin = 11;

std::vector<double> gaussian_taps() {
    std::vector<double> t((size_t)kWin);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        t[(size_t)i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += t[(size_t)i];
    }
    for (auto& v : t) v /= sum;
    return t;
}

// Separable valid-region Gaussian filter of one channel plane.
std::vector<double> blur_valid(const std::vector<double>& img, int h, int w,
                               const std::vector<double>& taps) {
    const int oh = h - kWin + 1, ow = w - kWin + 1;
    std::vector<double> rows((size_t)h * ow);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) acc += taps[(size_t)k] * img[(size_t)y * w + x + k];
            rows[(size_t)y * ow + x] = acc;
        }
    std::vector<double> out((size_t)oh * ow);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) acc += taps[(size_t)k] * rows[(size_t)(y + k) * ow + x];
            out[(size_t)y * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w || a.c != b.c)
        throw std::invalid_argument("ssim: image shapes differ");
    if (a.h < kWin || a.w < kWin)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // dynamic range 1
    const auto taps = gaussian_taps();
    const int oh = a.h - kWin + 1, ow = a.w - kWin + 1;

    double total = 0.0;
    for (int ch = 0; ch < a.c; ++ch) {
        std::vector<double> pa((size_t)a.h * a.w), pb((size_t)a.h * a.w), paa(pa.size()),
            pbb(pa.size()), pab(pa.size());
        for (int y = 0; y < a.h; ++y)
            for (int x = 0; x < a.w; ++x) {
                const double va = a.at(y, x, ch), vb = b.at(y, x, ch);
                const size_t i = (size_t)y * a.w + x;
                pa[i] = va;
                pb[i] = vb;
                paa[i] = va * va;
                pbb[i] = vb * vb;
                pab[i] = va * vb;
            }
        const auto mu_a = blur_valid(pa, a.h, a.w, taps);
        const auto mu_b = blur_valid(pb, a.h, a.w, taps);
        const auto m_aa = blur_valid(paa, a.h, a.w, taps);
        const auto m_bb = blur_valid(pbb, a.h, a.w, taps);
        const auto m_ab = blur_valid(pab, a.h, a.w, taps);
        double acc = 0.0;
        for (size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = m_aa[i] - ma * ma;
            const double vb = m_bb[i] - mb * mb;
            const double cov = m_ab[i] - ma * mb;
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / ((double)oh * ow);
    }
    return total / a.c;
}

double lmd(const std::vector<Pixel>& pred, const std::vector<Pixel>& truth,
           const std::vector<int>& subset) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("lmd: landmark count mismatch (" +
                                    std::to_string(pred.size()) + " vs " +
                                    std::to_string(truth.size()) + ")");
    if (subset.empty()) throw std::invalid_argument("lmd: empty landmark subset");
    double acc = 0.0;
    for (int idx : subset) {
        if (idx < 0 || (size_t)idx >= pred.size())
            throw std::invalid_argument("lmd: subset index out of range");
        const double du = pred[(size_t)idx].u - truth[(size_t)idx].u;
        const double dv = pred[(size_t)idx].v - truth[(size_t)idx].v;
        acc += std::sqrt(du * du + dv * dv);
    }
    return acc / (double)subset.size();
}

double au_acc(const std::vector<double>& pred, const std::vector<int>& truth, double threshold) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("au_acc: length mismatch");
    if (pred.empty()) throw std::invalid_argument("au_acc: empty input");
    int hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i] >= threshold ? 1 : 0;
        if (p == truth[i]) ++hits;
    }
    return (double)hits / (double)pred.size();
}

}  // namespace aunerf
