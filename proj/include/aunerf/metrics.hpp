#pragma once

#include <vector>

#include "aunerf/camera.hpp"
#include "aunerf/image.hpp"

namespace aunerf {

struct MetricReport {
    double psnr = 0;    // dB
    double ssim = 0;
    double lmd = 0;     // pixels
    double au_acc = 0;  // fraction
    int frames = 0;
};

// 10 log10(peak^2 / MSE); identical images return the 99 dB cap.
double psnr(const Image& a, const Image& b, double peak = 1.0);
constexpr double kPsnrCap = 99.0;

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// dynamic range 1, averaged over valid window positions and channels.
double ssim(const Image& a, const Image& b);

// Mean Euclidean distance over the landmark subset (no alignment).
double lmd(const std::vector<Pixel>& pred, const std::vector<Pixel>& truth,
           const std::vector<int>& subset);

// Fraction of (frame, AU) pairs whose binarized prediction matches.
double au_acc(const std::vector<double>& pred, const std::vector<int>& truth,
              double threshold = 0.5);

}  // namespace aunerf
