#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aunerf/tensor.hpp"

namespace aunerf {

struct CropRect {
    int x = 0, y = 0, w = 0, h = 0;
};

// H x W x C intensities in [0,1], row-major. Face crops carry the rectangle
// they were cut from.
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> data;
    std::optional<CropRect> crop_rect;

    Image() = default;
    Image(int hh, int ww, int cc) : h(hh), w(ww), c(cc), data((size_t)hh * ww * cc, 0.0) {}

    double& at(int y, int x, int ch) { return data[((size_t)y * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return data[((size_t)y * w + x) * c + ch]; }
    size_t numel() const { return data.size(); }
};

Image crop_image(const Image& src, const CropRect& r);
// Writes a crop (or same-size image) back over the rectangle region.
void paste_image(Image& dst, const Image& patch, const CropRect& r);

// NHWC tensor with leading batch dim 1.
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

// Quantizes to 8-bit exactly as the PNG writer does: round(clamp(v)*255)/255.
Image quantize8(const Image& img);

// 8-bit PNG I/O (RGB or grayscale), deterministic output bytes.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

double mse(const Image& a, const Image& b);

}  // namespace aunerf
