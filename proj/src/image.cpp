#include "aunerf/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace aunerf {

Image crop_image(const Image& src, const CropRect& r) {
    if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0 || r.x + r.w > src.w || r.y + r.h > src.h)
        throw std::invalid_argument("crop rectangle out of image bounds");
    Image out(r.h, r.w, src.c);
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x)
            for (int ch = 0; ch < src.c; ++ch) out.at(y, x, ch) = src.at(r.y + y, r.x + x, ch);
    out.crop_rect = r;
    return out;
}

void paste_image(Image& dst, const Image& patch, const CropRect& r) {
    if (patch.h != r.h || patch.w != r.w || patch.c != dst.c)
        throw std::invalid_argument("paste: patch does not match rectangle");
    if (r.x < 0 || r.y < 0 || r.x + r.w > dst.w || r.y + r.h > dst.h)
        throw std::invalid_argument("paste: rectangle out of image bounds");
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x)
            for (int ch = 0; ch < dst.c; ++ch) dst.at(r.y + y, r.x + x, ch) = patch.at(y, x, ch);
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({1, img.h, img.w, img.c});
    t.data = img.data;
    return t;
}

Image tensor_to_image(const Tensor& t) {
    if (t.rank() != 4 || t.shape[0] != 1)
        throw std::invalid_argument("tensor_to_image expects (1,H,W,C), got " +
                                    shape_str(t.shape));
    Image img((int)t.shape[1], (int)t.shape[2], (int)t.shape[3]);
    img.data = t.data;
    return img;
}

static inline unsigned char to_byte(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return (unsigned char)std::lround(v * 255.0);
}

Image quantize8(const Image& img) {
    Image out = img;
    for (auto& v : out.data) v = (double)to_byte(v) / 255.0;
    return out;
}

double mse(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w || a.c != b.c)
        throw std::invalid_argument("mse: image shapes differ");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / (double)a.data.size();
}

// --------------------------------------------------------------------------
// Minimal 8-bit PNG codec (color type 2 = RGB, 0 = gray), zlib-backed.

namespace {

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back((unsigned char)(v >> 24));
    out.push_back((unsigned char)(v >> 16));
    out.push_back((unsigned char)(v >> 8));
    out.push_back((unsigned char)v);
}

uint32_t get_u32(const unsigned char* p) {
    return ((uint32_t)p[0] << 24) | ((uint32_t)p[1] << 16) | ((uint32_t)p[2] << 8) | p[3];
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& data) {
    put_u32(out, (uint32_t)data.size());
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + start, (uInt)(out.size() - start));
    put_u32(out, crc);
}

const unsigned char kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.c != 1 && img.c != 3)
        throw std::invalid_argument("write_png supports 1 or 3 channels");
    const int bpp = img.c;
    const size_t stride = (size_t)img.w * bpp;
    std::vector<unsigned char> raw((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        unsigned char* row = raw.data() + (size_t)y * (stride + 1);
        row[0] = 0;  // filter: none
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < bpp; ++ch) row[1 + x * bpp + ch] = to_byte(img.at(y, x, ch));
    }
    uLongf bound = compressBound((uLong)raw.size());
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), (uLong)raw.size(), 6) != Z_OK)
        throw std::runtime_error("png: zlib compression failed");
    compressed.resize(bound);

    std::vector<unsigned char> out(kSig, kSig + 8);
    std::vector<unsigned char> ihdr;
    put_u32(ihdr, (uint32_t)img.w);
    put_u32(ihdr, (uint32_t)img.h);
    ihdr.push_back(8);                                 // bit depth
    ihdr.push_back(img.c == 3 ? 2 : 0);                // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", compressed);
    put_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("png: cannot open '" + path + "' for writing");
    f.write((const char*)out.data(), (std::streamsize)out.size());
    if (!f) throw std::runtime_error("png: write failed for '" + path + "'");
}

Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open '" + path + "'");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kSig, 8) != 0)
        throw std::runtime_error("png: bad signature in '" + path + "'");

    size_t pos = 8;
    uint32_t w = 0, h = 0;
    int channels = 0;
    std::vector<unsigned char> idat;
    while (pos + 8 <= buf.size()) {
        uint32_t len = get_u32(buf.data() + pos);
        if (pos + 12 + len > buf.size()) throw std::runtime_error("png: truncated chunk");
        const char* type = (const char*)buf.data() + pos + 4;
        const unsigned char* data = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = get_u32(data);
            h = get_u32(data + 4);
            if (data[8] != 8) throw std::runtime_error("png: only 8-bit supported");
            if (data[9] == 2)
                channels = 3;
            else if (data[9] == 0)
                channels = 1;
            else
                throw std::runtime_error("png: unsupported color type");
            if (data[12] != 0) throw std::runtime_error("png: interlacing unsupported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!w || !h || !channels) throw std::runtime_error("png: missing IHDR");

    const size_t stride = (size_t)w * channels;
    std::vector<unsigned char> raw((stride + 1) * h);
    uLongf rawlen = (uLongf)raw.size();
    if (uncompress(raw.data(), &rawlen, idat.data(), (uLong)idat.size()) != Z_OK ||
        rawlen != raw.size())
        throw std::runtime_error("png: zlib decompression failed");

    Image img((int)h, (int)w, channels);
    std::vector<unsigned char> prev(stride, 0);
    std::vector<unsigned char> cur(stride);
    for (uint32_t y = 0; y < h; ++y) {
        const unsigned char* row = raw.data() + (size_t)y * (stride + 1);
        const int filter = row[0];
        const unsigned char* src = row + 1;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= (size_t)channels ? cur[i - channels] : 0;
            const int b = prev[i];
            const int c = i >= (size_t)channels ? prev[i - channels] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::runtime_error("png: bad filter byte");
            }
            cur[i] = (unsigned char)(v & 0xff);
        }
        for (size_t i = 0; i < stride; ++i) img.data[(size_t)y * stride + i] = cur[i] / 255.0;
        std::swap(prev, cur);
    }
    return img;
}

}  // namespace aunerf
