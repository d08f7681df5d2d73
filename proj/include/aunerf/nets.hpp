#pragma once

#include <string>

#include "aunerf/graph.hpp"
#include "aunerf/rng.hpp"

// Graph-building helpers shared by every network in the project. Parameters
// are created on first use and reused by name afterwards, and their init is
// seeded from (seed, name) so the same net built in two graphs starts from
// identical weights.

namespace aunerf {

inline uint64_t name_hash(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline NodeId named_param(Graph& g, const std::string& name, Shape shape, int64_t fan_in,
                          uint64_t seed, bool zero_init = false) {
    if (g.has_leaf(name)) {
        NodeId id = g.leaf_id(name);
        if (g.node(id).shape != shape)
            throw GraphError("parameter '" + name + "' reused with a different shape");
        return id;
    }
    Tensor init(shape);
    if (!zero_init) {
        Rng rng = Rng::from_stream(seed, name_hash(name), 0);
        const double scale = std::sqrt(2.0 / (double)fan_in);
        for (auto& v : init.data) v = rng.normal() * scale;
    }
    return g.param(name, std::move(init));
}

// y = x W + b with parameters <prefix>.w / <prefix>.b.
inline NodeId linear(Graph& g, NodeId x, int64_t out_dim, const std::string& prefix,
                     uint64_t seed) {
    const Shape& s = g.node(x).shape;
    if (s.size() != 2) throw GraphError("linear: expected (batch, features) at " + prefix);
    const int64_t in_dim = s[1];
    NodeId w = named_param(g, prefix + ".w", {in_dim, out_dim}, in_dim, seed);
    NodeId b = named_param(g, prefix + ".b", {out_dim}, in_dim, seed, /*zero_init=*/true);
    return g.add_row_bias(g.matmul(x, w), b);
}

// NHWC convolution as im2col + matmul; returns (N, OH, OW, out_ch).
inline NodeId conv2d(Graph& g, NodeId x, int64_t out_ch, int64_t k, int64_t stride, int64_t pad,
                     const std::string& prefix, uint64_t seed) {
    const Shape& s = g.node(x).shape;
    if (s.size() != 4) throw GraphError("conv2d: expected NHWC at " + prefix);
    const int64_t n = s[0], h = s[1], w = s[2], c = s[3];
    const int64_t oh = kernels::conv_out(h, k, stride, pad);
    const int64_t ow = kernels::conv_out(w, k, stride, pad);
    NodeId cols = g.im2col(x, k, k, stride, pad);
    NodeId wt = named_param(g, prefix + ".w", {k * k * c, out_ch}, k * k * c, seed);
    NodeId bt = named_param(g, prefix + ".b", {out_ch}, k * k * c, seed, /*zero_init=*/true);
    NodeId y = g.add_row_bias(g.matmul(cols, wt), bt);
    return g.reshape(y, {n, oh, ow, out_ch});
}

inline NodeId flatten(Graph& g, NodeId x) {
    const Shape& s = g.node(x).shape;
    if (s.size() != 4) throw GraphError("flatten: expected NHWC");
    return g.reshape(x, {s[0], s[1] * s[2] * s[3]});
}

// Broadcasts a per-sample channel vector (B, C) to feature planes
// (B, H, W, C) through a constant 0/1 matmul, keeping gradients flowing.
inline NodeId tile_channels(Graph& g, NodeId vec, int64_t h, int64_t w) {
    const Shape& s = g.node(vec).shape;
    if (s.size() != 2) throw GraphError("tile_channels: expected (batch, channels)");
    const int64_t b = s[0], c = s[1];
    Tensor k({c, h * w * c});
    for (int64_t p = 0; p < h * w; ++p)
        for (int64_t ch = 0; ch < c; ++ch) k.data[(size_t)(ch * h * w * c + p * c + ch)] = 1.0;
    NodeId kk = g.constant(std::move(k));
    return g.reshape(g.matmul(vec, kk), {b, h, w, c});
}

// Broadcasts a 1-channel plane to C channels: (B,H,W,1) -> (B,H,W,C).
inline NodeId tile_plane(Graph& g, NodeId plane, int64_t channels) {
    const Shape& s = g.node(plane).shape;
    if (s.size() != 4 || s[3] != 1) throw GraphError("tile_plane: expected (B,H,W,1)");
    NodeId flat = g.reshape(plane, {s[0] * s[1] * s[2], 1});
    NodeId ones = g.constant(Tensor::full({1, channels}, 1.0));
    return g.reshape(g.matmul(flat, ones), {s[0], s[1], s[2], channels});
}

}  // namespace aunerf
