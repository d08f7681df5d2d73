#include "aunerf/nerf.hpp"

#include <cmath>

#include "aunerf/nets.hpp"

namespace aunerf {

void positional_encode(const double v[3], int freqs, double* out) {
    constexpr double pi = 3.14159265358979323846;
    for (int c = 0; c < 3; ++c) {
        double scaled = pi * v[c];
        for (int k = 0; k < freqs; ++k) {
            out[c * 2 * freqs + 2 * k] = std::sin(scaled);
            out[c * 2 * freqs + 2 * k + 1] = std::cos(scaled);
            scaled *= 2.0;
        }
    }
}

std::vector<double> positional_encode(const Vec3& v, int freqs) {
    std::vector<double> out((size_t)(6 * freqs));
    double p[3] = {v.x, v.y, v.z};
    positional_encode(p, freqs, out.data());
    return out;
}

FieldHeads build_field(Graph& g, const FieldConfig& cfg, NodeId x_enc, NodeId d_enc,
                       const std::string& prefix, uint64_t seed) {
    NodeId h = x_enc;
    for (int i = 0; i < cfg.trunk_layers; ++i)
        h = g.relu(linear(g, h, cfg.trunk_width, prefix + ".trunk" + std::to_string(i), seed));
    FieldHeads heads;
    heads.sigma = g.softplus(linear(g, h, 1, prefix + ".density", seed));
    NodeId color_in = g.concat_cols(h, d_enc);
    NodeId ch = g.relu(linear(g, color_in, cfg.trunk_width, prefix + ".color0", seed));
    heads.rgb = g.sigmoid(linear(g, ch, 3, prefix + ".color1", seed));
    return heads;
}

FieldEvaluator::FieldEvaluator(const FieldConfig& cfg, uint64_t seed) : cfg_(cfg) {
    NodeId x = graph_.input("x_enc", {1, cfg_.trunk_in_dim()});
    NodeId d = graph_.input("d_enc", {1, cfg_.dir_enc_dim()});
    heads_ = build_field(graph_, cfg_, x, d, "nerf", seed);
}

FieldEvaluator::Output FieldEvaluator::eval(const Vec3& pos, const Vec3& dir,
                                            std::span<const double> f_id,
                                            std::span<const double> f_aud) const {
    if ((int64_t)f_id.size() != cfg_.id_dim || (int64_t)f_aud.size() != cfg_.aud_dim)
        throw GraphError("field_eval: condition dims (" + std::to_string(f_id.size()) + "," +
                         std::to_string(f_aud.size()) + ") do not match the field");
    Tensor xenc({1, cfg_.trunk_in_dim()});
    double p[3] = {pos.x, pos.y, pos.z};
    positional_encode(p, cfg_.pos_freqs, xenc.data.data());
    std::copy(f_id.begin(), f_id.end(), xenc.data.begin() + cfg_.pos_enc_dim());
    std::copy(f_aud.begin(), f_aud.end(), xenc.data.begin() + cfg_.pos_enc_dim() + cfg_.id_dim);
    Tensor denc({1, cfg_.dir_enc_dim()});
    double d[3] = {dir.x, dir.y, dir.z};
    positional_encode(d, cfg_.dir_freqs, denc.data.data());

    Bindings b{{"x_enc", std::move(xenc)}, {"d_enc", std::move(denc)}};
    auto vals = graph_.evaluate_many({heads_.rgb, heads_.sigma}, b);
    Output out;
    out.color = {vals[0].data[0], vals[0].data[1], vals[0].data[2]};
    out.sigma = vals[1].data[0];
    return out;
}

static void check_depths(std::span<const double> depths, double tfar) {
    for (size_t i = 0; i + 1 < depths.size(); ++i)
        if (!(depths[i] < depths[i + 1]))
            throw std::invalid_argument("volume_render: depths must be strictly increasing");
    if (!depths.empty() && !(depths.back() <= tfar))
        throw std::invalid_argument("volume_render: last depth exceeds tfar");
}

std::array<double, 3> volume_render(std::span<const double> depths, double tfar,
                                    std::span<const double> sigma,
                                    std::span<const double> colors,
                                    const std::array<double, 3>& background) {
    check_depths(depths, tfar);
    if (sigma.size() != depths.size() || colors.size() != 3 * depths.size())
        throw std::invalid_argument("volume_render: size mismatch");
    const int64_t n = (int64_t)depths.size();
    double T = 1.0;
    std::array<double, 3> out{0, 0, 0};
    for (int64_t i = 0; i < n; ++i) {
        const double delta = (i + 1 < n ? depths[(size_t)i + 1] : tfar) - depths[(size_t)i];
        const double alpha = 1.0 - std::exp(-sigma[(size_t)i] * delta);
        const double w = T * alpha;
        for (int c = 0; c < 3; ++c) out[(size_t)c] += w * colors[(size_t)(3 * i + c)];
        T *= 1.0 - alpha;
    }
    for (int c = 0; c < 3; ++c) out[(size_t)c] += T * background[(size_t)c];
    return out;
}

RenderWeights render_weights(std::span<const double> depths, double tfar,
                             std::span<const double> sigma) {
    check_depths(depths, tfar);
    const int64_t n = (int64_t)depths.size();
    RenderWeights rw;
    rw.weights.resize((size_t)n);
    double T = 1.0;
    for (int64_t i = 0; i < n; ++i) {
        const double delta = (i + 1 < n ? depths[(size_t)i + 1] : tfar) - depths[(size_t)i];
        const double alpha = 1.0 - std::exp(-sigma[(size_t)i] * delta);
        rw.weights[(size_t)i] = T * alpha;
        T *= 1.0 - alpha;
    }
    rw.residual = T;
    return rw;
}

double photometric_loss(const Tensor& rendered, const Tensor& truth) {
    if (rendered.shape != truth.shape || rendered.rank() != 2 || rendered.shape[1] != 3)
        throw std::invalid_argument("photometric_loss: expected matching (rays, 3) inputs");
    double acc = 0.0;
    for (size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - truth.data[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace aunerf
