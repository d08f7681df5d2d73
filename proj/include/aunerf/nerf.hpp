#pragma once

#include <array>
#include <span>

#include "aunerf/camera.hpp"
#include "aunerf/graph.hpp"
#include "aunerf/rng.hpp"

namespace aunerf {

struct FieldConfig {
    int pos_freqs = 6;
    int dir_freqs = 4;
    int trunk_layers = 4;
    int trunk_width = 64;
    int id_dim = 32;
    int aud_dim = 32;

    int64_t pos_enc_dim() const { return 6 * pos_freqs; }
    int64_t dir_enc_dim() const { return 6 * dir_freqs; }
    int64_t trunk_in_dim() const { return pos_enc_dim() + id_dim + aud_dim; }
};

// sin/cos ladder per coordinate: out[c*2L + 2k] = sin(2^k pi v_c),
// out[c*2L + 2k + 1] = cos(2^k pi v_c). Length 6L for a 3-vector.
void positional_encode(const double v[3], int freqs, double* out);
std::vector<double> positional_encode(const Vec3& v, int freqs);

struct FieldHeads {
    NodeId sigma;  // (B, 1), softplus
    NodeId rgb;    // (B, 3), sigmoid
};

// Radiance field MLP: trunk over [pos_enc | f_id | f_aud], density head off
// the trunk, color head over [trunk | dir_enc]. Creates parameters
// "<prefix>.*" in the graph.
FieldHeads build_field(Graph& g, const FieldConfig& cfg, NodeId x_enc, NodeId d_enc,
                       const std::string& prefix, uint64_t seed);

// Single-point field evaluation; owns a batch-1 graph.
class FieldEvaluator {
public:
    FieldEvaluator(const FieldConfig& cfg, uint64_t seed);

    struct Output {
        std::array<double, 3> color;
        double sigma;
    };
    // d must be unit-norm; cond = (f_id, f_aud).
    Output eval(const Vec3& pos, const Vec3& dir, std::span<const double> f_id,
                std::span<const double> f_aud) const;

    Graph& graph() { return graph_; }
    const FieldConfig& config() const { return cfg_; }

private:
    FieldConfig cfg_;
    Graph graph_;
    FieldHeads heads_;
};

// Discrete quadrature of the rendering integral. depths must be strictly
// increasing; the last segment runs to tfar. colors is N x 3 row-major.
std::array<double, 3> volume_render(std::span<const double> depths, double tfar,
                                    std::span<const double> sigma,
                                    std::span<const double> colors,
                                    const std::array<double, 3>& background);

// Per-sample weights T_i * alpha_i plus the residual transmittance; the
// weights and residual sum to one.
struct RenderWeights {
    std::vector<double> weights;
    double residual;
};
RenderWeights render_weights(std::span<const double> depths, double tfar,
                             std::span<const double> sigma);

// Sum over rays of squared L2 color error; both matrices are R x 3.
double photometric_loss(const Tensor& rendered, const Tensor& truth);

}  // namespace aunerf
