#pragma once

#include "aunerf/disentangle.hpp"
#include "aunerf/graph.hpp"
#include "aunerf/image.hpp"
#include "aunerf/optim.hpp"
#include "aunerf/synth.hpp"

namespace aunerf {

struct AUWeights {
    std::vector<double> w;  // positive, sums to n_AU
    std::vector<double> r;  // occurrence probabilities in (0,1]
};

// w_i = (n_AU / r_i) / sum_j (1 / r_j); throws unless every r_i is in (0,1].
AUWeights au_weights(const std::vector<double>& r);

// Occurrence rates of binarized labels over a label set, floored at 0.01.
std::vector<double> occurrence_rates(const std::vector<std::vector<int>>& labels, int n_au);

// Weighted BCE + weighted Dice of Eq.-style multi-label losses; predictions
// in [0,1], targets binary. Throws on length mismatch or out-of-range x_hat.
double au_loss(const std::vector<double>& x_hat, const std::vector<int>& x, const AUWeights& w,
               double eps = 1e-6);
double au_bce(const std::vector<double>& x_hat, const std::vector<int>& x, const AUWeights& w);
double au_dice(const std::vector<double>& x_hat, const std::vector<int>& x, const AUWeights& w,
               double eps = 1e-6);

double reconstruction_loss(const Image& a, const Image& b);  // mean absolute

// Graph node: batch-mean weighted BCE+Dice over (B, n_au) predictions and
// binary targets; weights enter as a constant row.
NodeId build_au_loss(Graph& g, NodeId pred, NodeId target, const AUWeights& w, double eps = 1e-6);

struct FusionConfig {
    int crop = 16;
    int frame_h = 32, frame_w = 32;  // identity-face resolution (divisible by 8)
    int n_au = 8;
    int audio_dim = 16;
    int feat_dim = 32;
    int batch = 8;
    double leaky = 0.2;
    double dice_eps = 1e-6;
    double lr = 5e-4, beta1 = 0.9, beta2 = 0.999;
    bool use_au_loss = true;   // ablation switch
    bool bypass_mask = false;  // train identity path only (no disentanglement)
};

// Forward builders with shared prefixes (ea, dec, ef, eid, did, probe).
NodeId build_audio_encoder(Graph& g, const FusionConfig& cfg, NodeId img, uint64_t seed);
NodeId build_fusion_decoder(Graph& g, const FusionConfig& cfg, NodeId f_aud, NodeId f_a,
                            uint64_t seed);
NodeId build_feature_encoder(Graph& g, const FusionConfig& cfg, NodeId img, uint64_t seed);
NodeId build_identity_encoder(Graph& g, const FusionConfig& cfg, NodeId frame, uint64_t seed);
NodeId build_identity_decoder(Graph& g, const FusionConfig& cfg, NodeId f_id, uint64_t seed);

// Batch-1 forward surface over trained parameters.
class FusionModel {
public:
    FusionModel(const FusionConfig& cfg, uint64_t init_seed);

    std::vector<double> encode_audio_face(const Image& audio_face) const;           // E_a
    Image fuse_decode(const std::vector<double>& f_aud,
                      const std::vector<double>& f_a) const;                        // D
    std::vector<double> feature_encode(const Image& fused) const;                   // E_f
    std::vector<double> identity_feature(const Image& identity_face) const;         // E_id
    // Chained E_f(D(E_a(audio_face), f_a)) in one pass.
    std::vector<double> fused_feature(const Image& audio_face,
                                      const std::vector<double>& f_a) const;

    Graph& graph() { return graph_; }
    const FusionConfig& config() const { return cfg_; }

private:
    FusionConfig cfg_;
    Graph graph_;
    NodeId f_aud_, fused_img_, f_hat_, f_id_, f_hat_chain_;
};

// The target-frame Audio-face used as the fusion target: crops the frame,
// runs the frozen mask generator, and keeps (1-A) * crop.
Image fusion_target(const Image& target_frame, const DisentangleModel& masks, const AUCode& au,
                    const CropRect& rect);

// Supervised fusion training: reconstructs the target frame's Audio-face from
// a reference Audio-face plus the target audio feature, with the frozen
// classifier providing AU supervision. The identity encoder trains as an
// autoencoder alongside.
class FusionTrainer {
public:
    FusionTrainer(const FusionConfig& cfg, const AUWeights& weights, uint64_t init_seed);

    struct Batch {
        std::vector<Image> audio_face_ref;   // reference-frame audio faces
        std::vector<std::vector<double>> f_a;  // target-frame audio features
        std::vector<Image> audio_face_target;
        std::vector<std::vector<int>> labels;  // target-frame binary AU labels
        std::vector<Image> identity_face;      // reference identity faces
    };
    struct StepLosses {
        double rec = 0, au = 0, probe = 0, id_rec = 0;
    };
    StepLosses step(const Batch& batch);

    Graph& graph() { return graph_; }
    const std::vector<std::string>& trained_params() const { return trained_params_; }
    Adam& adam() { return adam_; }
    const FusionConfig& config() const { return cfg_; }

private:
    FusionConfig cfg_;
    AUWeights weights_;
    Graph graph_;
    NodeId loss_, rec_, au_, probe_, idrec_;
    std::vector<std::string> trained_params_;
    Adam adam_;
};

}  // namespace aunerf
