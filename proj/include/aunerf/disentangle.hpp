#pragma once

#include <functional>

#include "aunerf/graph.hpp"
#include "aunerf/image.hpp"
#include "aunerf/optim.hpp"
#include "aunerf/synth.hpp"

namespace aunerf {

struct DisentangleConfig {
    int crop = 16;  // crop resolution (square, divisible by 4)
    int n_au = 8;
    int batch = 8;
    double leaky = 0.2;
    double lambda_gp = 10.0;
    double cycle_weight = 3.0;
    double adv_weight = 0.1;
    double speech_weight = 3.0;
    // weak pull of the mask toward one (keep the original wherever the
    // warped content is not needed); the speech term digs the mouth region
    // out against it
    double mask_prior_weight = 0.3;
    // anchors the warp branch: G_W under the original code must repaint the
    // crop itself, so the painter learns without the (1-A) gate
    double warp_recon_weight = 3.0;
    // generator updates start after the classifier has seen this many steps
    int cls_warmup = 50;
    double lr = 1e-4, beta1 = 0.5, beta2 = 0.9;
    int critic_steps = 5;
};

// Forward builders; parameters are created under fixed prefixes (gm, gw, cls,
// wd) and shared across calls and graphs.
NodeId build_mask_generator(Graph& g, const DisentangleConfig& cfg, NodeId crop, NodeId au,
                            uint64_t seed);  // (B,H,W,1) sigmoid
NodeId build_warp_generator(Graph& g, const DisentangleConfig& cfg, NodeId crop, NodeId au,
                            uint64_t seed);  // (B,H,W,3) sigmoid
NodeId build_classifier(Graph& g, const DisentangleConfig& cfg, NodeId img,
                        uint64_t seed);  // (B,n_au) sigmoid
NodeId build_critic(Graph& g, const DisentangleConfig& cfg, NodeId img,
                    uint64_t seed);  // (B,1) unbounded
// A*crop + (1-A)*warp with the 1-channel mask broadcast over RGB.
NodeId build_composite(Graph& g, NodeId mask, NodeId crop, NodeId warp);

// Value-level operations.
Image composite(const Image& mask, const Image& crop, const Image& warp);
double speech_code_loss(const std::vector<double>& f_au_g, const std::vector<double>& f_au_t,
                        const std::vector<double>& f_au_c, const std::vector<double>& f_au_o);

struct FacePair {
    Image audio_face;     // (1-A) * crop
    Image identity_face;  // frame with the crop region replaced by A * crop
};
FacePair split_faces(const Image& mask, const Image& crop, const Image& id_frame,
                     const CropRect& rect);

// Batch-1 forward surface over trained parameters; used at fusion/render and
// evaluation time. Parameters load from checkpoints by name.
class DisentangleModel {
public:
    DisentangleModel(const DisentangleConfig& cfg, uint64_t init_seed);

    Image mask(const Image& crop, const AUCode& au) const;    // G_M
    Image warp(const Image& crop, const AUCode& au) const;    // G_W
    std::vector<double> classify(const Image& img) const;     // C
    double critic(const Image& img) const;                    // W_D

    Graph& graph() { return graph_; }
    const Graph& graph() const { return graph_; }
    const DisentangleConfig& config() const { return cfg_; }

private:
    Bindings crop_au_bindings(const Image& crop, const AUCode& au) const;
    DisentangleConfig cfg_;
    Graph graph_;
    NodeId mask_out_, warp_out_, cls_out_, critic_out_;
};

// Adversarial pre-training of the four nets. One step() = critic_steps
// critic updates, then one generator and one classifier update.
class DisentangleTrainer {
public:
    // sample(crops, aus): fills a batch of face crops with their AU codes.
    using BatchSampler = std::function<void(std::vector<Image>&, std::vector<AUCode>&)>;

    DisentangleTrainer(const DisentangleConfig& cfg, uint64_t init_seed);

    struct StepLosses {
        double speech = 0, cycle = 0, adv = 0, cls = 0, critic = 0, penalty = 0;
    };
    StepLosses step(const BatchSampler& sample, Rng& rng);

    // Critic loss and generator adversarial term for given batches; penalty
    // points are drawn per pair as u*real + (1-u)*fake.
    std::pair<double, double> wgan_gp_loss(const std::vector<Image>& fake,
                                           const std::vector<Image>& real, double lambda,
                                           Rng& rng) const;

    Graph& generator_graph() { return gen_graph_; }
    Graph& critic_graph() { return critic_graph_; }
    const std::vector<std::string>& generator_params() const { return gen_params_; }
    const std::vector<std::string>& classifier_params() const { return cls_params_; }
    const std::vector<std::string>& critic_params() const { return critic_params_; }
    Adam& generator_adam() { return gen_adam_; }
    Adam& classifier_adam() { return cls_adam_; }
    Adam& critic_adam() { return critic_adam_; }
    const DisentangleConfig& config() const { return cfg_; }
    // Pushes trained critic weights into the generator graph's frozen copy.
    void sync_critic_into_generator();

private:
    Bindings gen_bindings(const std::vector<Image>& crops, const std::vector<AUCode>& au_orig,
                          const std::vector<AUCode>& au_target) const;

    DisentangleConfig cfg_;
    Graph gen_graph_, critic_graph_;
    // generator-graph nodes
    NodeId gg_crop_, gg_au_t_, gg_au_o_, gg_ig_, gg_mask_;
    NodeId gg_speech_, gg_cycle_, gg_adv_, gg_cls_, gg_gen_loss_;
    // critic-graph nodes
    NodeId cg_real_, cg_fake_, cg_ihat_, cg_lambda_;
    NodeId cg_loss_, cg_penalty_, cg_gen_term_;
    std::vector<std::string> gen_params_, cls_params_, critic_params_;
    Adam gen_adam_, cls_adam_, critic_adam_;
};

Tensor images_to_batch(const std::vector<Image>& imgs);           // (B,H,W,C)
Tensor au_codes_to_batch(const std::vector<AUCode>& codes);       // (B,n_au)

}  // namespace aunerf
