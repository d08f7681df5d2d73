#pragma once

#include <cstdint>
#include <string>

namespace aunerf {

enum class Stage { Disentangle, Fusion, Nerf };

Stage stage_from_string(const std::string& s);
std::string stage_name(Stage s);

// Flat key = value run configuration; unknown keys are rejected.
struct RunConfig {
    std::string dataset = "data";
    std::string out = "out";
    std::string resume;
    uint64_t seed = 1;

    // dataset generation
    int data_frames = 48;
    int data_width = 32, data_height = 32;
    int data_identities = 1;
    int data_crop = 16;
    int data_landmarks = 20;
    double data_noise_amp = 0.02;
    double data_walk_step = 0.15;

    // training
    int iters_disentangle = 400;
    int iters_fusion = 500;
    int iters_nerf = 2000;
    int batch = 8;
    double lr_disentangle = 1e-4;
    double lr_fusion = 5e-4;
    double lr_nerf = 5e-4;
    int critic_steps = 5;
    double lambda_gp = 10.0;
    int rays = 256;
    int samples = 24;
    int samples_eval = 64;
    int checkpoint_interval = 500;
    int train_frames = -1;  // -1: all but the last 8 per identity
    int reference_frame = 0;
    bool au_loss = true;       // --no-au-loss clears
    bool disentangle = true;   // --no-disentangle clears
};

RunConfig parse_config_file(const std::string& path);
// Applies one "key = value" pair; throws on unknown key or bad value.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace aunerf
