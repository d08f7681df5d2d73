#include "aunerf/config.hpp"

#include <fstream>
#include <stdexcept>

namespace aunerf {

Stage stage_from_string(const std::string& s) {
    if (s == "disentangle") return Stage::Disentangle;
    if (s == "fusion") return Stage::Fusion;
    if (s == "nerf") return Stage::Nerf;
    throw std::invalid_argument("unknown stage '" + s + "' (want disentangle|fusion|nerf)");
}

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::Disentangle: return "disentangle";
        case Stage::Fusion: return "fusion";
        case Stage::Nerf: return "nerf";
    }
    return "?";
}

namespace {

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (...) {
        throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (...) {
        throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (...) {
        throw std::invalid_argument("config: bad unsigned integer for '" + key + "': " + v);
    }
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "dataset") cfg.dataset = value;
    else if (key == "out") cfg.out = value;
    else if (key == "resume") cfg.resume = value;
    else if (key == "seed") cfg.seed = to_u64(key, value);
    else if (key == "data_frames") cfg.data_frames = to_int(key, value);
    else if (key == "data_width") cfg.data_width = to_int(key, value);
    else if (key == "data_height") cfg.data_height = to_int(key, value);
    else if (key == "data_identities") cfg.data_identities = to_int(key, value);
    else if (key == "data_crop") cfg.data_crop = to_int(key, value);
    else if (key == "data_landmarks") cfg.data_landmarks = to_int(key, value);
    else if (key == "data_noise_amp") cfg.data_noise_amp = to_double(key, value);
    else if (key == "data_walk_step") cfg.data_walk_step = to_double(key, value);
    else if (key == "iters_disentangle") cfg.iters_disentangle = to_int(key, value);
    else if (key == "iters_fusion") cfg.iters_fusion = to_int(key, value);
    else if (key == "iters_nerf") cfg.iters_nerf = to_int(key, value);
    else if (key == "batch") cfg.batch = to_int(key, value);
    else if (key == "lr_disentangle") cfg.lr_disentangle = to_double(key, value);
    else if (key == "lr_fusion") cfg.lr_fusion = to_double(key, value);
    else if (key == "lr_nerf") cfg.lr_nerf = to_double(key, value);
    else if (key == "critic_steps") cfg.critic_steps = to_int(key, value);
    else if (key == "lambda_gp") cfg.lambda_gp = to_double(key, value);
    else if (key == "rays") cfg.rays = to_int(key, value);
    else if (key == "samples") cfg.samples = to_int(key, value);
    else if (key == "samples_eval") cfg.samples_eval = to_int(key, value);
    else if (key == "checkpoint_interval") cfg.checkpoint_interval = to_int(key, value);
    else if (key == "train_frames") cfg.train_frames = to_int(key, value);
    else if (key == "reference_frame") cfg.reference_frame = to_int(key, value);
    else if (key == "au_loss") cfg.au_loss = to_bool(key, value);
    else if (key == "disentangle") cfg.disentangle = to_bool(key, value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");

    if (key.rfind("iters_", 0) == 0 && to_int(key, value) < 0)
        throw std::invalid_argument("config: iteration counts must be >= 0");
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file '" + path + "'");
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        apply_config_entry(cfg, key, value);
    }
    return cfg;
}

}  // namespace aunerf
