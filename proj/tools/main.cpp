#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "aunerf/pipeline.hpp"

using namespace aunerf;

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    std::string dataset;
    std::string resume;
    uint64_t seed = 0;
    bool has_seed = false;
    bool no_au_loss = false;
    bool no_disentangle = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "run configuration file (key = value lines)");
    cmd->add_option("--seed", args.seed, "override the run seed")
        ->each([&](const std::string&) { args.has_seed = true; });
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--dataset", args.dataset, "dataset directory");
    cmd->add_option("--resume", args.resume, "checkpoint to resume from");
    cmd->add_flag("--no-au-loss", args.no_au_loss, "disable the AU loss (ablation)");
    cmd->add_flag("--no-disentangle", args.no_disentangle,
                  "disable attention disentanglement (ablation)");
}

RunConfig build_config(const CommonArgs& args) {
    RunConfig cfg = args.config.empty() ? RunConfig{} : parse_config_file(args.config);
    if (args.has_seed) cfg.seed = args.seed;
    if (!args.out.empty()) cfg.out = args.out;
    if (!args.dataset.empty()) cfg.dataset = args.dataset;
    if (!args.resume.empty()) cfg.resume = args.resume;
    if (args.no_au_loss) cfg.au_loss = false;
    if (args.no_disentangle) cfg.disentangle = false;
    return cfg;
}

std::pair<int, int> parse_range(const std::string& range, int frames, int fallback_begin,
                                int fallback_end) {
    if (range.empty()) return {fallback_begin, fallback_end};
    const size_t colon = range.find(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("range must be 'begin:end', got '" + range + "'");
    int begin = std::stoi(range.substr(0, colon));
    int end = std::stoi(range.substr(colon + 1));
    if (begin < 0 || end > frames || begin >= end)
        throw std::invalid_argument("range [" + std::to_string(begin) + "," +
                                    std::to_string(end) + ") outside 0.." +
                                    std::to_string(frames));
    return {begin, end};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"action-unit conditioned radiance field pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string stage_str;
    std::string range_str;
    std::string rendered_dir;
    std::string judge_dir;

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_common(gen, args);

    CLI::App* train = app.add_subcommand("train", "train one stage");
    add_common(train, args);
    train->add_option("--stage", stage_str, "disentangle | fusion | nerf")->required();

    CLI::App* render = app.add_subcommand("render", "render frames through the full pipeline");
    add_common(render, args);
    render->add_option("--range", range_str, "frame range begin:end (default: held-out frames)");

    CLI::App* eval = app.add_subcommand("eval", "evaluate rendered frames against ground truth");
    add_common(eval, args);
    eval->add_option("--range", range_str, "frame range begin:end (default: held-out frames)");
    eval->add_option("--rendered", rendered_dir, "directory of rendered frames");
    eval->add_option("--judge", judge_dir,
                     "output dir whose classifier judges AU accuracy (default: --out)");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = build_config(args);
        Pipeline pipe(cfg);
        if (gen->parsed()) {
            pipe.generate_data();
            std::printf("dataset: %s (%zu frames)\n", cfg.dataset.c_str(),
                        pipe.manifest().frames.size());
        } else if (train->parsed()) {
            pipe.train(stage_from_string(stage_str));
            std::printf("checkpoint: %s\n", pipe.ckpt_path(stage_from_string(stage_str)).c_str());
        } else if (render->parsed()) {
            auto held = pipe.heldout_frame_indices();
            const int fb = held.empty() ? 0 : held.front();
            const int fe = held.empty() ? (int)pipe.manifest().frames.size() : held.back() + 1;
            auto [begin, end] = parse_range(range_str, (int)pipe.manifest().frames.size(), fb, fe);
            pipe.render_range(begin, end);
            std::printf("rendered frames %d..%d into %s\n", begin, end - 1,
                        pipe.render_dir().c_str());
        } else if (eval->parsed()) {
            auto held = pipe.heldout_frame_indices();
            const int fb = held.empty() ? 0 : held.front();
            const int fe = held.empty() ? (int)pipe.manifest().frames.size() : held.back() + 1;
            auto [begin, end] = parse_range(range_str, (int)pipe.manifest().frames.size(), fb, fe);
            const std::string rdir = rendered_dir.empty() ? pipe.render_dir() : rendered_dir;
            MetricReport rep = pipe.evaluate_range(rdir, begin, end, judge_dir);
            std::printf("frames=%d psnr=%.3f ssim=%.4f lmd=%.3f au_acc=%.3f\n", rep.frames,
                        rep.psnr, rep.ssim, rep.lmd, rep.au_acc);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
