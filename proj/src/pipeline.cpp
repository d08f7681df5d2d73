#include "aunerf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "aunerf/checkpoint.hpp"
#include "aunerf/nets.hpp"

namespace aunerf {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string frame_name(int frame) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "f_%05d.png", frame);
    return buf;
}

void check_finite(double v, const char* what, uint64_t iter) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string("non-finite ") + what + " at iteration " +
                                 std::to_string(iter) + "; aborting");
}

struct CsvLog {
    std::ofstream f;
    CsvLog(const std::string& path, const std::string& header, bool append) {
        const bool exists = fs::exists(path);
        f.open(path, append ? std::ios::app : std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open loss log '" + path + "'");
        if (!append || !exists) f << header << "\n";
    }
    void row(const std::vector<double>& vals, uint64_t iter) {
        f << iter;
        for (double v : vals) f << "," << fmt(v);
        f << "\n";
        f.flush();
    }
};

uint64_t stage_seed(uint64_t seed, Stage s) {
    return mix64(seed, 0x53544147u + (uint64_t)s);
}

}  // namespace

// ---------------------------------------------------------------------------
// NeRF graphs (training batch and render chunks share the field parameters)

namespace {

struct NerfBatchGraph {
    Graph g;
    NodeId loss = -1, colors = -1;
    int rays = 0, samples = 0;
    FieldConfig fcfg;

    NerfBatchGraph(const FieldConfig& cfg, int r, int s, uint64_t seed, bool with_loss)
        : rays(r), samples(s), fcfg(cfg) {
        const int64_t pts = (int64_t)r * s;
        NodeId x = g.input("x_enc", {pts, cfg.trunk_in_dim()});
        NodeId d = g.input("d_enc", {pts, cfg.dir_enc_dim()});
        NodeId delta = g.input("delta", {r, s});
        NodeId bg = g.input("bg", {3});
        FieldHeads heads = build_field(g, cfg, x, d, "nerf", seed);
        NodeId sigma = g.reshape(heads.sigma, {r, s});
        colors = g.volume_render(sigma, heads.rgb, delta, bg);
        if (with_loss) {
            NodeId target = g.input("target", {r, 3});
            NodeId diff = g.sub(colors, target);
            // photometric error averaged over the ray batch
            loss = g.affine(g.sum_all(g.mul(diff, diff)), 1.0 / r, 0.0);
        }
    }
};

}  // namespace

// ---------------------------------------------------------------------------

struct Pipeline::Models {
    std::optional<DisentangleModel> disent;
    std::optional<FusionModel> fusion;
    std::optional<NerfBatchGraph> render_graph;
    std::vector<ConditionPair> conditions;
    bool conditions_ready = false;
};

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
    fs::create_directories(cfg_.out);
    if (fs::exists(fs::path(cfg_.dataset) / "manifest.json")) {
        man_ = load_dataset(cfg_.dataset);
        frame_cache_.resize(man_->frames.size());
    }
    models_ = std::make_shared<Models>();
}

void Pipeline::require_dataset() {
    if (!man_)
        throw std::runtime_error("no dataset at '" + cfg_.dataset +
                                 "' (run gen-data first)");
}

void Pipeline::generate_data() {
    SynthConfig scfg;
    scfg.frames = cfg_.data_frames;
    scfg.width = cfg_.data_width;
    scfg.height = cfg_.data_height;
    scfg.identities = cfg_.data_identities;
    scfg.crop_size = cfg_.data_crop;
    scfg.n_landmarks = cfg_.data_landmarks;
    scfg.noise_amp = cfg_.data_noise_amp;
    scfg.walk_step = cfg_.data_walk_step;
    man_ = generate_dataset(scfg, cfg_.seed, cfg_.dataset);
    frame_cache_.assign(man_->frames.size(), std::nullopt);
}

const Image& Pipeline::frame_image(int index) {
    require_dataset();
    auto& slot = frame_cache_.at((size_t)index);
    if (!slot) slot = man_->load_frame((size_t)index);
    return *slot;
}

Image Pipeline::frame_crop(int index) {
    const FrameRecord& rec = man_->frames.at((size_t)index);
    return crop_image(frame_image(index), rec.crop);
}

std::vector<int> Pipeline::train_frame_indices() const {
    const int per_id = (int)man_->frames.size() /
                       std::max(1, (int)man_->identities.size());
    int train_per_id = cfg_.train_frames > 0 ? cfg_.train_frames : per_id - 8;
    train_per_id = std::clamp(train_per_id, 1, per_id);
    std::vector<int> out;
    for (size_t i = 0; i < man_->frames.size(); ++i)
        if ((int)i % per_id < train_per_id) out.push_back((int)i);
    return out;
}

std::vector<int> Pipeline::heldout_frame_indices() const {
    auto train = train_frame_indices();
    std::vector<char> is_train(man_->frames.size(), 0);
    for (int i : train) is_train[(size_t)i] = 1;
    std::vector<int> out;
    for (size_t i = 0; i < man_->frames.size(); ++i)
        if (!is_train[i]) out.push_back((int)i);
    return out;
}

std::string Pipeline::ckpt_path(Stage s) const {
    return cfg_.out + "/" + stage_name(s) + ".ckpt";
}

std::string Pipeline::render_dir() const { return cfg_.out + "/render"; }

std::string Pipeline::frame_png(int frame) const {
    return render_dir() + "/" + frame_name(frame);
}

void Pipeline::train(Stage stage) {
    require_dataset();
    switch (stage) {
        case Stage::Disentangle: train_disentangle(); break;
        case Stage::Fusion: train_fusion(); break;
        case Stage::Nerf: train_nerf(); break;
    }
    models_ = std::make_shared<Models>();  // drop stale models
}

// ---------------------------------------------------------------------------

namespace {

DisentangleConfig make_dcfg(const RunConfig& cfg, const DatasetManifest& man) {
    DisentangleConfig d;
    d.crop = man.crop_size;
    d.n_au = man.n_au;
    d.batch = cfg.batch;
    d.lr = cfg.lr_disentangle;
    d.critic_steps = cfg.critic_steps;
    d.lambda_gp = cfg.lambda_gp;
    return d;
}

FusionConfig make_fcfg(const RunConfig& cfg, const DatasetManifest& man) {
    FusionConfig f;
    f.crop = man.crop_size;
    f.frame_h = man.height;
    f.frame_w = man.width;
    f.n_au = man.n_au;
    f.audio_dim = man.audio_dim;
    f.batch = cfg.batch;
    f.lr = cfg.lr_fusion;
    f.use_au_loss = cfg.au_loss;
    f.bypass_mask = !cfg.disentangle;
    return f;
}

Checkpoint require_ckpt(const std::string& path, Stage stage) {
    if (!fs::exists(path))
        throw std::runtime_error("missing prerequisite checkpoint for stage '" +
                                 stage_name(stage) + "': " + path + " (train that stage first)");
    return load_checkpoint(path);
}

}  // namespace

void Pipeline::train_disentangle() {
    const DisentangleConfig dcfg = make_dcfg(cfg_, *man_);
    DisentangleTrainer trainer(dcfg, cfg_.seed);
    Rng rng(stage_seed(cfg_.seed, Stage::Disentangle));
    uint64_t start = 0;

    std::vector<std::string> all_params = trainer.generator_params();
    for (const auto& n : trainer.classifier_params()) all_params.push_back(n);

    if (!cfg_.resume.empty()) {
        Checkpoint ck = load_checkpoint(cfg_.resume);
        if (ck.stage != "disentangle")
            throw std::runtime_error("resume checkpoint is for stage '" + ck.stage + "'");
        load_params(trainer.generator_graph(), ck, all_params);
        load_params(trainer.critic_graph(), ck, trainer.critic_params());
        trainer.sync_critic_into_generator();
        load_adam(ck, "gen", trainer.generator_adam());
        load_adam(ck, "cls", trainer.classifier_adam());
        load_adam(ck, "critic", trainer.critic_adam());
        rng.set_state(ck.rng_state);
        start = ck.iteration;
    }

    auto train_ids = train_frame_indices();
    auto sampler = [&](std::vector<Image>& crops, std::vector<AUCode>& aus) {
        for (int b = 0; b < cfg_.batch; ++b) {
            const int idx = train_ids[(size_t)rng.index((int64_t)train_ids.size())];
            crops.push_back(frame_crop(idx));
            aus.push_back(man_->frames[(size_t)idx].au);
        }
    };

    CsvLog log(cfg_.out + "/disentangle_loss.csv",
               "iteration,speech,cycle,adv,cls,critic,penalty", start > 0);
    auto snapshot = [&](uint64_t iter, const std::string& path) {
        Checkpoint ck;
        ck.stage = "disentangle";
        ck.iteration = iter;
        ck.rng_state = rng.state();
        pack_params(ck, trainer.generator_graph(), all_params);
        pack_params(ck, trainer.critic_graph(), trainer.critic_params());
        pack_adam(ck, "gen", trainer.generator_adam());
        pack_adam(ck, "cls", trainer.classifier_adam());
        pack_adam(ck, "critic", trainer.critic_adam());
        save_checkpoint(path, ck);
    };

    for (uint64_t iter = start; iter < (uint64_t)cfg_.iters_disentangle; ++iter) {
        auto losses = trainer.step(sampler, rng);
        check_finite(losses.speech + losses.cycle + losses.adv + losses.cls + losses.critic,
                     "disentangle loss", iter + 1);
        log.row({losses.speech, losses.cycle, losses.adv, losses.cls, losses.critic,
                 losses.penalty},
                iter + 1);
        if (cfg_.checkpoint_interval > 0 && (iter + 1) % (uint64_t)cfg_.checkpoint_interval == 0)
            snapshot(iter + 1, cfg_.out + "/disentangle_" + std::to_string(iter + 1) + ".ckpt");
    }
    snapshot((uint64_t)cfg_.iters_disentangle, ckpt_path(Stage::Disentangle));
}

// ---------------------------------------------------------------------------

void Pipeline::train_fusion() {
    const FusionConfig fcfg = make_fcfg(cfg_, *man_);
    const DisentangleConfig dcfg = make_dcfg(cfg_, *man_);

    std::optional<DisentangleModel> dmodel;
    Checkpoint dck;
    if (!fcfg.bypass_mask) {
        dck = require_ckpt(ckpt_path(Stage::Disentangle), Stage::Fusion);
        dmodel.emplace(dcfg, cfg_.seed);
        load_params(dmodel->graph(), dck, dmodel->graph().param_names());
    }

    // per-frame preprocessing under the frozen mask generator
    auto train_ids = train_frame_indices();
    std::vector<Image> audio_faces(man_->frames.size()), identity_faces(man_->frames.size());
    std::vector<std::vector<int>> labels(man_->frames.size());
    std::vector<std::vector<int>> train_labels;
    for (int idx : train_ids) {
        const FrameRecord& rec = man_->frames[(size_t)idx];
        Image crop = frame_crop(idx);
        if (fcfg.bypass_mask) {
            audio_faces[(size_t)idx] = crop;
            identity_faces[(size_t)idx] = frame_image(idx);
        } else {
            Image a = dmodel->mask(crop, rec.au);
            FacePair pair = split_faces(a, crop, frame_image(idx), rec.crop);
            audio_faces[(size_t)idx] = std::move(pair.audio_face);
            identity_faces[(size_t)idx] = std::move(pair.identity_face);
        }
        labels[(size_t)idx] = rec.au.labels();
        train_labels.push_back(labels[(size_t)idx]);
    }
    AUWeights weights = au_weights(occurrence_rates(train_labels, man_->n_au));

    FusionTrainer trainer(fcfg, weights, cfg_.seed);
    if (!fcfg.bypass_mask) {
        std::vector<std::string> cls_names;
        for (const auto& n : trainer.graph().param_names())
            if (n.rfind("cls.", 0) == 0) cls_names.push_back(n);
        load_params(trainer.graph(), dck, cls_names);
    }

    Rng rng(stage_seed(cfg_.seed, Stage::Fusion));
    uint64_t start = 0;
    if (!cfg_.resume.empty()) {
        Checkpoint ck = load_checkpoint(cfg_.resume);
        if (ck.stage != "fusion")
            throw std::runtime_error("resume checkpoint is for stage '" + ck.stage + "'");
        load_params(trainer.graph(), ck, trainer.trained_params());
        load_adam(ck, "fusion", trainer.adam());
        rng.set_state(ck.rng_state);
        start = ck.iteration;
    }

    // frames grouped per identity so reference/target pairs stay in-identity
    const int per_id = (int)man_->frames.size() / std::max(1, (int)man_->identities.size());
    std::vector<std::vector<int>> by_identity((size_t)man_->identities.size());
    for (int idx : train_ids) by_identity[(size_t)(idx / per_id)].push_back(idx);

    CsvLog log(cfg_.out + "/fusion_loss.csv", "iteration,rec,au,probe,id_rec,total", start > 0);
    auto snapshot = [&](uint64_t iter, const std::string& path) {
        Checkpoint ck;
        ck.stage = "fusion";
        ck.iteration = iter;
        ck.rng_state = rng.state();
        pack_params(ck, trainer.graph(), trainer.trained_params());
        pack_adam(ck, "fusion", trainer.adam());
        save_checkpoint(path, ck);
    };

    for (uint64_t iter = start; iter < (uint64_t)cfg_.iters_fusion; ++iter) {
        FusionTrainer::Batch batch;
        for (int b = 0; b < cfg_.batch; ++b) {
            const int tgt = train_ids[(size_t)rng.index((int64_t)train_ids.size())];
            const auto& group = by_identity[(size_t)(tgt / per_id)];
            const int ref = group[(size_t)rng.index((int64_t)group.size())];
            batch.audio_face_ref.push_back(audio_faces[(size_t)ref]);
            batch.identity_face.push_back(identity_faces[(size_t)ref]);
            batch.audio_face_target.push_back(audio_faces[(size_t)tgt]);
            batch.f_a.push_back(man_->frames[(size_t)tgt].audio);
            batch.labels.push_back(labels[(size_t)tgt]);
        }
        auto losses = trainer.step(batch);
        double total = losses.rec + losses.probe + losses.id_rec +
                       (fcfg.use_au_loss && !fcfg.bypass_mask ? losses.au : 0.0);
        check_finite(total, "fusion loss", iter + 1);
        log.row({losses.rec, losses.au, losses.probe, losses.id_rec, total}, iter + 1);
        if (cfg_.checkpoint_interval > 0 && (iter + 1) % (uint64_t)cfg_.checkpoint_interval == 0)
            snapshot(iter + 1, cfg_.out + "/fusion_" + std::to_string(iter + 1) + ".ckpt");
    }
    snapshot((uint64_t)cfg_.iters_fusion, ckpt_path(Stage::Fusion));
}

// ---------------------------------------------------------------------------

Pipeline::Models& Pipeline::models() {
    require_dataset();
    Models& m = *models_;
    if (!m.disent && cfg_.disentangle) {
        Checkpoint dck = require_ckpt(ckpt_path(Stage::Disentangle), Stage::Nerf);
        m.disent.emplace(make_dcfg(cfg_, *man_), cfg_.seed);
        load_params(m.disent->graph(), dck, m.disent->graph().param_names());
    }
    if (!m.fusion) {
        Checkpoint fck = require_ckpt(ckpt_path(Stage::Fusion), Stage::Nerf);
        m.fusion.emplace(make_fcfg(cfg_, *man_), cfg_.seed);
        std::vector<std::string> names;
        for (const auto& n : m.fusion->graph().param_names())
            if (n.rfind("cls.", 0) != 0) names.push_back(n);
        load_params(m.fusion->graph(), fck, names);
    }
    return m;
}

std::vector<ConditionPair> Pipeline::compute_conditions() {
    Models& m = models();
    if (m.conditions_ready) return m.conditions;
    const FusionConfig fcfg = make_fcfg(cfg_, *man_);
    const int per_id = (int)man_->frames.size() / std::max(1, (int)man_->identities.size());

    // one reference frame per identity supplies the identity condition and
    // the reference mouth appearance; audio drives the per-frame variation
    std::vector<std::vector<double>> f_id_per_identity(man_->identities.size());
    std::vector<Image> ref_audio_face(man_->identities.size());
    for (size_t idn = 0; idn < man_->identities.size(); ++idn) {
        const int ref = (int)idn * per_id + std::clamp(cfg_.reference_frame, 0, per_id - 1);
        const FrameRecord& rec = man_->frames[(size_t)ref];
        Image crop = frame_crop(ref);
        Image identity_face;
        if (cfg_.disentangle) {
            Image a = m.disent->mask(crop, rec.au);
            FacePair pair = split_faces(a, crop, frame_image(ref), rec.crop);
            ref_audio_face[idn] = std::move(pair.audio_face);
            identity_face = std::move(pair.identity_face);
        } else {
            ref_audio_face[idn] = crop;
            identity_face = frame_image(ref);
        }
        f_id_per_identity[idn] = m.fusion->identity_feature(identity_face);
    }

    m.conditions.resize(man_->frames.size());
    for (size_t i = 0; i < man_->frames.size(); ++i) {
        const size_t idn = (size_t)((int)i / per_id);
        ConditionPair c;
        c.f_id = f_id_per_identity[idn];
        if (cfg_.disentangle) {
            c.f_aud = m.fusion->fused_feature(ref_audio_face[idn], man_->frames[i].audio);
        } else {
            // raw audio feature, zero-padded to the condition width
            c.f_aud.assign((size_t)fcfg.feat_dim, 0.0);
            for (size_t j = 0; j < man_->frames[i].audio.size() && j < c.f_aud.size(); ++j)
                c.f_aud[j] = man_->frames[i].audio[j];
        }
        m.conditions[i] = std::move(c);
    }
    m.conditions_ready = true;
    return m.conditions;
}

namespace {

// Fills one ray's worth of encoded inputs.
void fill_ray(const FieldConfig& fcfg, const Ray& ray, const SampleBatch& samples,
              const ConditionPair& cond, int64_t ray_index, int64_t n_samples, Tensor& x_enc,
              Tensor& d_enc, Tensor& delta) {
    std::vector<double> denc((size_t)fcfg.dir_enc_dim());
    double dd[3] = {ray.dir.x, ray.dir.y, ray.dir.z};
    positional_encode(dd, fcfg.dir_freqs, denc.data());
    const int64_t in_dim = fcfg.trunk_in_dim();
    for (int64_t s = 0; s < n_samples; ++s) {
        const int64_t row = ray_index * n_samples + s;
        double* xrow = x_enc.data.data() + row * in_dim;
        const Vec3& p = samples.positions[(size_t)s];
        double pp[3] = {p.x, p.y, p.z};
        positional_encode(pp, fcfg.pos_freqs, xrow);
        std::copy(cond.f_id.begin(), cond.f_id.end(), xrow + fcfg.pos_enc_dim());
        std::copy(cond.f_aud.begin(), cond.f_aud.end(),
                  xrow + fcfg.pos_enc_dim() + fcfg.id_dim);
        std::copy(denc.begin(), denc.end(),
                  d_enc.data.begin() + row * fcfg.dir_enc_dim());
        const double next =
            s + 1 < n_samples ? samples.depths[(size_t)s + 1] : ray.tfar;
        delta.data[(size_t)(ray_index * n_samples + s)] = next - samples.depths[(size_t)s];
    }
}

}  // namespace

void Pipeline::train_nerf() {
    // prerequisites: fusion always; disentangle only when the module is on
    if (cfg_.disentangle) require_ckpt(ckpt_path(Stage::Disentangle), Stage::Nerf);
    require_ckpt(ckpt_path(Stage::Fusion), Stage::Nerf);
    auto conditions = compute_conditions();

    FieldConfig fcfg;
    const int R = cfg_.rays, S = cfg_.samples;
    NerfBatchGraph net(fcfg, R, S, cfg_.seed, /*with_loss=*/true);
    Adam adam(cfg_.lr_nerf, 0.9, 0.999);
    Rng rng(stage_seed(cfg_.seed, Stage::Nerf));
    uint64_t start = 0;
    if (!cfg_.resume.empty()) {
        Checkpoint ck = load_checkpoint(cfg_.resume);
        if (ck.stage != "nerf")
            throw std::runtime_error("resume checkpoint is for stage '" + ck.stage + "'");
        load_params(net.g, ck, net.g.param_names());
        load_adam(ck, "nerf", adam);
        rng.set_state(ck.rng_state);
        start = ck.iteration;
    }

    auto train_ids = train_frame_indices();
    Tensor bg({3}, {man_->background[0], man_->background[1], man_->background[2]});

    CsvLog log(cfg_.out + "/nerf_loss.csv", "iteration,loss", start > 0);
    auto snapshot = [&](uint64_t iter, const std::string& path) {
        Checkpoint ck;
        ck.stage = "nerf";
        ck.iteration = iter;
        ck.rng_state = rng.state();
        pack_params(ck, net.g, net.g.param_names());
        pack_adam(ck, "nerf", adam);
        save_checkpoint(path, ck);
    };

    Tensor x_enc({(int64_t)R * S, fcfg.trunk_in_dim()});
    Tensor d_enc({(int64_t)R * S, fcfg.dir_enc_dim()});
    Tensor delta({R, S});
    Tensor target({R, 3});
    for (uint64_t iter = start; iter < (uint64_t)cfg_.iters_nerf; ++iter) {
        for (int j = 0; j < R; ++j) {
            const int fidx = train_ids[(size_t)rng.index((int64_t)train_ids.size())];
            const FrameRecord& rec = man_->frames[(size_t)fidx];
            const int px = (int)rng.index(man_->width);
            const int py = (int)rng.index(man_->height);
            Ray ray = pixel_ray(rec.camera, px, py);
            Rng stream = Rng::from_stream(cfg_.seed, iter + 1, ((uint64_t)j << 32) | 0x545246u);
            SampleBatch samples = stratified_sample(ray, S, stream);
            fill_ray(fcfg, ray, samples, conditions[(size_t)fidx], j, S, x_enc, d_enc, delta);
            const Image& img = frame_image(fidx);
            for (int ch = 0; ch < 3; ++ch) target.at(j, ch) = img.at(py, px, ch);
        }
        Bindings b;
        b.emplace("x_enc", x_enc);
        b.emplace("d_enc", d_enc);
        b.emplace("delta", delta);
        b.emplace("target", target);
        b.emplace("bg", bg);
        std::vector<Tensor> lv_out;
        auto grads = net.g.gradient(net.loss, b, net.g.param_names(), {net.loss}, &lv_out);
        adam.step(net.g, grads);
        const double lv = lv_out[0].data[0];
        check_finite(lv, "nerf loss", iter + 1);
        log.row({lv}, iter + 1);
        if (cfg_.checkpoint_interval > 0 && (iter + 1) % (uint64_t)cfg_.checkpoint_interval == 0)
            snapshot(iter + 1, cfg_.out + "/nerf_" + std::to_string(iter + 1) + ".ckpt");
    }
    snapshot((uint64_t)cfg_.iters_nerf, ckpt_path(Stage::Nerf));
}

// ---------------------------------------------------------------------------

Image Pipeline::render_frame(int frame, const ConditionPair& cond) {
    Models& m = models();
    FieldConfig fcfg;
    constexpr int kChunk = 256;
    const int S = cfg_.samples_eval;
    if (!m.render_graph || m.render_graph->samples != S) {
        m.render_graph.emplace(fcfg, kChunk, S, cfg_.seed, /*with_loss=*/false);
        Checkpoint nck = require_ckpt(ckpt_path(Stage::Nerf), Stage::Nerf);
        load_params(m.render_graph->g, nck, m.render_graph->g.param_names());
    }
    NerfBatchGraph& net = *m.render_graph;

    const FrameRecord& rec = man_->frames.at((size_t)frame);
    const int W = man_->width, H = man_->height;
    Image out(H, W, 3);
    Tensor bg({3}, {man_->background[0], man_->background[1], man_->background[2]});
    Tensor x_enc({(int64_t)kChunk * S, fcfg.trunk_in_dim()});
    Tensor d_enc({(int64_t)kChunk * S, fcfg.dir_enc_dim()});
    Tensor delta({kChunk, S});

    const int total = W * H;
    for (int base = 0; base < total; base += kChunk) {
        const int count = std::min(kChunk, total - base);
        for (int j = 0; j < kChunk; ++j) {
            const int pix = base + (j < count ? j : count - 1);  // pad with the last pixel
            const int px = pix % W, py = pix / W;
            Ray ray = pixel_ray(rec.camera, px, py);
            Rng stream = Rng::from_stream(cfg_.seed, (uint64_t)frame, (uint64_t)pix);
            SampleBatch samples = stratified_sample(ray, S, stream);
            fill_ray(fcfg, ray, samples, cond, j, S, x_enc, d_enc, delta);
        }
        Bindings b;
        b.emplace("x_enc", x_enc);
        b.emplace("d_enc", d_enc);
        b.emplace("delta", delta);
        b.emplace("bg", bg);
        Tensor colors = net.g.evaluate(net.colors, b);
        for (int j = 0; j < count; ++j) {
            const int pix = base + j;
            for (int ch = 0; ch < 3; ++ch)
                out.at(pix / W, pix % W, ch) = colors.at(j, ch);
        }
    }
    return out;
}

void Pipeline::render_range(int begin, int end) {
    require_dataset();
    if (begin < 0 || end > (int)man_->frames.size() || begin > end)
        throw std::runtime_error("render: frame range [" + std::to_string(begin) + "," +
                                 std::to_string(end) + ") outside dataset");
    fs::create_directories(render_dir());
    auto conditions = compute_conditions();
    for (int f = begin; f < end; ++f) {
        Image img = render_frame(f, conditions[(size_t)f]);
        write_png(frame_png(f), img);
    }
}

// ---------------------------------------------------------------------------

MetricReport Pipeline::evaluate_range(const std::string& rendered_dir, int begin, int end,
                                      const std::string& judge_dir) {
    require_dataset();
    const std::string jdir = judge_dir.empty() ? cfg_.out : judge_dir;
    DisentangleConfig dcfg = make_dcfg(cfg_, *man_);
    DisentangleModel judge(dcfg, cfg_.seed);
    {
        Checkpoint dck = require_ckpt(jdir + "/disentangle.ckpt", Stage::Disentangle);
        load_params(judge.graph(), dck, judge.graph().param_names());
    }

    std::ofstream csv(cfg_.out + "/eval.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write eval.csv");
    csv << "frame,psnr,ssim,lmd,au_acc\n";

    const int k = man_->n_landmarks - lip_subset_start();
    std::vector<int> ring_subset((size_t)k);
    for (int i = 0; i < k; ++i) ring_subset[(size_t)i] = i;

    MetricReport report;
    for (int f = begin; f < end; ++f) {
        const std::string path = rendered_dir + "/" + frame_name(f);
        if (!fs::exists(path))
            throw std::runtime_error("evaluate: missing rendered frame " + path);
        Image render = read_png(path);
        const Image& gt = frame_image(f);
        if (render.h != gt.h || render.w != gt.w)
            throw std::runtime_error("evaluate: rendered frame size mismatch at " + path);
        const FrameRecord& rec = man_->frames[(size_t)f];
        const IdentityParams& ident = man_->identities[(size_t)rec.identity];

        const double p = psnr(render, gt);
        const double s = ssim(render, gt);

        auto ring_of = [&](const Image& img) {
            MouthEstimate est =
                estimate_mouth_ring(img, rec.crop, ident, man_->background, man_->n_landmarks);
            if (!est.found) {
                Pixel center{rec.crop.x + rec.crop.w / 2.0, rec.crop.y + rec.crop.h / 2.0};
                est.ring.assign((size_t)k, center);
            }
            return est.ring;
        };
        const double ld = lmd(ring_of(render), ring_of(gt), ring_subset);

        Image rcrop = crop_image(render, rec.crop);
        Image gcrop = crop_image(gt, rec.crop);
        auto pred = judge.classify(rcrop);
        auto ref = judge.classify(gcrop);
        std::vector<int> ref_labels((size_t)man_->n_au);
        for (size_t i = 0; i < ref.size(); ++i) ref_labels[i] = ref[i] >= 0.5 ? 1 : 0;
        const double acc = au_acc(pred, ref_labels);

        csv << f << "," << fmt(p) << "," << fmt(s) << "," << fmt(ld) << "," << fmt(acc) << "\n";
        report.psnr += p;
        report.ssim += s;
        report.lmd += ld;
        report.au_acc += acc;
        ++report.frames;
    }
    if (report.frames == 0) throw std::runtime_error("evaluate: empty frame range");
    report.psnr /= report.frames;
    report.ssim /= report.frames;
    report.lmd /= report.frames;
    report.au_acc /= report.frames;
    csv << "mean," << fmt(report.psnr) << "," << fmt(report.ssim) << "," << fmt(report.lmd)
        << "," << fmt(report.au_acc) << "\n";
    return report;
}

}  // namespace aunerf
