#include "aunerf/disentangle.hpp"

#include <cmath>

#include "aunerf/nets.hpp"

namespace aunerf {

namespace {

void check_crop_multiple(const DisentangleConfig& cfg) {
    if (cfg.crop < 8 || cfg.crop % 4 != 0)
        throw std::invalid_argument("crop resolution must be a multiple of 4, at least 8");
}

// shared encoder-decoder body of both generators
NodeId generator_body(Graph& g, const DisentangleConfig& cfg, NodeId crop, NodeId au,
                      const std::string& prefix, int64_t out_ch, uint64_t seed) {
    const Shape& s = g.node(crop).shape;
    const int64_t b = s[0], h = s[1], w = s[2];
    NodeId planes = tile_channels(g, au, h, w);
    NodeId x = g.concat_cols(g.reshape(crop, {b * h * w, 3}),
                             g.reshape(planes, {b * h * w, cfg.n_au}));
    x = g.reshape(x, {b, h, w, 3 + cfg.n_au});
    NodeId e1 = g.leaky_relu(conv2d(g, x, 16, 3, 1, 1, prefix + ".enc0", seed), cfg.leaky);
    NodeId e2 = g.leaky_relu(conv2d(g, e1, 24, 3, 2, 1, prefix + ".enc1", seed), cfg.leaky);
    NodeId e3 = g.leaky_relu(conv2d(g, e2, 32, 3, 2, 1, prefix + ".enc2", seed), cfg.leaky);
    NodeId d1 = g.leaky_relu(conv2d(g, g.upsample2(e3), 16, 3, 1, 1, prefix + ".dec0", seed),
                             cfg.leaky);
    NodeId d2 = g.leaky_relu(conv2d(g, g.upsample2(d1), 8, 3, 1, 1, prefix + ".dec1", seed),
                             cfg.leaky);
    return g.sigmoid(conv2d(g, d2, out_ch, 3, 1, 1, prefix + ".out", seed));
}

}  // namespace

NodeId build_mask_generator(Graph& g, const DisentangleConfig& cfg, NodeId crop, NodeId au,
                            uint64_t seed) {
    check_crop_multiple(cfg);
    NodeId out = generator_body(g, cfg, crop, au, "gm", 1, seed);
    // start the mask low so the warp branch receives gradient from step one
    g.param_value("gm.out.b").data[0] = -1.0;
    return out;
}

NodeId build_warp_generator(Graph& g, const DisentangleConfig& cfg, NodeId crop, NodeId au,
                            uint64_t seed) {
    check_crop_multiple(cfg);
    return generator_body(g, cfg, crop, au, "gw", 3, seed);
}

NodeId build_classifier(Graph& g, const DisentangleConfig& cfg, NodeId img, uint64_t seed) {
    NodeId e1 = g.leaky_relu(conv2d(g, img, 16, 3, 2, 1, "cls.enc0", seed), cfg.leaky);
    NodeId e2 = g.leaky_relu(conv2d(g, e1, 32, 3, 2, 1, "cls.enc1", seed), cfg.leaky);
    NodeId h = g.leaky_relu(linear(g, flatten(g, e2), 64, "cls.fc0", seed), cfg.leaky);
    return g.sigmoid(linear(g, h, cfg.n_au, "cls.fc1", seed));
}

NodeId build_critic(Graph& g, const DisentangleConfig& cfg, NodeId img, uint64_t seed) {
    NodeId e1 = g.leaky_relu(conv2d(g, img, 16, 3, 2, 1, "wd.enc0", seed), cfg.leaky);
    NodeId e2 = g.leaky_relu(conv2d(g, e1, 32, 3, 2, 1, "wd.enc1", seed), cfg.leaky);
    NodeId h = g.leaky_relu(linear(g, flatten(g, e2), 64, "wd.fc0", seed), cfg.leaky);
    return linear(g, h, 1, "wd.fc1", seed);
}

NodeId build_composite(Graph& g, NodeId mask, NodeId crop, NodeId warp) {
    NodeId a3 = tile_plane(g, mask, 3);
    NodeId keep = g.mul(a3, crop);
    NodeId inv = g.affine(a3, -1.0, 1.0);
    return g.add(keep, g.mul(inv, warp));
}

Image composite(const Image& mask, const Image& crop, const Image& warp) {
    if (mask.h != crop.h || mask.w != crop.w || mask.c != 1)
        throw std::invalid_argument("composite: mask must be 1-channel at crop resolution");
    if (crop.h != warp.h || crop.w != warp.w || crop.c != warp.c)
        throw std::invalid_argument("composite: crop/warp shape mismatch");
    Image out(crop.h, crop.w, crop.c);
    for (int y = 0; y < crop.h; ++y)
        for (int x = 0; x < crop.w; ++x) {
            const double a = mask.at(y, x, 0);
            for (int ch = 0; ch < crop.c; ++ch)
                out.at(y, x, ch) = a * crop.at(y, x, ch) + (1.0 - a) * warp.at(y, x, ch);
        }
    out.crop_rect = crop.crop_rect;
    return out;
}

double speech_code_loss(const std::vector<double>& f_au_g, const std::vector<double>& f_au_t,
                        const std::vector<double>& f_au_c, const std::vector<double>& f_au_o) {
    if (f_au_g.size() != f_au_t.size() || f_au_c.size() != f_au_o.size())
        throw std::invalid_argument("speech_code_loss: AU vector length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < f_au_g.size(); ++i) {
        const double d = f_au_g[i] - f_au_t[i];
        acc += d * d;
    }
    for (size_t i = 0; i < f_au_c.size(); ++i) {
        const double d = f_au_c[i] - f_au_o[i];
        acc += d * d;
    }
    return acc;
}

FacePair split_faces(const Image& mask, const Image& crop, const Image& id_frame,
                     const CropRect& rect) {
    if (mask.h != rect.h || mask.w != rect.w || mask.c != 1)
        throw std::invalid_argument("split_faces: mask must be 1-channel at crop size");
    if (crop.h != rect.h || crop.w != rect.w)
        throw std::invalid_argument("split_faces: crop does not match rectangle");
    if (rect.x < 0 || rect.y < 0 || rect.x + rect.w > id_frame.w || rect.y + rect.h > id_frame.h)
        throw std::invalid_argument("split_faces: rectangle out of frame bounds");
    FacePair out;
    out.audio_face = Image(rect.h, rect.w, crop.c);
    Image kept(rect.h, rect.w, crop.c);
    for (int y = 0; y < rect.h; ++y)
        for (int x = 0; x < rect.w; ++x) {
            const double a = mask.at(y, x, 0);
            for (int ch = 0; ch < crop.c; ++ch) {
                out.audio_face.at(y, x, ch) = (1.0 - a) * crop.at(y, x, ch);
                kept.at(y, x, ch) = a * crop.at(y, x, ch);
            }
        }
    out.audio_face.crop_rect = rect;
    out.identity_face = id_frame;
    paste_image(out.identity_face, kept, rect);
    return out;
}

Tensor images_to_batch(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw std::invalid_argument("empty image batch");
    const int h = imgs[0].h, w = imgs[0].w, c = imgs[0].c;
    Tensor t({(int64_t)imgs.size(), h, w, c});
    size_t off = 0;
    for (const auto& img : imgs) {
        if (img.h != h || img.w != w || img.c != c)
            throw std::invalid_argument("image batch with mixed shapes");
        std::copy(img.data.begin(), img.data.end(), t.data.begin() + (int64_t)off);
        off += img.data.size();
    }
    return t;
}

Tensor au_codes_to_batch(const std::vector<AUCode>& codes) {
    if (codes.empty()) throw std::invalid_argument("empty AU batch");
    const size_t n = codes[0].size();
    Tensor t({(int64_t)codes.size(), (int64_t)n});
    size_t off = 0;
    for (const auto& c : codes) {
        if (c.size() != n) throw std::invalid_argument("AU batch with mixed lengths");
        std::copy(c.values.begin(), c.values.end(), t.data.begin() + (int64_t)off);
        off += n;
    }
    return t;
}

// ---------------------------------------------------------------------------

DisentangleModel::DisentangleModel(const DisentangleConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
    const int64_t c = cfg.crop;
    NodeId crop = graph_.input("crop", {1, c, c, 3});
    NodeId au = graph_.input("au", {1, cfg.n_au});
    NodeId img = graph_.input("img", {1, c, c, 3});
    mask_out_ = build_mask_generator(graph_, cfg_, crop, au, init_seed);
    warp_out_ = build_warp_generator(graph_, cfg_, crop, au, init_seed);
    cls_out_ = build_classifier(graph_, cfg_, img, init_seed);
    critic_out_ = build_critic(graph_, cfg_, img, init_seed);
}

Bindings DisentangleModel::crop_au_bindings(const Image& crop, const AUCode& au) const {
    if (crop.h != cfg_.crop || crop.w != cfg_.crop || crop.c != 3)
        throw std::invalid_argument("disentangle: crop must be " + std::to_string(cfg_.crop) +
                                    "x" + std::to_string(cfg_.crop) + "x3");
    if ((int)au.size() != cfg_.n_au)
        throw std::invalid_argument("disentangle: AU code length mismatch");
    Bindings b;
    b.emplace("crop", images_to_batch({crop}));
    b.emplace("au", au_codes_to_batch({au}));
    return b;
}

Image DisentangleModel::mask(const Image& crop, const AUCode& au) const {
    Tensor t = graph_.evaluate(mask_out_, crop_au_bindings(crop, au));
    Image out(cfg_.crop, cfg_.crop, 1);
    out.data = t.data;
    out.crop_rect = crop.crop_rect;
    return out;
}

Image DisentangleModel::warp(const Image& crop, const AUCode& au) const {
    Tensor t = graph_.evaluate(warp_out_, crop_au_bindings(crop, au));
    Image out(cfg_.crop, cfg_.crop, 3);
    out.data = t.data;
    out.crop_rect = crop.crop_rect;
    return out;
}

std::vector<double> DisentangleModel::classify(const Image& img) const {
    if (img.h != cfg_.crop || img.w != cfg_.crop || img.c != 3)
        throw std::invalid_argument("classify: image must be at crop resolution");
    Bindings b;
    b.emplace("img", images_to_batch({img}));
    return graph_.evaluate(cls_out_, b).data;
}

double DisentangleModel::critic(const Image& img) const {
    if (img.h != cfg_.crop || img.w != cfg_.crop || img.c != 3)
        throw std::invalid_argument("critic: image must be at crop resolution");
    Bindings b;
    b.emplace("img", images_to_batch({img}));
    return graph_.evaluate(critic_out_, b).data[0];
}

// ---------------------------------------------------------------------------

DisentangleTrainer::DisentangleTrainer(const DisentangleConfig& cfg, uint64_t init_seed)
    : cfg_(cfg),
      gen_adam_(cfg.lr, cfg.beta1, cfg.beta2),
      cls_adam_(cfg.lr, cfg.beta1, cfg.beta2),
      critic_adam_(cfg.lr, cfg.beta1, cfg.beta2) {
    check_crop_multiple(cfg_);
    const int64_t b = cfg.batch, c = cfg.crop, n = cfg.n_au;

    // generator-side graph: G_M, G_W, composite, C, frozen W_D
    Graph& g = gen_graph_;
    gg_crop_ = g.input("crop", {b, c, c, 3});
    gg_au_t_ = g.input("au_target", {b, n});
    gg_au_o_ = g.input("au_orig", {b, n});
    gg_mask_ = build_mask_generator(g, cfg_, gg_crop_, gg_au_t_, init_seed);
    NodeId warp = build_warp_generator(g, cfg_, gg_crop_, gg_au_t_, init_seed);
    gg_ig_ = build_composite(g, gg_mask_, gg_crop_, warp);

    NodeId f_au_g = build_classifier(g, cfg_, gg_ig_, init_seed);
    NodeId diff_g = g.sub(f_au_g, gg_au_t_);
    gg_speech_ = g.affine(g.sum_all(g.mul(diff_g, diff_g)), 1.0 / (double)b, 0.0);

    NodeId f_au_c = build_classifier(g, cfg_, gg_crop_, init_seed);
    NodeId diff_c = g.sub(f_au_c, gg_au_o_);
    gg_cls_ = g.affine(g.sum_all(g.mul(diff_c, diff_c)), 1.0 / (double)b, 0.0);

    // cycle: push I_G back through both generators under the original code
    NodeId mask_g = build_mask_generator(g, cfg_, gg_ig_, gg_au_o_, init_seed);
    NodeId warp_g = build_warp_generator(g, cfg_, gg_ig_, gg_au_o_, init_seed);
    NodeId recon = build_composite(g, mask_g, gg_ig_, warp_g);
    gg_cycle_ = g.mean_all(g.abs(g.sub(recon, gg_crop_)));

    NodeId score_fake = build_critic(g, cfg_, gg_ig_, init_seed);
    gg_adv_ = g.affine(g.mean_all(score_fake), -1.0, 0.0);

    // mean(1 - A): zero when the mask keeps everything
    NodeId mask_prior = g.affine(g.mean_all(gg_mask_), -1.0, 1.0);
    NodeId warp_self = build_warp_generator(g, cfg_, gg_crop_, gg_au_o_, init_seed);
    NodeId warp_recon = g.mean_all(g.abs(g.sub(warp_self, gg_crop_)));
    gg_gen_loss_ = g.add(
        g.add(g.add(g.affine(gg_speech_, cfg.speech_weight, 0.0),
                    g.affine(warp_recon, cfg.warp_recon_weight, 0.0)),
              g.affine(mask_prior, cfg.mask_prior_weight, 0.0)),
        g.add(g.affine(gg_cycle_, cfg.cycle_weight, 0.0),
              g.affine(gg_adv_, cfg.adv_weight, 0.0)));

    // critic-side graph: scores plus the gradient penalty
    Graph& cg = critic_graph_;
    cg_real_ = cg.input("real", {b, c, c, 3});
    cg_fake_ = cg.input("fake", {b, c, c, 3});
    cg_ihat_ = cg.input("ihat", {b, c, c, 3});
    cg_lambda_ = cg.input("lambda", {1});
    NodeId s_real = build_critic(cg, cfg_, cg_real_, init_seed);
    NodeId s_fake = build_critic(cg, cfg_, cg_fake_, init_seed);
    NodeId s_hat_sum = cg.sum_all(build_critic(cg, cfg_, cg_ihat_, init_seed));
    NodeId grad = cg.gradient_node(s_hat_sum, cg_ihat_);  // (b, c, c, 3)
    NodeId g2 = cg.reshape(cg.mul(grad, grad), {b, c * c * 3});
    NodeId norms = cg.sqrt(cg.row_sum(g2));  // per-sample gradient norms
    NodeId excess = cg.affine(norms, 1.0, -1.0);
    cg_penalty_ = cg.affine(cg.sum_all(cg.mul(excess, excess)), 1.0 / (double)b, 0.0);
    NodeId wdist = cg.sub(cg.mean_all(s_fake), cg.mean_all(s_real));
    cg_loss_ = cg.add(wdist, cg.mul(cg_lambda_, cg_penalty_));
    cg_gen_term_ = cg.affine(cg.mean_all(s_fake), -1.0, 0.0);

    for (const auto& name : gen_graph_.param_names()) {
        if (name.rfind("gm.", 0) == 0 || name.rfind("gw.", 0) == 0)
            gen_params_.push_back(name);
        else if (name.rfind("cls.", 0) == 0)
            cls_params_.push_back(name);
    }
    critic_params_ = critic_graph_.param_names();  // only wd.* live there
}

void DisentangleTrainer::sync_critic_into_generator() {
    for (const auto& name : critic_params_)
        gen_graph_.param_value(name) = critic_graph_.param_value(name);
}

Bindings DisentangleTrainer::gen_bindings(const std::vector<Image>& crops,
                                          const std::vector<AUCode>& au_orig,
                                          const std::vector<AUCode>& au_target) const {
    if ((int)crops.size() != cfg_.batch)
        throw std::invalid_argument("disentangle step: batch size mismatch");
    Bindings b;
    b.emplace("crop", images_to_batch(crops));
    b.emplace("au_orig", au_codes_to_batch(au_orig));
    b.emplace("au_target", au_codes_to_batch(au_target));
    return b;
}

namespace {
std::vector<AUCode> random_targets(const std::vector<AUCode>& orig, Rng& rng) {
    std::vector<AUCode> out = orig;
    for (auto& code : out)
        for (int j = 0; j < kDrivingAUs; ++j) code.values[(size_t)j] = rng.uniform();
    return out;
}
}  // namespace

DisentangleTrainer::StepLosses DisentangleTrainer::step(const BatchSampler& sample, Rng& rng) {
    StepLosses log;
    std::vector<Image> crops;
    std::vector<AUCode> aus;

    for (int k = 0; k < cfg_.critic_steps; ++k) {
        crops.clear();
        aus.clear();
        sample(crops, aus);
        auto targets = random_targets(aus, rng);
        Bindings gb = gen_bindings(crops, aus, targets);
        Tensor fake = gen_graph_.evaluate(gg_ig_, gb);

        Tensor real = images_to_batch(crops);
        Tensor ihat = real;
        const int64_t per = (int64_t)(ihat.numel() / cfg_.batch);
        for (int64_t i = 0; i < cfg_.batch; ++i) {
            const double u = rng.uniform();
            for (int64_t j = 0; j < per; ++j) {
                const size_t idx = (size_t)(i * per + j);
                ihat.data[idx] = u * real.data[idx] + (1.0 - u) * fake.data[idx];
            }
        }
        Bindings cb;
        cb.emplace("real", std::move(real));
        cb.emplace("fake", std::move(fake));
        cb.emplace("ihat", std::move(ihat));
        cb.emplace("lambda", Tensor::scalar(cfg_.lambda_gp));
        std::vector<Tensor> vals;
        auto grads = critic_graph_.gradient(cg_loss_, cb, critic_params_,
                                            {cg_loss_, cg_penalty_}, &vals);
        critic_adam_.step(critic_graph_, grads);
        if (k + 1 == cfg_.critic_steps) {
            log.critic = vals[0].data[0];
            log.penalty = vals[1].data[0];
        }
    }
    sync_critic_into_generator();

    crops.clear();
    aus.clear();
    sample(crops, aus);
    auto targets = random_targets(aus, rng);
    Bindings gb = gen_bindings(crops, aus, targets);
    // the classifier needs a head start before its labels can steer the mask
    if (cls_adam_.steps() >= (int64_t)cfg_.cls_warmup) {
        std::vector<Tensor> vals;
        auto ggrads = gen_graph_.gradient(gg_gen_loss_, gb, gen_params_,
                                          {gg_speech_, gg_cycle_, gg_adv_}, &vals);
        gen_adam_.step(gen_graph_, ggrads);
        log.speech = vals[0].data[0];
        log.cycle = vals[1].data[0];
        log.adv = vals[2].data[0];
    } else {
        auto vals = gen_graph_.evaluate_many({gg_speech_, gg_cycle_, gg_adv_}, gb);
        log.speech = vals[0].data[0];
        log.cycle = vals[1].data[0];
        log.adv = vals[2].data[0];
    }
    std::vector<Tensor> cvals;
    auto cgrads = gen_graph_.gradient(gg_cls_, gb, cls_params_, {gg_cls_}, &cvals);
    cls_adam_.step(gen_graph_, cgrads);
    log.cls = cvals[0].data[0];
    return log;
}

std::pair<double, double> DisentangleTrainer::wgan_gp_loss(const std::vector<Image>& fake,
                                                           const std::vector<Image>& real,
                                                           double lambda, Rng& rng) const {
    if (fake.empty() || real.empty() || fake.size() != real.size())
        throw std::invalid_argument("wgan_gp_loss: need equal nonempty batches");
    if ((int)fake.size() != cfg_.batch)
        throw std::invalid_argument("wgan_gp_loss: batch size must match the trainer");
    if (lambda < 0.0) throw std::invalid_argument("wgan_gp_loss: lambda must be >= 0");
    Tensor freal = images_to_batch(real);
    Tensor ffake = images_to_batch(fake);
    Tensor ihat = freal;
    const int64_t per = (int64_t)(ihat.numel() / cfg_.batch);
    for (int64_t i = 0; i < cfg_.batch; ++i) {
        const double u = rng.uniform();
        for (int64_t j = 0; j < per; ++j) {
            const size_t idx = (size_t)(i * per + j);
            ihat.data[idx] = u * freal.data[idx] + (1.0 - u) * ffake.data[idx];
        }
    }
    Bindings cb;
    cb.emplace("real", std::move(freal));
    cb.emplace("fake", std::move(ffake));
    cb.emplace("ihat", std::move(ihat));
    cb.emplace("lambda", Tensor::scalar(lambda));
    auto vals = critic_graph_.evaluate_many({cg_loss_, cg_gen_term_}, cb);
    return {vals[0].data[0], vals[1].data[0]};
}

}  // namespace aunerf
