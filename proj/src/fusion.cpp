#include "aunerf/fusion.hpp"

#include <cmath>

#include "aunerf/nets.hpp"

namespace aunerf {

AUWeights au_weights(const std::vector<double>& r) {
    if (r.empty()) throw std::invalid_argument("au_weights: empty occurrence vector");
    double inv_sum = 0.0;
    for (double ri : r) {
        if (!(ri > 0.0) || ri > 1.0)
            throw std::invalid_argument("au_weights: occurrence rates must be in (0,1]");
        inv_sum += 1.0 / ri;
    }
    AUWeights out;
    out.r = r;
    out.w.resize(r.size());
    const double n = (double)r.size();
    for (size_t i = 0; i < r.size(); ++i) out.w[i] = (n / r[i]) / inv_sum;
    return out;
}

std::vector<double> occurrence_rates(const std::vector<std::vector<int>>& labels, int n_au) {
    std::vector<double> r((size_t)n_au, 0.0);
    for (const auto& row : labels) {
        if ((int)row.size() != n_au)
            throw std::invalid_argument("occurrence_rates: label length mismatch");
        for (int i = 0; i < n_au; ++i) r[(size_t)i] += row[(size_t)i] ? 1.0 : 0.0;
    }
    const double n = labels.empty() ? 1.0 : (double)labels.size();
    for (auto& v : r) v = std::max(v / n, 0.01);
    return r;
}

namespace {
constexpr double kLogFloor = 1e-12;

void check_au_pair(const std::vector<double>& x_hat, const std::vector<int>& x,
                   const AUWeights& w) {
    if (x_hat.size() != x.size() || x_hat.size() != w.w.size())
        throw std::invalid_argument("au loss: length mismatch");
    for (double v : x_hat)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("au loss: predictions must lie in [0,1]");
}
}  // namespace

double au_bce(const std::vector<double>& x_hat, const std::vector<int>& x, const AUWeights& w) {
    check_au_pair(x_hat, x, w);
    double acc = 0.0;
    for (size_t i = 0; i < x_hat.size(); ++i) {
        const double lp = std::log(std::max(x_hat[i], kLogFloor));
        const double ln = std::log(std::max(1.0 - x_hat[i], kLogFloor));
        acc += w.w[i] * (x[i] * lp + (1 - x[i]) * ln);
    }
    return -acc / (double)x_hat.size();
}

double au_dice(const std::vector<double>& x_hat, const std::vector<int>& x, const AUWeights& w,
               double eps) {
    check_au_pair(x_hat, x, w);
    double acc = 0.0;
    for (size_t i = 0; i < x_hat.size(); ++i) {
        const double xi = (double)x[i];
        const double num = 2.0 * xi * x_hat[i] + eps;
        const double den = xi * xi + x_hat[i] * x_hat[i] + eps;
        acc += w.w[i] * (1.0 - num / den);
    }
    return acc / (double)x_hat.size();
}

double au_loss(const std::vector<double>& x_hat, const std::vector<int>& x, const AUWeights& w,
               double eps) {
    return au_bce(x_hat, x, w) + au_dice(x_hat, x, w, eps);
}

double reconstruction_loss(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w || a.c != b.c)
        throw std::invalid_argument("reconstruction_loss: image shapes differ");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) acc += std::fabs(a.data[i] - b.data[i]);
    return acc / (double)a.data.size();
}

NodeId build_au_loss(Graph& g, NodeId pred, NodeId target, const AUWeights& w, double eps) {
    const Shape& s = g.node(pred).shape;
    if (s.size() != 2 || g.node(target).shape != s)
        throw GraphError("build_au_loss: expected matching (batch, n_au) nodes");
    const int64_t b = s[0], n = s[1];
    if ((int64_t)w.w.size() != n) throw GraphError("build_au_loss: weight length mismatch");
    NodeId wrow = g.broadcast_row(g.constant(Tensor::vec(w.w)), b);

    NodeId lp = g.log_clamped(pred, kLogFloor);
    NodeId ln = g.log_clamped(g.affine(pred, -1.0, 1.0), kLogFloor);
    NodeId tneg = g.affine(target, -1.0, 1.0);
    NodeId bce_terms = g.mul(wrow, g.add(g.mul(target, lp), g.mul(tneg, ln)));
    NodeId bce = g.affine(g.sum_all(bce_terms), -1.0 / (double)(n * b), 0.0);

    NodeId num = g.affine(g.mul(target, pred), 2.0, eps);
    NodeId den = g.affine(g.add(g.mul(target, target), g.mul(pred, pred)), 1.0, eps);
    NodeId dice_terms = g.mul(wrow, g.affine(g.div(num, den), -1.0, 1.0));
    NodeId dice = g.affine(g.sum_all(dice_terms), 1.0 / (double)(n * b), 0.0);
    return g.add(bce, dice);
}

// ---------------------------------------------------------------------------
// Networks

NodeId build_audio_encoder(Graph& g, const FusionConfig& cfg, NodeId img, uint64_t seed) {
    NodeId e1 = g.leaky_relu(conv2d(g, img, 16, 3, 2, 1, "ea.enc0", seed), cfg.leaky);
    NodeId e2 = g.leaky_relu(conv2d(g, e1, 32, 3, 2, 1, "ea.enc1", seed), cfg.leaky);
    return linear(g, flatten(g, e2), cfg.feat_dim, "ea.fc", seed);
}

NodeId build_fusion_decoder(Graph& g, const FusionConfig& cfg, NodeId f_aud, NodeId f_a,
                            uint64_t seed) {
    const int64_t base = cfg.crop / 4;
    NodeId z = g.concat_cols(f_aud, f_a);
    const int64_t b = g.node(z).shape[0];
    NodeId hfeat = g.leaky_relu(linear(g, z, base * base * 32, "dec.fc", seed), cfg.leaky);
    NodeId x = g.reshape(hfeat, {b, base, base, 32});
    NodeId d1 = g.leaky_relu(conv2d(g, g.upsample2(x), 16, 3, 1, 1, "dec.up0", seed), cfg.leaky);
    NodeId d2 = g.leaky_relu(conv2d(g, g.upsample2(d1), 8, 3, 1, 1, "dec.up1", seed), cfg.leaky);
    return g.sigmoid(conv2d(g, d2, 3, 3, 1, 1, "dec.out", seed));
}

NodeId build_feature_encoder(Graph& g, const FusionConfig& cfg, NodeId img, uint64_t seed) {
    NodeId e1 = g.leaky_relu(conv2d(g, img, 16, 3, 2, 1, "ef.enc0", seed), cfg.leaky);
    NodeId e2 = g.leaky_relu(conv2d(g, e1, 32, 3, 2, 1, "ef.enc1", seed), cfg.leaky);
    return linear(g, flatten(g, e2), cfg.feat_dim, "ef.fc", seed);
}

NodeId build_identity_encoder(Graph& g, const FusionConfig& cfg, NodeId frame, uint64_t seed) {
    NodeId e1 = g.leaky_relu(conv2d(g, frame, 8, 3, 2, 1, "eid.enc0", seed), cfg.leaky);
    NodeId e2 = g.leaky_relu(conv2d(g, e1, 16, 3, 2, 1, "eid.enc1", seed), cfg.leaky);
    NodeId e3 = g.leaky_relu(conv2d(g, e2, 16, 3, 2, 1, "eid.enc2", seed), cfg.leaky);
    return linear(g, flatten(g, e3), cfg.feat_dim, "eid.fc", seed);
}

NodeId build_identity_decoder(Graph& g, const FusionConfig& cfg, NodeId f_id, uint64_t seed) {
    const int64_t bh = cfg.frame_h / 8, bw = cfg.frame_w / 8;
    const int64_t b = g.node(f_id).shape[0];
    NodeId hfeat = g.leaky_relu(linear(g, f_id, bh * bw * 16, "did.fc", seed), cfg.leaky);
    NodeId x = g.reshape(hfeat, {b, bh, bw, 16});
    NodeId d1 = g.leaky_relu(conv2d(g, g.upsample2(x), 16, 3, 1, 1, "did.up0", seed), cfg.leaky);
    NodeId d2 = g.leaky_relu(conv2d(g, g.upsample2(d1), 8, 3, 1, 1, "did.up1", seed), cfg.leaky);
    NodeId d3 = g.leaky_relu(conv2d(g, g.upsample2(d2), 8, 3, 1, 1, "did.up2", seed), cfg.leaky);
    return g.sigmoid(conv2d(g, d3, 3, 3, 1, 1, "did.out", seed));
}

// ---------------------------------------------------------------------------

FusionModel::FusionModel(const FusionConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    const int64_t c = cfg.crop;
    Graph& g = graph_;
    NodeId audio_face = g.input("audio_face", {1, c, c, 3});
    NodeId f_aud_in = g.input("f_aud_in", {1, cfg.feat_dim});
    NodeId f_a = g.input("f_a", {1, cfg.audio_dim});
    NodeId fused_in = g.input("fused_in", {1, c, c, 3});
    NodeId id_face = g.input("identity_face", {1, cfg.frame_h, cfg.frame_w, 3});

    f_aud_ = build_audio_encoder(g, cfg_, audio_face, init_seed);
    fused_img_ = build_fusion_decoder(g, cfg_, f_aud_in, f_a, init_seed);
    f_hat_ = build_feature_encoder(g, cfg_, fused_in, init_seed);
    f_id_ = build_identity_encoder(g, cfg_, id_face, init_seed);
    NodeId chain = build_fusion_decoder(g, cfg_, f_aud_, f_a, init_seed);
    f_hat_chain_ = build_feature_encoder(g, cfg_, chain, init_seed);
}

std::vector<double> FusionModel::encode_audio_face(const Image& audio_face) const {
    if (audio_face.h != cfg_.crop || audio_face.w != cfg_.crop || audio_face.c != 3)
        throw std::invalid_argument("encode_audio_face: wrong crop resolution");
    Bindings b;
    b.emplace("audio_face", images_to_batch({audio_face}));
    return graph_.evaluate(f_aud_, b).data;
}

Image FusionModel::fuse_decode(const std::vector<double>& f_aud,
                               const std::vector<double>& f_a) const {
    if ((int64_t)f_aud.size() != cfg_.feat_dim || (int64_t)f_a.size() != cfg_.audio_dim)
        throw std::invalid_argument("fuse_decode: feature dims do not match (want " +
                                    std::to_string(cfg_.feat_dim) + "+" +
                                    std::to_string(cfg_.audio_dim) + ")");
    Bindings b;
    b.emplace("f_aud_in", Tensor({1, cfg_.feat_dim}, std::vector<double>(f_aud)));
    b.emplace("f_a", Tensor({1, cfg_.audio_dim}, std::vector<double>(f_a)));
    Tensor t = graph_.evaluate(fused_img_, b);
    Image out(cfg_.crop, cfg_.crop, 3);
    out.data = t.data;
    return out;
}

std::vector<double> FusionModel::feature_encode(const Image& fused) const {
    if (fused.h != cfg_.crop || fused.w != cfg_.crop || fused.c != 3)
        throw std::invalid_argument("feature_encode: wrong crop resolution");
    Bindings b;
    b.emplace("fused_in", images_to_batch({fused}));
    return graph_.evaluate(f_hat_, b).data;
}

std::vector<double> FusionModel::identity_feature(const Image& identity_face) const {
    if (identity_face.h != cfg_.frame_h || identity_face.w != cfg_.frame_w ||
        identity_face.c != 3)
        throw std::invalid_argument("identity_feature: wrong frame resolution");
    Bindings b;
    b.emplace("identity_face", images_to_batch({identity_face}));
    return graph_.evaluate(f_id_, b).data;
}

std::vector<double> FusionModel::fused_feature(const Image& audio_face,
                                               const std::vector<double>& f_a) const {
    Bindings b;
    b.emplace("audio_face", images_to_batch({audio_face}));
    b.emplace("f_a", Tensor({1, cfg_.audio_dim}, std::vector<double>(f_a)));
    return graph_.evaluate(f_hat_chain_, b).data;
}

Image fusion_target(const Image& target_frame, const DisentangleModel& masks, const AUCode& au,
                    const CropRect& rect) {
    Image crop = crop_image(target_frame, rect);
    Image a = masks.mask(crop, au);
    Image out(crop.h, crop.w, crop.c);
    for (int y = 0; y < crop.h; ++y)
        for (int x = 0; x < crop.w; ++x)
            for (int ch = 0; ch < crop.c; ++ch)
                out.at(y, x, ch) = (1.0 - a.at(y, x, 0)) * crop.at(y, x, ch);
    out.crop_rect = rect;
    return out;
}

// ---------------------------------------------------------------------------

FusionTrainer::FusionTrainer(const FusionConfig& cfg, const AUWeights& weights,
                             uint64_t init_seed)
    : cfg_(cfg), weights_(weights), adam_(cfg.lr, cfg.beta1, cfg.beta2) {
    if (cfg.frame_h % 8 || cfg.frame_w % 8)
        throw std::invalid_argument("fusion: frame resolution must be divisible by 8");
    Graph& g = graph_;
    const int64_t b = cfg.batch, c = cfg.crop;
    NodeId aface_ref = g.input("audio_face_ref", {b, c, c, 3});
    NodeId f_a = g.input("f_a", {b, cfg.audio_dim});
    NodeId aface_tgt = g.input("audio_face_target", {b, c, c, 3});
    NodeId labels = g.input("labels", {b, cfg.n_au});
    NodeId id_face = g.input("identity_face", {b, cfg.frame_h, cfg.frame_w, 3});

    NodeId f_id = build_identity_encoder(g, cfg_, id_face, init_seed);
    NodeId id_rec = build_identity_decoder(g, cfg_, f_id, init_seed);
    idrec_ = g.mean_all(g.abs(g.sub(id_rec, id_face)));

    if (!cfg.bypass_mask) {
        NodeId f_aud = build_audio_encoder(g, cfg_, aface_ref, init_seed);
        NodeId fused = build_fusion_decoder(g, cfg_, f_aud, f_a, init_seed);
        rec_ = g.mean_all(g.abs(g.sub(fused, aface_tgt)));

        DisentangleConfig dcfg;
        dcfg.crop = cfg.crop;
        dcfg.n_au = cfg.n_au;
        dcfg.leaky = cfg.leaky;
        NodeId cls_pred = build_classifier(g, dcfg, fused, init_seed);
        au_ = build_au_loss(g, cls_pred, labels, weights_, cfg.dice_eps);

        NodeId f_hat = build_feature_encoder(g, cfg_, fused, init_seed);
        NodeId probe_pred = g.sigmoid(linear(g, f_hat, cfg.n_au, "probe", init_seed));
        probe_ = build_au_loss(g, probe_pred, labels, weights_, cfg.dice_eps);

        NodeId total = g.add(rec_, g.add(probe_, idrec_));
        loss_ = cfg.use_au_loss ? g.add(total, au_) : total;
    } else {
        rec_ = au_ = probe_ = -1;
        loss_ = idrec_;
    }

    for (const auto& name : g.param_names())
        if (name.rfind("cls.", 0) != 0) trained_params_.push_back(name);  // classifier frozen
}

FusionTrainer::StepLosses FusionTrainer::step(const Batch& batch) {
    if ((int)batch.identity_face.size() != cfg_.batch)
        throw std::invalid_argument("fusion step: batch size mismatch");
    Bindings bind;
    bind.emplace("identity_face", images_to_batch(batch.identity_face));
    if (!cfg_.bypass_mask) {
        bind.emplace("audio_face_ref", images_to_batch(batch.audio_face_ref));
        bind.emplace("audio_face_target", images_to_batch(batch.audio_face_target));
        Tensor fa({cfg_.batch, cfg_.audio_dim});
        Tensor lab({cfg_.batch, cfg_.n_au});
        for (int i = 0; i < cfg_.batch; ++i) {
            if ((int64_t)batch.f_a[(size_t)i].size() != cfg_.audio_dim ||
                (int)batch.labels[(size_t)i].size() != cfg_.n_au)
                throw std::invalid_argument("fusion step: feature/label dims mismatch");
            for (int j = 0; j < cfg_.audio_dim; ++j)
                fa.at(i, j) = batch.f_a[(size_t)i][(size_t)j];
            for (int j = 0; j < cfg_.n_au; ++j)
                lab.at(i, j) = (double)batch.labels[(size_t)i][(size_t)j];
        }
        bind.emplace("f_a", std::move(fa));
        bind.emplace("labels", std::move(lab));
    }
    StepLosses out;
    std::vector<Tensor> vals;
    if (!cfg_.bypass_mask) {
        auto grads = graph_.gradient(loss_, bind, trained_params_, {rec_, au_, probe_, idrec_},
                                     &vals);
        adam_.step(graph_, grads);
        out.rec = vals[0].data[0];
        out.au = vals[1].data[0];
        out.probe = vals[2].data[0];
        out.id_rec = vals[3].data[0];
    } else {
        auto grads = graph_.gradient(loss_, bind, trained_params_, {idrec_}, &vals);
        adam_.step(graph_, grads);
        out.id_rec = vals[0].data[0];
    }
    return out;
}

}  // namespace aunerf
