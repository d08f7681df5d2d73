#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aunerf/fusion.hpp"

using namespace aunerf;

namespace {
Image random_image(int h, int w, int c, Rng& rng) {
    Image img(h, w, c);
    for (auto& v : img.data) v = rng.uniform(0, 1);
    return img;
}
}  // namespace

TEST_CASE("au_weights: uniform, hand arithmetic, identities, errors") {
    auto uniform = au_weights({0.5, 0.5, 0.5, 0.5});
    for (double w : uniform.w) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));

    auto w = au_weights({0.5, 0.25, 0.25});
    CHECK(w.w[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(w.w[1] == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(w.w[2] == doctest::Approx(1.2).epsilon(1e-12));

    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> r(8);
        for (auto& v : r) v = rng.uniform(0.01, 1.0);
        auto ws = au_weights(r);
        double sum = 0;
        for (double v : ws.w) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::fabs(sum - 8.0) < 1e-9);
        // scale invariance: r and k*r give the same weights
        const double k = rng.uniform(0.1, 0.9);
        std::vector<double> scaled;
        for (double v : r) scaled.push_back(v * k);
        auto ws2 = au_weights(scaled);
        for (size_t i = 0; i < ws.w.size(); ++i)
            CHECK(std::fabs(ws.w[i] - ws2.w[i]) < 1e-9);
    }
    CHECK_THROWS_AS(au_weights({0.5, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(au_weights({0.5, -0.1}), std::invalid_argument);
    CHECK_THROWS_AS(au_weights({0.5, 1.5}), std::invalid_argument);
}

TEST_CASE("au_loss: perfect prediction, hand BCE, hand Dice") {
    AUWeights w2 = au_weights({0.5, 0.5});
    // perfect binary prediction
    CHECK(au_bce({1.0, 0.0}, {1, 0}, w2) < 1e-10);
    CHECK(au_dice({1.0, 0.0}, {1, 0}, w2) < 1e-5);  // eps keeps the 0-target term tiny
    CHECK(au_dice({1.0, 0.0}, {1, 0}, w2, 1e-12) < 1e-10);

    // n=2, uniform w, x=(1,0), xhat=(0.9,0.1): Lbce = -(ln0.9 + ln0.9)/2 = -ln 0.9
    const double bce = au_bce({0.9, 0.1}, {1, 0}, w2);
    CHECK(bce == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
    CHECK(bce == doctest::Approx(0.10536).epsilon(1e-4));

    // n=1, w=1, x=1, xhat=0.5: Ldice = 1 - 2*0.5/(1+0.25) = 0.2
    AUWeights w1 = au_weights({1.0});
    CHECK(au_dice({0.5}, {1}, w1, 1e-15) == doctest::Approx(0.2).epsilon(1e-9));

    CHECK(au_loss({0.9, 0.1}, {1, 0}, w2) ==
          doctest::Approx(au_bce({0.9, 0.1}, {1, 0}, w2) + au_dice({0.9, 0.1}, {1, 0}, w2)));

    CHECK_THROWS_AS(au_loss({0.5}, {1, 0}, w2), std::invalid_argument);
    CHECK_THROWS_AS(au_loss({1.5, 0.0}, {1, 0}, w2), std::invalid_argument);
}

TEST_CASE("au_loss: nonnegative and per-term Dice bounded in [0,1]") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> r(4), xh(4);
        std::vector<int> x(4);
        for (auto& v : r) v = rng.uniform(0.05, 1.0);
        for (auto& v : xh) v = rng.uniform(0, 1);
        for (auto& v : x) v = rng.uniform() < 0.5 ? 0 : 1;
        AUWeights w = au_weights(r);
        CHECK(au_loss(xh, x, w) >= 0.0);
        // the bracketed Dice term (before weighting) lies in [0,1]
        for (int i = 0; i < 4; ++i) {
            const double num = 2.0 * x[(size_t)i] * xh[(size_t)i] + 1e-6;
            const double den =
                x[(size_t)i] * x[(size_t)i] + xh[(size_t)i] * xh[(size_t)i] + 1e-6;
            const double term = 1.0 - num / den;
            CHECK(term >= 0.0);
            CHECK(term <= 1.0);
        }
    }
}

TEST_CASE("au_loss gradient matches finite differences for x_hat in [0.05,0.95]") {
    Rng rng(3);
    AUWeights w = au_weights({0.4, 0.2, 0.8, 0.6});
    for (int trial = 0; trial < 10; ++trial) {
        Graph g;
        NodeId pred = g.input("pred", {1, 4});
        Tensor labels({1, 4});
        for (auto& v : labels.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        NodeId target = g.constant(labels);
        NodeId loss = build_au_loss(g, pred, target, w);
        Tensor xh({1, 4});
        for (auto& v : xh.data) v = rng.uniform(0.05, 0.95);
        Bindings b{{"pred", xh}};
        CHECK(grad_check(g, loss, b, {"pred"}) < 1e-4);
    }
}

TEST_CASE("graph au_loss agrees with the value-level formulas") {
    Rng rng(17);
    AUWeights w = au_weights({0.3, 0.6, 0.9, 0.45});
    Graph g;
    NodeId pred = g.input("pred", {2, 4});
    NodeId target = g.input("target", {2, 4});
    NodeId loss = build_au_loss(g, pred, target, w);
    Tensor xh({2, 4}), lab({2, 4});
    std::vector<std::vector<double>> xr(2, std::vector<double>(4));
    std::vector<std::vector<int>> lr(2, std::vector<int>(4));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 4; ++j) {
            xr[(size_t)i][(size_t)j] = rng.uniform(0.02, 0.98);
            lr[(size_t)i][(size_t)j] = rng.uniform() < 0.5 ? 0 : 1;
            xh.at(i, j) = xr[(size_t)i][(size_t)j];
            lab.at(i, j) = lr[(size_t)i][(size_t)j];
        }
    const double got = g.evaluate(loss, {{"pred", xh}, {"target", lab}}).data[0];
    const double want =
        0.5 * (au_loss(xr[0], lr[0], w) + au_loss(xr[1], lr[1], w));
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("reconstruction_loss: identities and metric properties") {
    Image zero(8, 8, 3), one(8, 8, 3);
    for (auto& v : one.data) v = 1.0;
    CHECK(reconstruction_loss(zero, zero) == doctest::Approx(0.0));
    CHECK(reconstruction_loss(zero, one) == doctest::Approx(1.0));
    Image half(8, 8, 3);
    for (size_t i = 0; i < half.data.size() / 2; ++i) half.data[i] = 0.5;
    CHECK(reconstruction_loss(zero, half) == doctest::Approx(0.25));
    Rng rng(4);
    Image a = random_image(8, 8, 3, rng), b = random_image(8, 8, 3, rng);
    CHECK(reconstruction_loss(a, b) == doctest::Approx(reconstruction_loss(b, a)));
    CHECK(reconstruction_loss(a, b) > 0.0);
}

TEST_CASE("fusion model: dims, determinism, decoder range") {
    FusionConfig cfg;
    cfg.crop = 8;
    cfg.frame_h = cfg.frame_w = 16;
    FusionModel model(cfg, 31);
    Rng rng(5);
    Image aface = random_image(8, 8, 3, rng);
    Image frame = random_image(16, 16, 3, rng);
    std::vector<double> fa(16);
    for (auto& v : fa) v = rng.uniform(-1, 1);

    auto f_aud = model.encode_audio_face(aface);
    CHECK(f_aud.size() == 32);
    CHECK(model.encode_audio_face(aface) == f_aud);
    for (double v : f_aud) CHECK(std::isfinite(v));

    Image fused = model.fuse_decode(f_aud, fa);
    CHECK(fused.h == 8);
    for (double v : fused.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    auto f_hat = model.feature_encode(fused);
    CHECK(f_hat.size() == 32);
    auto f_id = model.identity_feature(frame);
    CHECK(f_id.size() == 32);
    CHECK(model.identity_feature(frame) == f_id);

    // the chained path agrees with the three separate stages
    auto chained = model.fused_feature(aface, fa);
    auto staged = model.feature_encode(model.fuse_decode(model.encode_audio_face(aface), fa));
    REQUIRE(chained.size() == staged.size());
    for (size_t i = 0; i < chained.size(); ++i)
        CHECK(chained[i] == doctest::Approx(staged[i]).epsilon(1e-12));

    // conditioning sensitivity of the decoder input
    std::vector<double> fa2 = fa;
    fa2[0] += 0.5;
    auto other = model.fused_feature(aface, fa2);
    double dist = 0;
    for (size_t i = 0; i < other.size(); ++i)
        dist += (other[i] - chained[i]) * (other[i] - chained[i]);
    CHECK(dist > 0.0);

    std::vector<double> bad(7);
    CHECK_THROWS_AS(model.fuse_decode(bad, fa), std::invalid_argument);
}

TEST_CASE("fusion_target: extreme masks collapse as expected") {
    // a mask model with forced output is impractical here; check the identity
    // (1-A)*crop via composite/split agreement instead
    Rng rng(6);
    Image frame = random_image(16, 16, 3, rng);
    CropRect rect{4, 4, 8, 8};
    Image crop = crop_image(frame, rect);
    Image mask = random_image(8, 8, 1, rng);
    FacePair pair = split_faces(mask, crop, frame, rect);
    // fusion target of the same frame equals the split audio-face when the
    // same mask is used; verify the algebraic relation directly
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(pair.audio_face.at(y, x, c) ==
                      doctest::Approx((1.0 - mask.at(y, x, 0)) * crop.at(y, x, c))
                          .epsilon(1e-15));
}

TEST_CASE("fusion trainer step runs and losses are finite and nonnegative") {
    FusionConfig cfg;
    cfg.crop = 8;
    cfg.frame_h = cfg.frame_w = 16;
    cfg.batch = 2;
    AUWeights w = au_weights(std::vector<double>(8, 0.5));
    FusionTrainer trainer(cfg, w, 37);
    Rng rng(7);
    FusionTrainer::Batch batch;
    for (int i = 0; i < 2; ++i) {
        batch.audio_face_ref.push_back(random_image(8, 8, 3, rng));
        batch.audio_face_target.push_back(random_image(8, 8, 3, rng));
        batch.identity_face.push_back(random_image(16, 16, 3, rng));
        std::vector<double> fa(16);
        for (auto& v : fa) v = rng.uniform(-1, 1);
        batch.f_a.push_back(fa);
        batch.labels.push_back({1, 0, 1, 0, 0, 1, 0, 1});
    }
    auto l1 = trainer.step(batch);
    CHECK(l1.rec >= 0.0);
    CHECK(l1.au >= 0.0);
    CHECK(l1.probe >= 0.0);
    CHECK(l1.id_rec >= 0.0);
    auto l2 = trainer.step(batch);  // loss should not blow up
    CHECK(std::isfinite(l2.rec + l2.au + l2.probe + l2.id_rec));
}
