#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "trajstyle/vae.hpp"

using namespace trajstyle;
using namespace trajstyle::vae;
using trajdata::TrajDataset;
using trajdata::Trajectory;

namespace {

VaeArch tiny_arch() {
    VaeArch a;
    a.n_s = 2;
    a.window = 8;
    a.channels = {3, 4};
    a.latent = 3;
    return a;
}

VaeArch toy_arch() {
    VaeArch a;
    a.n_s = 2;
    a.window = 20;
    a.channels = {8, 16, 32};
    a.latent = 8;
    return a;
}

// smooth sinusoid windows, amplitude ~3 in normalized units
TrajDataset toy_dataset(int count, const VaeArch& arch, uint64_t seed) {
    TrajDataset ds;
    ds.n_s = arch.n_s;
    ds.n_a = 1;
    ds.dt = 0.02;
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        Trajectory tr;
        tr.id = strformat("toy_%03d", i);
        tr.dt = 0.02;
        tr.states = Mat(arch.window, arch.n_s);
        tr.actions = Mat(arch.window, 1);
        const double f = rng.uniform(0.5, 2.0), ph = rng.uniform(0.0, 6.28);
        for (int r = 0; r < arch.window; ++r)
            for (int c = 0; c < arch.n_s; ++c)
                tr.states.at(r, c) = 3.0 * std::sin(f * 0.3 * r + ph + 1.1 * c);
        ds.trajectories.push_back(tr);
    }
    return ds;
}

}  // namespace

// ----------------------------------------------------------------------------
// architecture contracts (default configuration)
// ----------------------------------------------------------------------------
TEST(VaeArchTest, DefaultFeatureLengths) {
    VaeArch a;
    auto lens = a.stage_lengths();
    ASSERT_EQ(lens.size(), 3u);
    EXPECT_EQ(lens[0], 50);
    EXPECT_EQ(lens[1], 25);
    EXPECT_EQ(lens[2], 13);
    EXPECT_EQ(a.flat_dim(), 512 * 13);
}

TEST(VaeDefault, LatentDim130AndDecoderShape) {
    VaeArch a;  // defaults: n_s 7, window 100, channels 128/256/512, latent 130
    Vae v(a, 1);
    Rng rng(2);
    Mat w(100, 7);
    for (auto& x : w.v) x = rng.normal();
    auto code = v.enc.encode(w, std::vector<double>(a.latent, 0.0));
    EXPECT_EQ(code.mu.size(), 130u);
    EXPECT_EQ(code.log_var.size(), 130u);
    // eps = 0 implies sample = mu
    for (int i = 0; i < a.latent; ++i) EXPECT_EQ(code.sample[i], code.mu[i]);
    Mat out = v.dec.decode(code.mu);
    EXPECT_EQ(out.rows, 100);
    EXPECT_EQ(out.cols, 7);
}

TEST(VaeDefault, StyleLayerFeatureShapes) {
    VaeArch a;
    Vae v(a, 3);
    Rng rng(4);
    Mat w(100, 7);
    for (auto& x : w.v) x = rng.normal();
    auto st = extract_features(v.enc, w, {2, 5, 7});
    ASSERT_EQ(st.features.size(), 3u);
    EXPECT_EQ(st.features[0].rows, 128);
    EXPECT_EQ(st.features[0].cols, 50);
    EXPECT_EQ(st.features[1].rows, 256);
    EXPECT_EQ(st.features[1].cols, 25);
    EXPECT_EQ(st.features[2].rows, 512);
    EXPECT_EQ(st.features[2].cols, 13);
}

// ----------------------------------------------------------------------------
// encode/decode behavior
// ----------------------------------------------------------------------------
TEST(Encode, DeterministicGivenSeedAndWindow) {
    auto a = tiny_arch();
    Vae v(a, 11);
    Rng rng(5);
    Mat w(a.window, a.n_s);
    for (auto& x : w.v) x = rng.normal();
    std::vector<double> eps(a.latent, 0.3);
    auto c1 = v.enc.encode(w, eps);
    auto c2 = v.enc.encode(w, eps);
    EXPECT_EQ(c1.mu, c2.mu);
    EXPECT_EQ(c1.log_var, c2.log_var);
    EXPECT_EQ(c1.sample, c2.sample);
}

TEST(Encode, ReparametrizationConsistency) {
    auto a = tiny_arch();
    Vae v(a, 13);
    Rng rng(6);
    Mat w(a.window, a.n_s);
    for (auto& x : w.v) x = rng.normal();
    std::vector<double> eps(a.latent);
    for (auto& e : eps) e = rng.normal();
    auto c = v.enc.encode(w, eps);
    for (int i = 0; i < a.latent; ++i) {
        const double expect = c.mu[i] + std::exp(0.5 * c.log_var[i]) * eps[i];
        EXPECT_DOUBLE_EQ(c.sample[i], expect);
    }
}

TEST(Decode, NonfiniteLatentThrows) {
    auto a = tiny_arch();
    Vae v(a, 17);
    std::vector<double> z(a.latent, 0.0);
    z[0] = std::nan("");
    EXPECT_THROW(v.dec.decode(z), NumericError);
}

// ----------------------------------------------------------------------------
// ELBO terms
// ----------------------------------------------------------------------------
TEST(Elbo, KlZeroAtPrior) {
    std::vector<double> mu(4, 0.0), lv(4, 0.0);
    EXPECT_EQ(kl_divergence(mu.data(), lv.data(), 4), 0.0);
}

TEST(Elbo, PerfectReconstructionZeroRecon) {
    Mat w(5, 2, 1.5);
    std::vector<double> mu(3, 0.0), lv(3, 0.0);
    auto t = elbo_loss(w, mu, lv, w);
    EXPECT_EQ(t.recon, 0.0);
    EXPECT_EQ(t.kl, 0.0);
    EXPECT_EQ(t.total, 0.0);
}

TEST(Elbo, UnitMeanKlIsHalf) {
    std::vector<double> mu{1.0, 0.0, 0.0}, lv(3, 0.0);
    EXPECT_DOUBLE_EQ(kl_divergence(mu.data(), lv.data(), 3), 0.5);
}

TEST(Elbo, KlNonnegativeProperty) {
    Rng rng(7);
    for (int t = 0; t < 500; ++t) {
        std::vector<double> mu(6), lv(6);
        for (auto& x : mu) x = rng.normal(0.0, 2.0);
        for (auto& x : lv) x = rng.normal(0.0, 1.5);
        EXPECT_GE(kl_divergence(mu.data(), lv.data(), 6), 0.0);
    }
    // zero exactly at mu = 0, sigma = 1
    std::vector<double> mu(6, 0.0), lv(6, 0.0);
    EXPECT_EQ(kl_divergence(mu.data(), lv.data(), 6), 0.0);
}

// ----------------------------------------------------------------------------
// gradients of the full VAE loss
// ----------------------------------------------------------------------------
TEST(VaeGrad, FullLossMatchesFiniteDifferences) {
    auto a = tiny_arch();
    Vae v(a, 23);
    Rng rng(8);
    Tensor3 x(2, a.n_s, a.window);
    for (auto& e : x.v) e = rng.normal();
    Mat eps(2, a.latent);
    for (auto& e : eps.v) e = rng.normal();
    auto params = v.params();
    auto fn = [&](bool bk) {
        if (bk)
            for (auto* p : params) p->zero_grad();
        return vae_elbo_pass(v, x, eps, 1.0, bk, true).total;
    };
    auto rep = numkern::grad_check(fn, params, 1e-5, 1e-4);
    EXPECT_TRUE(rep.pass) << "worst " << rep.worst << " err " << rep.max_rel_err;
}

// ----------------------------------------------------------------------------
// training
// ----------------------------------------------------------------------------
TEST(TrainVae, ZeroEpochsLeavesNetsUnchanged) {
    auto a = toy_arch();
    Vae v(a, 31);
    auto ds = toy_dataset(4, a, 41);
    auto refs = trajdata::enumerate_windows(ds, a.window, 1);
    std::vector<double> before;
    for (auto* p : v.params()) before.insert(before.end(), p->value.begin(), p->value.end());
    VaeTrainConfig cfg;
    cfg.epochs = 0;
    auto hist = train_vae(v, ds, refs, cfg);
    EXPECT_TRUE(hist.empty());
    std::vector<double> after;
    for (auto* p : v.params()) after.insert(after.end(), p->value.begin(), p->value.end());
    EXPECT_EQ(before, after);
}

TEST(TrainVae, ToySetConvergence) {
    auto a = toy_arch();
    Vae v(a, 37);
    auto ds = toy_dataset(10, a, 43);
    auto refs = trajdata::enumerate_windows(ds, a.window, 1);
    ASSERT_EQ(refs.size(), 10u);

    VaeTrainConfig cfg;
    cfg.epochs = 500;
    cfg.batch = 10;
    cfg.seed = 7;
    auto hist = train_vae(v, ds, refs, cfg);
    ASSERT_EQ(hist.size(), 500u);
    EXPECT_LT(hist.back().total, hist.front().total / 10.0)
        << "initial " << hist.front().total << " final " << hist.back().total;
}

TEST(TrainVae, OverfitSanityPosteriorMeanReconstruction) {
    // small sets need a reduced KL weight to overfit cleanly
    auto a = toy_arch();
    Vae v(a, 39);
    auto ds = toy_dataset(10, a, 43);
    auto refs = trajdata::enumerate_windows(ds, a.window, 1);

    VaeTrainConfig cfg;
    cfg.epochs = 1200;
    cfg.batch = 10;
    cfg.beta = 0.1;
    cfg.seed = 7;
    train_vae(v, ds, refs, cfg);

    double sse = 0.0;
    size_t count = 0;
    for (const auto& ref : refs) {
        auto w = trajdata::materialize_window(ds, ref, a.window);
        auto code = v.enc.encode(w.data, std::vector<double>(a.latent, 0.0));
        Mat rec = v.dec.decode(code.mu);
        for (size_t i = 0; i < rec.v.size(); ++i) {
            const double d = rec.v[i] - w.data.v[i];
            sse += d * d;
        }
        count += rec.v.size();
    }
    const double rmse = std::sqrt(sse / count);
    EXPECT_LT(rmse, 0.1) << "reconstruction rmse " << rmse;

    // trained decoder is non-constant
    std::vector<double> z1(a.latent, 0.0), z2(a.latent, 0.0);
    z2[0] = 2.0;
    Mat d1 = v.dec.decode(z1), d2 = v.dec.decode(z2);
    double diff = 0.0;
    for (size_t i = 0; i < d1.v.size(); ++i) diff += std::fabs(d1.v[i] - d2.v[i]);
    EXPECT_GT(diff, 1e-6);
}

TEST(TrainVae, DeterministicUnderSeed) {
    auto a = tiny_arch();
    auto ds = toy_dataset(4, a, 51);
    auto refs = trajdata::enumerate_windows(ds, a.window, 1);
    VaeTrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch = 2;
    cfg.seed = 9;
    Vae v1(a, 99), v2(a, 99);
    auto h1 = train_vae(v1, ds, refs, cfg);
    auto h2 = train_vae(v2, ds, refs, cfg);
    for (size_t i = 0; i < h1.size(); ++i) EXPECT_EQ(h1[i].total, h2[i].total);
    auto p1 = v1.params(), p2 = v2.params();
    for (size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i]->value, p2[i]->value);
}

// ----------------------------------------------------------------------------
// feature extraction
// ----------------------------------------------------------------------------
TEST(ExtractFeatures, EmptyIndexListGivesEmptyStack) {
    auto a = tiny_arch();
    Vae v(a, 53);
    Mat w(a.window, a.n_s, 0.5);
    auto st = extract_features(v.enc, w, {});
    EXPECT_TRUE(st.features.empty());
}

TEST(ExtractFeatures, DeterministicAndPure) {
    auto a = tiny_arch();
    Vae v(a, 59);
    Rng rng(10);
    Mat w(a.window, a.n_s);
    for (auto& x : w.v) x = rng.normal();

    // snapshot batchnorm running stats
    std::vector<std::vector<double>> stats_before;
    for (auto& [name, buf] : v.enc.net().buffers()) stats_before.push_back(*buf);

    auto s1 = extract_features(v.enc, w, {2, 5});
    auto s2 = extract_features(v.enc, w, {2, 5});
    for (size_t i = 0; i < s1.features.size(); ++i)
        EXPECT_EQ(s1.features[i].v, s2.features[i].v);

    size_t bi = 0;
    for (auto& [name, buf] : v.enc.net().buffers()) {
        EXPECT_EQ(*buf, stats_before[bi]) << "running stats touched: " << name;
        ++bi;
    }
}

TEST(ExtractFeatures, InvalidIndexThrows) {
    auto a = tiny_arch();
    Vae v(a, 61);
    Mat w(a.window, a.n_s, 0.1);
    EXPECT_THROW(extract_features(v.enc, w, {99}), DataError);
}

// ----------------------------------------------------------------------------
// checkpoint round trip
// ----------------------------------------------------------------------------
TEST(VaeCheckpoint, BitwiseRoundTrip) {
    auto a = tiny_arch();
    Vae v(a, 67);
    // move running stats off defaults
    auto ds = toy_dataset(4, a, 71);
    auto refs = trajdata::enumerate_windows(ds, a.window, 1);
    VaeTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 2;
    train_vae(v, ds, refs, cfg);

    const std::string path =
        (std::filesystem::temp_directory_path() / "ts_vae_test.ckpt").string();
    v.save(path);
    Vae v2(a, 1234);
    v2.load(path);
    auto p1 = v.params(), p2 = v2.params();
    for (size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i]->value, p2[i]->value);
    auto b1 = v.buffers(), b2 = v2.buffers();
    for (size_t i = 0; i < b1.size(); ++i) EXPECT_EQ(*b1[i].second, *b2[i].second);
    std::filesystem::remove(path);
}
