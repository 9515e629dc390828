// ============================================================================
// vae.hpp - Windowed trajectory VAE: 3-layer strided conv encoder to a
// Gaussian latent, mirrored transposed-conv decoder, ELBO training and
// per-layer feature extraction.
//
// Encoder layer enumeration (fixed, used by feature taps):
//   0:conv1  1:bn1  2:act1  3:conv2  4:bn2  5:act2  6:conv3  7:bn3  8:act3
//   9:flatten  10:linear -> (mu, log var)
// ============================================================================

#pragma once

#include <string>
#include <vector>

#include "trajstyle/checkpoint.hpp"
#include "trajstyle/common.hpp"
#include "trajstyle/numkern.hpp"
#include "trajstyle/trajdata.hpp"

namespace trajstyle::vae {

using numkern::AdamConfig;
using numkern::AdamState;
using numkern::Param;
using numkern::Sequential;
using trajdata::TrajDataset;
using trajdata::WindowRef;

// ----------------------------------------------------------------------------
// Architecture
// ----------------------------------------------------------------------------
struct VaeArch {
    int n_s = 7;
    int window = 100;
    std::vector<int> channels{128, 256, 512};
    int latent = 130;
    int kernel = 3;
    int stride = 2;
    int pad = 1;
    double leaky = 0.2;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    // conv stage output lengths, e.g. 100 -> {50, 25, 13}
    std::vector<int> stage_lengths() const {
        std::vector<int> ls;
        int l = window;
        for (size_t i = 0; i < channels.size(); ++i) {
            l = numkern::Conv1d::out_len(l, kernel, stride, pad);
            ls.push_back(l);
        }
        return ls;
    }
    int flat_dim() const { return channels.back() * stage_lengths().back(); }
};

struct LatentCode {
    std::vector<double> mu;
    std::vector<double> log_var;
    std::vector<double> sample;
    std::vector<double> eps;
};

// ----------------------------------------------------------------------------
// Encoder / decoder
// ----------------------------------------------------------------------------
class EncoderNet {
public:
    EncoderNet() = default;
    explicit EncoderNet(const VaeArch& arch, uint64_t seed) : arch_(arch) {
        Rng rng(seed_mix(seed, 0xe));
        build(rng);
    }

    Sequential& net() { return net_; }
    const VaeArch& arch() const { return arch_; }

    // (mu, log var) rows for a batch of windows laid out as (B, N_S, N)
    void encode_batch(const Tensor3& x, bool train, Mat& mu, Mat& log_var) {
        Tensor3 out = net_.forward(x, train);
        split_head(out, mu, log_var);
    }

    LatentCode encode(const Mat& window, const std::vector<double>& eps) {
        Tensor3 x = trajdata::window_to_tensor(window);
        Mat mu, lv;
        encode_batch(x, false, mu, lv);
        LatentCode code;
        code.mu.assign(mu.row(0), mu.row(0) + arch_.latent);
        code.log_var.assign(lv.row(0), lv.row(0) + arch_.latent);
        code.eps = eps;
        if ((int)eps.size() != arch_.latent) throw DataError("encode: eps dimension mismatch");
        code.sample.resize(arch_.latent);
        for (int i = 0; i < arch_.latent; ++i)
            code.sample[i] = code.mu[i] + std::exp(0.5 * code.log_var[i]) * eps[i];
        return code;
    }

    LatentCode encode(const Mat& window, Rng& rng) {
        std::vector<double> eps(arch_.latent);
        for (auto& e : eps) e = rng.normal();
        return encode(window, eps);
    }

    void split_head(const Tensor3& head_out, Mat& mu, Mat& log_var) const {
        mu = Mat(head_out.b, arch_.latent);
        log_var = Mat(head_out.b, arch_.latent);
        for (int b = 0; b < head_out.b; ++b)
            for (int i = 0; i < arch_.latent; ++i) {
                mu.at(b, i) = head_out.at(b, i, 0);
                log_var.at(b, i) = head_out.at(b, i + arch_.latent, 0);
            }
    }

private:
    void build(Rng& rng) {
        using namespace numkern;
        const auto& ch = arch_.channels;
        int in = arch_.n_s;
        for (size_t i = 0; i < ch.size(); ++i) {
            auto conv = std::make_unique<Conv1d>(strformat("enc.conv%zu", i + 1), in, ch[i],
                                                 arch_.kernel, arch_.stride, arch_.pad);
            conv->init(rng, arch_.leaky);
            net_.add(std::move(conv));
            net_.add(std::make_unique<BatchNorm1d>(strformat("enc.bn%zu", i + 1), ch[i],
                                                   arch_.bn_eps, arch_.bn_momentum));
            net_.add(std::make_unique<LeakyReLU>(arch_.leaky));
            in = ch[i];
        }
        net_.add(std::make_unique<Flatten>());
        auto head = std::make_unique<Linear>("enc.head", arch_.flat_dim(), 2 * arch_.latent);
        head->init(rng, 0.0);
        net_.add(std::move(head));
    }

    VaeArch arch_;
    Sequential net_;
};

class DecoderNet {
public:
    DecoderNet() = default;
    explicit DecoderNet(const VaeArch& arch, uint64_t seed) : arch_(arch) {
        Rng rng(seed_mix(seed, 0xd));
        build(rng);
    }

    Sequential& net() { return net_; }

    // z rows (B x latent) -> windows (B, N_S, N)
    Tensor3 decode_batch(const Mat& z, bool train) {
        Tensor3 x(z.rows, arch_.latent, 1);
        for (int b = 0; b < z.rows; ++b)
            for (int i = 0; i < arch_.latent; ++i) x.at(b, i, 0) = z.at(b, i);
        return net_.forward(x, train);
    }

    Mat decode(const std::vector<double>& z) {
        for (double x : z)
            if (!std::isfinite(x)) throw NumericError("decode: nonfinite latent");
        Mat zm(1, arch_.latent);
        std::copy(z.begin(), z.end(), zm.row(0));
        Tensor3 out = decode_batch(zm, false);
        return trajdata::tensor_to_window(out, 0);
    }

private:
    void build(Rng& rng) {
        using namespace numkern;
        auto lens = arch_.stage_lengths();          // e.g. {50, 25, 13}
        std::vector<int> targets(lens.begin(), lens.end() - 1);
        targets.insert(targets.begin(), arch_.window);  // {100, 50, 25}
        const auto& ch = arch_.channels;

        auto lin = std::make_unique<Linear>("dec.linear", arch_.latent, arch_.flat_dim());
        lin->init(rng, arch_.leaky);
        net_.add(std::move(lin));
        net_.add(std::make_unique<LeakyReLU>(arch_.leaky));
        net_.add(std::make_unique<Unflatten>(ch.back(), lens.back()));

        int cur_len = lens.back();
        for (int i = (int)ch.size() - 1; i >= 0; --i) {
            const int out_ch = i == 0 ? arch_.n_s : ch[i - 1];
            const int target = targets[i];
            const int base = (cur_len - 1) * arch_.stride - 2 * arch_.pad + arch_.kernel;
            const int out_pad = target - base;
            if (out_pad < 0 || out_pad >= arch_.stride)
                throw DataError("decoder: cannot invert encoder length chain");
            auto tc = std::make_unique<ConvTranspose1d>(
                strformat("dec.tconv%d", (int)ch.size() - i), ch[i], out_ch, arch_.kernel,
                arch_.stride, arch_.pad, out_pad);
            tc->init(rng, i == 0 ? 0.0 : arch_.leaky);
            net_.add(std::move(tc));
            if (i != 0) {
                net_.add(std::make_unique<BatchNorm1d>(
                    strformat("dec.bn%d", (int)ch.size() - i), out_ch, arch_.bn_eps,
                    arch_.bn_momentum));
                net_.add(std::make_unique<LeakyReLU>(arch_.leaky));
            }
            cur_len = target;
        }
    }

    VaeArch arch_;
    Sequential net_;
};

struct Vae {
    VaeArch arch;
    EncoderNet enc;
    DecoderNet dec;

    Vae() = default;
    Vae(const VaeArch& a, uint64_t seed) : arch(a), enc(a, seed), dec(a, seed) {}

    std::vector<Param*> params() {
        auto ps = enc.net().params();
        for (auto* p : dec.net().params()) ps.push_back(p);
        return ps;
    }
    std::vector<std::pair<std::string, std::vector<double>*>> buffers() {
        auto bs = enc.net().buffers();
        for (auto& b : dec.net().buffers()) bs.push_back(b);
        return bs;
    }
    void save(const std::string& path) { numkern::save_checkpoint(path, params(), buffers()); }
    void load(const std::string& path) { numkern::load_checkpoint(path, params(), buffers()); }
};

// ----------------------------------------------------------------------------
// ELBO as a minimization objective:
//   recon = sum of squared errors / 2   (Gaussian likelihood, identity cov)
//   kl    = -1/2 sum(1 + log var - mu^2 - var)
//   total = recon + beta * kl
// ----------------------------------------------------------------------------
struct ElboTerms {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

inline double kl_divergence(const double* mu, const double* log_var, int n) {
    double kl = 0.0;
    for (int i = 0; i < n; ++i)
        kl += -0.5 * (1.0 + log_var[i] - mu[i] * mu[i] - std::exp(log_var[i]));
    return kl;
}

inline ElboTerms elbo_loss(const Mat& window, const std::vector<double>& mu,
                           const std::vector<double>& log_var, const Mat& dec_out,
                           double beta = 1.0) {
    if (!window.same_shape(dec_out)) throw DataError("elbo_loss: shape mismatch");
    ElboTerms t;
    for (size_t i = 0; i < window.v.size(); ++i) {
        const double d = dec_out.v[i] - window.v[i];
        t.recon += 0.5 * d * d;
    }
    t.kl = kl_divergence(mu.data(), log_var.data(), (int)mu.size());
    t.total = t.recon + beta * t.kl;
    if (!std::isfinite(t.total)) throw NumericError("elbo_loss: nonfinite loss");
    return t;
}

// ----------------------------------------------------------------------------
// One full forward/backward pass of the batch ELBO (mean over windows).
// eps is (B x latent), fixed by the caller; gradients accumulate into the
// network parameters when backward is set.
// ----------------------------------------------------------------------------
struct BatchElbo {
    double total = 0.0, recon = 0.0, kl = 0.0;
};

inline BatchElbo vae_elbo_pass(Vae& vae, const Tensor3& x, const Mat& eps, double beta,
                               bool backward, bool train_mode) {
    const int b = x.b, latent = vae.arch.latent;
    Mat mu, lv;
    vae.enc.encode_batch(x, train_mode, mu, lv);
    Mat z(b, latent);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < latent; ++j)
            z.at(i, j) = mu.at(i, j) + std::exp(0.5 * lv.at(i, j)) * eps.at(i, j);
    Tensor3 xhat = vae.dec.decode_batch(z, train_mode);
    if (!xhat.same_shape(x)) throw DataError("vae: decoder output shape mismatch");

    BatchElbo out;
    for (size_t i = 0; i < x.v.size(); ++i) {
        const double d = xhat.v[i] - x.v[i];
        out.recon += 0.5 * d * d;
    }
    for (int i = 0; i < b; ++i) out.kl += kl_divergence(mu.row(i), lv.row(i), latent);
    out.recon /= b;
    out.kl /= b;
    out.total = out.recon + beta * out.kl;

    if (backward) {
        Tensor3 gx(x.b, x.c, x.l);
        for (size_t i = 0; i < x.v.size(); ++i) gx.v[i] = (xhat.v[i] - x.v[i]) / b;
        Tensor3 gz_t = vae.dec.net().backward(gx);
        // reparametrization + KL gradients into (mu, log var)
        Tensor3 ghead(b, 2 * latent, 1);
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < latent; ++j) {
                const double gz = gz_t.at(i, j, 0);
                const double sig = std::exp(0.5 * lv.at(i, j));
                ghead.at(i, j, 0) = gz + beta * mu.at(i, j) / b;
                ghead.at(i, j + latent, 0) =
                    gz * 0.5 * sig * eps.at(i, j) +
                    beta * (-0.5) * (1.0 - std::exp(lv.at(i, j))) / b;
            }
        vae.enc.net().backward(ghead);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Training
// ----------------------------------------------------------------------------
struct VaeTrainConfig {
    double lr = 1e-3;
    int batch = 128;
    int epochs = 50;
    double beta = 1.0;  // kl weight
    uint64_t seed = 0;

    void validate() const {
        if (!(lr > 0) || batch < 1 || epochs < 0)
            throw DataError("vae train config: lr, batch, epochs must be positive");
    }
};

struct EpochStats {
    double recon = 0.0, kl = 0.0, total = 0.0;
};

inline std::vector<EpochStats> train_vae(Vae& vae, const TrajDataset& ds,
                                         const std::vector<WindowRef>& refs,
                                         const VaeTrainConfig& cfg) {
    cfg.validate();
    if (refs.empty()) throw DataError("train_vae: empty window set");
    auto params = vae.params();
    AdamState adam;
    adam.init(params);
    AdamConfig acfg;
    acfg.lr = cfg.lr;
    Rng rng(seed_mix(cfg.seed, 0x7ae));

    std::vector<EpochStats> history;
    std::vector<int> order(refs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;

    const int n = vae.arch.window;
    Mat wbuf;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        EpochStats es;
        int batches = 0;
        for (size_t pos = 0; pos < order.size(); pos += (size_t)cfg.batch) {
            const int b = (int)std::min((size_t)cfg.batch, order.size() - pos);
            Tensor3 x(b, vae.arch.n_s, n);
            for (int i = 0; i < b; ++i) {
                trajdata::fill_window(ds, refs[order[pos + i]], n, wbuf);
                for (int c = 0; c < vae.arch.n_s; ++c)
                    for (int l = 0; l < n; ++l) x.at(i, c, l) = wbuf.at(l, c);
            }
            Mat eps(b, vae.arch.latent);
            for (auto& e : eps.v) e = rng.normal();
            for (auto* p : params) p->zero_grad();
            BatchElbo be = vae_elbo_pass(vae, x, eps, cfg.beta, true, true);
            if (!std::isfinite(be.total))
                throw NumericError(strformat("train_vae: loss diverged at epoch %d batch %d",
                                             epoch, batches));
            adam_step(params, adam, acfg);
            es.recon += be.recon;
            es.kl += be.kl;
            es.total += be.total;
            ++batches;
        }
        es.recon /= batches;
        es.kl /= batches;
        es.total /= batches;
        history.push_back(es);
    }
    return history;
}

// ----------------------------------------------------------------------------
// Feature extraction for style transfer. Returns (channels x positions)
// matrices for the requested encoder layer indices, in the given order.
// Encoder must be used in eval mode; running stats are not touched.
// ----------------------------------------------------------------------------
struct FeatureStack {
    std::vector<int> layer_indices;
    std::vector<Mat> features;  // each C_l x M_l
};

inline Mat tap_to_feature(const Tensor3& t) {
    Mat f(t.c, t.l);
    for (int c = 0; c < t.c; ++c)
        for (int l = 0; l < t.l; ++l) f.at(c, l) = t.at(0, c, l);
    return f;
}

inline FeatureStack extract_features(EncoderNet& enc, const Mat& window,
                                     const std::vector<int>& layer_indices) {
    FeatureStack st;
    st.layer_indices = layer_indices;
    if (layer_indices.empty()) return st;
    int deepest = 0;
    for (int idx : layer_indices) {
        if (idx < 0 || idx >= enc.net().size())
            throw DataError(strformat("extract_features: invalid layer index %d", idx));
        deepest = std::max(deepest, idx);
    }
    Tensor3 x = trajdata::window_to_tensor(window);
    std::vector<Tensor3> taps;
    enc.net().forward(x, false, deepest, &taps);
    for (int idx : layer_indices) st.features.push_back(tap_to_feature(taps[idx]));
    return st;
}

}  // namespace trajstyle::vae
