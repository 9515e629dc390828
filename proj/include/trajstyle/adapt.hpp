// ============================================================================
// adapt.hpp - Behavioural-cloning adaptation: bounded policy network with the
// same conv trunk enumeration as the VAE encoder, distillation of the
// scripted expert into a network, supervised training on adapted datasets and
// simulator evaluation.
//
// The network emits actions in [-1, 1] through a tanh head; raw actions come
// from the action bounds, so outputs satisfy the bounds for any finite input.
// ============================================================================

#pragma once

#include <array>
#include <memory>
#include <vector>

#include "trajstyle/checkpoint.hpp"
#include "trajstyle/common.hpp"
#include "trajstyle/cutsim.hpp"
#include "trajstyle/evalstat.hpp"
#include "trajstyle/numkern.hpp"
#include "trajstyle/styletx.hpp"
#include "trajstyle/trajdata.hpp"

namespace trajstyle::adapt {

using numkern::Param;
using numkern::Sequential;

struct PolicyArch {
    int n_s = 7;
    int window = 100;
    std::vector<int> channels{128, 256, 512};
    int n_a = 5;
    int kernel = 3;
    int stride = 2;
    int pad = 1;
    double leaky = 0.2;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    int flat_dim() const {
        int l = window;
        for (size_t i = 0; i < channels.size(); ++i)
            l = numkern::Conv1d::out_len(l, kernel, stride, pad);
        return channels.back() * l;
    }
};

class PolicyNet {
public:
    PolicyNet() = default;
    PolicyNet(const PolicyArch& arch, uint64_t seed) : arch_(arch) {
        using namespace numkern;
        Rng rng(seed_mix(seed, 0xb0));
        int in = arch.n_s;
        for (size_t i = 0; i < arch.channels.size(); ++i) {
            auto conv = std::make_unique<Conv1d>(strformat("pi.conv%zu", i + 1), in,
                                                 arch.channels[i], arch.kernel, arch.stride,
                                                 arch.pad);
            conv->init(rng, arch.leaky);
            net_.add(std::move(conv));
            net_.add(std::make_unique<BatchNorm1d>(strformat("pi.bn%zu", i + 1),
                                                   arch.channels[i], arch.bn_eps,
                                                   arch.bn_momentum));
            net_.add(std::make_unique<LeakyReLU>(arch.leaky));
            in = arch.channels[i];
        }
        net_.add(std::make_unique<Flatten>());
        auto head = std::make_unique<Linear>("pi.head", arch.flat_dim(), arch.n_a);
        head->init(rng, 0.0);
        net_.add(std::move(head));
        net_.add(std::make_unique<Tanh>());
    }

    const PolicyArch& arch() const { return arch_; }
    Sequential& net() { return net_; }

    // (B, n_a, 1) in [-1, 1]
    Tensor3 forward_batch(const Tensor3& x, bool train) { return net_.forward(x, train); }

    std::array<double, 5> act_norm(const Mat& window) {
        Tensor3 x = trajdata::window_to_tensor(window);
        Tensor3 y = net_.forward(x, false);
        std::array<double, 5> out{};
        for (int i = 0; i < arch_.n_a && i < 5; ++i) out[i] = y.at(0, i, 0);
        return out;
    }

    std::vector<Param*> params() { return net_.params(); }
    std::vector<std::pair<std::string, std::vector<double>*>> buffers() {
        return net_.buffers();
    }
    void save(const std::string& path) { numkern::save_checkpoint(path, params(), buffers()); }
    void load(const std::string& path) { numkern::load_checkpoint(path, params(), buffers()); }

private:
    PolicyArch arch_;
    Sequential net_;
};

// parameter copy: the clone's outputs match the original's exactly
inline PolicyNet clone_expert_policy(const PolicyNet& expert) { return expert; }

// ----------------------------------------------------------------------------
// Behavioural cloning
// ----------------------------------------------------------------------------
struct BcConfig {
    double lr = 1e-3;
    double lr_decay = 1.0;  // per-epoch multiplicative decay
    int batch = 64;
    int epochs = 60;
    double val_split = 0.2;
    uint64_t seed = 0;

    void validate() const {
        if (!(lr > 0.0) || batch < 1 || epochs < 0)
            throw DataError("bc config: lr, batch, epochs must be positive");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0))
            throw DataError("bc config: lr decay must be in (0, 1]");
        if (!(val_split >= 0.0 && val_split < 1.0))
            throw DataError("bc config: val split must be in [0, 1)");
    }
};

struct BcEpoch {
    double train_mse = 0.0;
    double val_mse = 0.0;
};

namespace detail {

// targets in normalized action units, clamped just inside the tanh range
inline Mat normalized_targets(const Mat& labels, const cutsim::ActionBounds& bounds) {
    Mat t = evalstat::normalize_actions(labels, bounds);
    for (auto& v : t.v) {
        if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9)
            throw DataError("train_bc: label outside action bounds");
        v = std::min(0.999, std::max(-0.999, v));
    }
    return t;
}

inline void fill_batch(const styletx::AdaptedDataset& ds, const std::vector<int>& idx,
                       size_t pos, int b, Tensor3& x) {
    const int n = ds.window, c = ds.n_s;
    if (x.b != b || x.c != c || x.l != n) x = Tensor3(b, c, n);
    for (int i = 0; i < b; ++i) {
        const Mat& w = ds.windows[idx[pos + i]];
        for (int r = 0; r < n; ++r)
            for (int ch = 0; ch < c; ++ch) x.at(i, ch, r) = w.at(r, ch);
    }
}

}  // namespace detail

inline std::vector<BcEpoch> train_bc(PolicyNet& policy, const styletx::AdaptedDataset& ds,
                                     const cutsim::ActionBounds& bounds, const BcConfig& cfg) {
    cfg.validate();
    if (ds.windows.empty()) throw DataError("train_bc: empty dataset");
    const Mat targets = detail::normalized_targets(ds.labels, bounds);
    const int n_a = policy.arch().n_a;

    std::vector<int> order(ds.windows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
    Rng rng(seed_mix(cfg.seed, 0xbc));
    rng.shuffle(order);
    const int n_val = (int)((double)order.size() * cfg.val_split);
    std::vector<int> val_idx(order.begin(), order.begin() + n_val);
    std::vector<int> train_idx(order.begin() + n_val, order.end());
    if (train_idx.empty()) throw DataError("train_bc: empty training split");

    auto params = policy.params();
    numkern::AdamState adam;
    adam.init(params);
    numkern::AdamConfig acfg;
    acfg.lr = cfg.lr;

    auto eval_mse = [&](const std::vector<int>& idx) {
        if (idx.empty()) return 0.0;
        double se = 0.0;
        Tensor3 x;
        const int chunk = 128;
        for (size_t pos = 0; pos < idx.size(); pos += chunk) {
            const int b = (int)std::min((size_t)chunk, idx.size() - pos);
            detail::fill_batch(ds, idx, pos, b, x);
            Tensor3 y = policy.forward_batch(x, false);
            for (int i = 0; i < b; ++i)
                for (int a = 0; a < n_a; ++a) {
                    const double d = y.at(i, a, 0) - targets.at(idx[pos + i], a);
                    se += d * d;
                }
        }
        return se / ((double)idx.size() * n_a);
    };

    std::vector<BcEpoch> history;
    Tensor3 x;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        acfg.lr = cfg.lr * std::pow(cfg.lr_decay, (double)epoch);
        rng.shuffle(train_idx);
        double train_se = 0.0;
        for (size_t pos = 0; pos < train_idx.size(); pos += (size_t)cfg.batch) {
            const int b = (int)std::min((size_t)cfg.batch, train_idx.size() - pos);
            detail::fill_batch(ds, train_idx, pos, b, x);
            for (auto* p : params) p->zero_grad();
            Tensor3 y = policy.forward_batch(x, true);
            Tensor3 g(b, n_a, 1);
            double se = 0.0;
            for (int i = 0; i < b; ++i)
                for (int a = 0; a < n_a; ++a) {
                    const double d = y.at(i, a, 0) - targets.at(train_idx[pos + i], a);
                    se += d * d;
                    g.at(i, a, 0) = 2.0 * d / ((double)b * n_a);
                }
            if (!std::isfinite(se))
                throw NumericError(strformat("train_bc: loss diverged at epoch %d", epoch));
            policy.net().backward(g);
            numkern::adam_step(params, adam, acfg);
            train_se += se;
        }
        BcEpoch e;
        e.train_mse = train_se / ((double)train_idx.size() * n_a);
        e.val_mse = val_idx.empty() ? e.train_mse : eval_mse(val_idx);
        history.push_back(e);
    }
    return history;
}

// ----------------------------------------------------------------------------
// Expert distillation: supervised regression of the policy network onto the
// scripted controller's outputs, so that pi_g = pi_e initialization is a
// literal parameter copy.
// ----------------------------------------------------------------------------
struct DistillReport {
    double rms_holdout = 0.0;  // normalized action units
    int n_train = 0;
    int n_holdout = 0;
};

// relabel raw observation windows with the scripted expert (the DAgger hook:
// windows may come from any policy's rollouts)
inline Mat relabel_with_expert(const std::vector<Mat>& raw_windows,
                               const cutsim::SimConfig& simcfg,
                               const cutsim::ExpertConfig& ecfg) {
    Mat labels((int)raw_windows.size(), cutsim::Action::dim);
    for (size_t i = 0; i < raw_windows.size(); ++i) {
        auto a = cutsim::scripted_expert(raw_windows[i], simcfg, ecfg).to_array();
        for (int c = 0; c < cutsim::Action::dim; ++c) labels.at((int)i, c) = a[c];
    }
    return labels;
}

inline PolicyNet distill_expert(const PolicyArch& arch, const std::vector<Mat>& raw_windows,
                                const cutsim::SimConfig& simcfg,
                                const cutsim::ExpertConfig& ecfg,
                                const trajdata::NormStats& stats, const BcConfig& bc,
                                uint64_t init_seed, DistillReport* report = nullptr) {
    if (raw_windows.empty()) throw DataError("distill_expert: no windows");
    Mat labels = relabel_with_expert(raw_windows, simcfg, ecfg);

    styletx::AdaptedDataset ds;
    ds.window = raw_windows[0].rows;
    ds.n_s = raw_windows[0].cols;
    ds.n_a = cutsim::Action::dim;
    ds.labels = labels;
    for (const auto& w : raw_windows) {
        Mat norm = w;
        trajdata::normalize_window(norm, stats);
        ds.windows.push_back(std::move(norm));
    }

    // holdout for the distillation report
    std::vector<int> order(ds.windows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
    Rng rng(seed_mix(bc.seed, 0xd1));
    rng.shuffle(order);
    const int n_hold = std::max(1, (int)(order.size() / 5));
    std::vector<int> hold(order.begin(), order.begin() + n_hold);
    std::vector<int> train(order.begin() + n_hold, order.end());
    if (train.empty()) throw DataError("distill_expert: not enough windows");

    styletx::AdaptedDataset train_ds;
    train_ds.window = ds.window;
    train_ds.n_s = ds.n_s;
    train_ds.n_a = ds.n_a;
    train_ds.labels = Mat((int)train.size(), ds.n_a);
    for (size_t i = 0; i < train.size(); ++i) {
        train_ds.windows.push_back(ds.windows[train[i]]);
        for (int c = 0; c < ds.n_a; ++c) train_ds.labels.at((int)i, c) = ds.labels.at(train[i], c);
    }

    PolicyNet net(arch, init_seed);
    BcConfig cfg = bc;
    cfg.val_split = 0.0;
    train_bc(net, train_ds, simcfg.bounds, cfg);

    if (report) {
        const Mat targets = detail::normalized_targets(ds.labels, simcfg.bounds);
        double se = 0.0;
        for (int idx : hold) {
            auto out = net.act_norm(ds.windows[idx]);
            for (int a = 0; a < ds.n_a; ++a) {
                const double d = out[a] - targets.at(idx, a);
                se += d * d;
            }
        }
        report->rms_holdout = std::sqrt(se / ((double)hold.size() * ds.n_a));
        report->n_train = (int)train.size();
        report->n_holdout = (int)hold.size();
    }
    return net;
}

// ----------------------------------------------------------------------------
// Policy wrappers and evaluation
// ----------------------------------------------------------------------------
inline cutsim::Policy make_net_policy(const PolicyNet& net, const trajdata::NormStats& stats,
                                      const cutsim::ActionBounds& bounds) {
    auto p = std::make_shared<PolicyNet>(net);
    return [p, stats, bounds](const Mat& w_raw) {
        Mat w = w_raw;
        trajdata::normalize_window(w, stats);
        return cutsim::action_from_norm(p->act_norm(w), bounds);
    };
}

using PolicyFactory = std::function<cutsim::Policy(uint64_t episode_seed)>;

struct EvalEpisode {
    cutsim::EpisodeMeta meta;
    evalstat::EpisodeMetrics metrics;
    trajdata::Trajectory traj;  // populated only when keep_trajectories is set
};

inline std::vector<EvalEpisode> evaluate_policy(const PolicyFactory& factory,
                                                const cutsim::SimConfig& cfg, int n_episodes,
                                                uint64_t seed,
                                                const std::vector<Mat>& expert_refs,
                                                const evalstat::MetricsConfig& mcfg,
                                                int jobs = 1, bool keep_trajectories = false) {
    std::vector<EvalEpisode> out(n_episodes);
    parallel_for(n_episodes, jobs, [&](int i, int) {
        const uint64_t ep_seed = seed_mix(seed, (uint64_t)i);
        auto policy = factory(ep_seed);
        auto res = cutsim::run_episode(cfg, policy, ep_seed);
        EvalEpisode e;
        e.meta = res.meta;
        if (res.traj.length() > 0) e.metrics = evalstat::episode_metrics(res.traj, res.meta, expert_refs, mcfg);
        e.metrics.fault = res.meta.fault;
        if (keep_trajectories) e.traj = std::move(res.traj);
        out[i] = std::move(e);
    });
    return out;
}

}  // namespace trajstyle::adapt
