// ============================================================================
// styletx.hpp - Neural style transfer on trajectory windows.
//
// Losses over encoder feature maps F (channels N_l x positions M_l):
//   content:  L_c = sum_l sum_ij (1/(2 N_l)) (F_c - F_g)^2
//   style:    L_s = sum_l sum_ij (1/(4 N_l^2 M_l^2)) (G_s - G_g)^2,  G = F F^T
// The generated window starts at the content window and is optimized directly
// with Adam; the encoder stays frozen in eval mode. Only the weight ratio
// matters to Adam, so w_s = 1 and w_c = ratio.
// ============================================================================

#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "trajstyle/common.hpp"
#include "trajstyle/numkern.hpp"
#include "trajstyle/pairing.hpp"
#include "trajstyle/trajdata.hpp"
#include "trajstyle/vae.hpp"

namespace trajstyle::styletx {

using numkern::Param;
using trajdata::Window;
using vae::FeatureStack;

// ----------------------------------------------------------------------------
// Gram matrix and losses
// ----------------------------------------------------------------------------
inline Mat gram(const Mat& f) {
    Mat g(f.rows, f.rows);
    matmul(f.v.data(), f.v.data(), g.v.data(), f.rows, f.cols, f.rows, false, true);
    return g;
}

inline double content_loss(const FeatureStack& fc, const FeatureStack& fg) {
    if (fc.layer_indices != fg.layer_indices)
        throw DataError("content_loss: layer set mismatch");
    double loss = 0.0;
    for (size_t l = 0; l < fc.features.size(); ++l) {
        const Mat& a = fc.features[l];
        const Mat& b = fg.features[l];
        if (!a.same_shape(b)) throw DataError("content_loss: feature shape mismatch");
        const double n_l = a.rows;
        double s = 0.0;
        for (size_t i = 0; i < a.v.size(); ++i) {
            const double d = a.v[i] - b.v[i];
            s += d * d;
        }
        loss += s / (2.0 * n_l);
    }
    return loss;
}

inline double style_loss(const FeatureStack& fs, const FeatureStack& fg) {
    if (fs.layer_indices != fg.layer_indices)
        throw DataError("style_loss: layer set mismatch");
    double loss = 0.0;
    for (size_t l = 0; l < fs.features.size(); ++l) {
        const Mat& a = fs.features[l];
        const Mat& b = fg.features[l];
        if (a.rows != b.rows || a.cols != b.cols)
            throw DataError("style_loss: feature shape mismatch");
        const double n_l = a.rows, m_l = a.cols;
        Mat ga = gram(a), gb = gram(b);
        double s = 0.0;
        for (size_t i = 0; i < ga.v.size(); ++i) {
            const double d = ga.v[i] - gb.v[i];
            s += d * d;
        }
        loss += s / (4.0 * n_l * n_l * m_l * m_l);
    }
    return loss;
}

// ----------------------------------------------------------------------------
// Transfer configuration and optimization
// ----------------------------------------------------------------------------
struct TransferConfig {
    double content_style_ratio = 0.02;  // w_c / w_s
    double style_weight = 1.0;          // w_s; 0 degenerates to the identity translation
    double lr = 0.01;
    int iterations = 1000;
    std::vector<int> content_layers{5};
    std::vector<int> style_layers{2, 5, 7};
    bool log_history = true;
    bool early_stop = false;        // optional stop on relative loss change
    double early_stop_rel = 1e-6;

    void validate() const {
        if (!(content_style_ratio > 0.0)) throw DataError("transfer: ratio must be > 0");
        if (style_weight < 0.0) throw DataError("transfer: style weight must be >= 0");
        if (iterations < 1) throw DataError("transfer: iterations must be >= 1");
    }
};

struct TransferIter {
    double total = 0.0;
    double content = 0.0;          // unweighted
    double style = 0.0;            // unweighted
    double content_weighted = 0.0;
    double style_weighted = 0.0;
};

struct TransferResult {
    Mat generated;
    std::vector<TransferIter> history;
    double final_content = 0.0;
    double final_style = 0.0;
};

// Precomputed targets for one content/style pair under a fixed encoder.
struct TransferTargets {
    std::vector<Mat> content_features;  // at content layers
    std::vector<Mat> style_grams;       // at style layers
};

inline TransferTargets make_targets(vae::EncoderNet& enc, const Mat& content, const Mat& style,
                                    const TransferConfig& cfg) {
    TransferTargets t;
    auto fc = vae::extract_features(enc, content, cfg.content_layers);
    t.content_features = std::move(fc.features);
    auto fs = vae::extract_features(enc, style, cfg.style_layers);
    for (const auto& f : fs.features) t.style_grams.push_back(gram(f));
    return t;
}

// One evaluation of the transfer objective at the given window, against
// precomputed targets. Fills grad (same layout as the window) when non-null.
inline TransferIter transfer_objective(const Mat& window, const TransferTargets& targets,
                                       vae::EncoderNet& enc, const TransferConfig& cfg,
                                       Mat* grad) {
    const double w_s = cfg.style_weight;
    const double w_c = cfg.content_style_ratio * (w_s == 0.0 ? 1.0 : w_s);

    std::set<int> tap_set(cfg.content_layers.begin(), cfg.content_layers.end());
    tap_set.insert(cfg.style_layers.begin(), cfg.style_layers.end());
    const int deepest = *tap_set.rbegin();

    Tensor3 x(1, window.cols, window.rows);
    for (int r = 0; r < window.rows; ++r)
        for (int c = 0; c < window.cols; ++c) x.at(0, c, r) = window.at(r, c);

    std::vector<Tensor3> taps;
    enc.net().forward(x, false, deepest, &taps);

    std::map<int, Tensor3> tap_grads;
    auto add_tap = [&](int idx, Tensor3&& g) {
        auto pos = tap_grads.find(idx);
        if (pos == tap_grads.end())
            tap_grads.emplace(idx, std::move(g));
        else
            for (size_t i = 0; i < pos->second.v.size(); ++i) pos->second.v[i] += g.v[i];
    };

    TransferIter it;
    for (size_t l = 0; l < cfg.content_layers.size(); ++l) {
        const int idx = cfg.content_layers[l];
        const Tensor3& t = taps[idx];
        const Mat& target = targets.content_features[l];
        const double n_l = t.c;
        Tensor3 g(1, t.c, t.l, 0.0);
        double s = 0.0;
        for (int c = 0; c < t.c; ++c)
            for (int p = 0; p < t.l; ++p) {
                const double d = t.at(0, c, p) - target.at(c, p);
                s += d * d;
                g.at(0, c, p) = w_c * d / n_l;
            }
        it.content += s / (2.0 * n_l);
        if (grad) add_tap(idx, std::move(g));
    }

    for (size_t l = 0; l < cfg.style_layers.size(); ++l) {
        const int idx = cfg.style_layers[l];
        const Tensor3& t = taps[idx];
        const double n_l = t.c, m_l = t.l;
        Mat fg(t.c, t.l);
        for (int c = 0; c < t.c; ++c)
            for (int p = 0; p < t.l; ++p) fg.at(c, p) = t.at(0, c, p);
        Mat gg = gram(fg);
        const Mat& gs = targets.style_grams[l];
        double s = 0.0;
        Mat diff(gg.rows, gg.cols);
        for (size_t i = 0; i < gg.v.size(); ++i) {
            diff.v[i] = gg.v[i] - gs.v[i];
            s += diff.v[i] * diff.v[i];
        }
        it.style += s / (4.0 * n_l * n_l * m_l * m_l);
        if (grad) {
            // dL/dF = (G_g - G_s) F / (N_l^2 M_l^2), G symmetric
            Mat gf(t.c, t.l);
            matmul(diff.v.data(), fg.v.data(), gf.v.data(), t.c, t.c, t.l);
            const double scale = w_s / (n_l * n_l * m_l * m_l);
            Tensor3 g(1, t.c, t.l);
            for (int c = 0; c < t.c; ++c)
                for (int p = 0; p < t.l; ++p) g.at(0, c, p) = scale * gf.at(c, p);
            add_tap(idx, std::move(g));
        }
    }

    it.content_weighted = w_c * it.content;
    it.style_weighted = w_s * it.style;
    it.total = it.content_weighted + it.style_weighted;

    if (grad) {
        Tensor3 gx = enc.net().backward_taps(tap_grads);
        if (grad->rows != window.rows || grad->cols != window.cols)
            *grad = Mat(window.rows, window.cols);
        for (int r = 0; r < window.rows; ++r)
            for (int c = 0; c < window.cols; ++c) grad->at(r, c) = gx.at(0, c, r);
    }
    return it;
}

// style must already be mean-aligned to content (align_mean).
inline TransferResult transfer(const Mat& content, const Mat& style, vae::EncoderNet& enc,
                               const TransferConfig& cfg) {
    cfg.validate();
    if (!content.same_shape(style)) throw DataError("transfer: content/style shape mismatch");
    TransferTargets targets = make_targets(enc, content, style, cfg);

    Param window("window", {content.rows, content.cols});
    window.value = content.v;
    numkern::AdamState adam;
    std::vector<Param*> params{&window};
    adam.init(params);
    numkern::AdamConfig acfg;
    acfg.lr = cfg.lr;

    TransferResult res;
    Mat wview(content.rows, content.cols), grad;
    double prev_total = 0.0;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        wview.v = window.value;
        TransferIter it = transfer_objective(wview, targets, enc, cfg, &grad);
        if (!std::isfinite(it.total))
            throw NumericError(strformat("transfer: nonfinite loss at iteration %d", iter));
        if (cfg.log_history) res.history.push_back(it);
        res.final_content = it.content;
        res.final_style = it.style;

        // already at the optimum (style == content, or w_s = 0 with the
        // content-initialized window): return the content bitwise
        if (iter == 0 && it.total == 0.0) break;

        window.grad = grad.v;
        numkern::adam_step(params, adam, acfg);

        if (cfg.early_stop && iter > 0 &&
            std::fabs(it.total - prev_total) < cfg.early_stop_rel * std::max(1.0, prev_total))
            break;
        prev_total = it.total;
    }

    res.generated = Mat(content.rows, content.cols);
    res.generated.v = window.value;
    return res;
}


// ----------------------------------------------------------------------------
// Weight-ratio sweep: per-pair final unweighted losses, normalized per pair by
// the maximum across the swept ratios, then averaged over the batch.
// ----------------------------------------------------------------------------
struct SweepRow {
    double ratio = 0.0;
    double mean_content = 0.0;  // normalized to [0, 1] per pair
    double mean_style = 0.0;
};

inline std::vector<SweepRow> weight_sweep(const std::vector<Mat>& contents,
                                          const std::vector<Mat>& styles, vae::EncoderNet& enc,
                                          const std::vector<double>& ratios,
                                          const TransferConfig& base_cfg, int jobs = 1) {
    if (contents.empty() || contents.size() != styles.size())
        throw DataError("weight_sweep: need equal nonempty content/style batches");
    const size_t n_pairs = contents.size(), n_ratios = ratios.size();
    Mat lc((int)n_pairs, (int)n_ratios), ls((int)n_pairs, (int)n_ratios);

    std::vector<std::unique_ptr<vae::EncoderNet>> clones;
    const int n_workers = std::max(1, jobs);
    for (int w = 0; w < n_workers; ++w) clones.push_back(std::make_unique<vae::EncoderNet>(enc));

    parallel_for((int)(n_pairs * n_ratios), jobs, [&](int idx, int worker) {
        const int p = idx / (int)n_ratios, r = idx % (int)n_ratios;
        TransferConfig cfg = base_cfg;
        cfg.content_style_ratio = ratios[r];
        cfg.log_history = false;
        auto res = transfer(contents[p], styles[p], *clones[worker], cfg);
        lc.at(p, r) = res.final_content;
        ls.at(p, r) = res.final_style;
    });

    std::vector<SweepRow> rows(n_ratios);
    for (size_t r = 0; r < n_ratios; ++r) rows[r].ratio = ratios[r];
    for (size_t p = 0; p < n_pairs; ++p) {
        double max_c = 0.0, max_s = 0.0;
        for (size_t r = 0; r < n_ratios; ++r) {
            max_c = std::max(max_c, lc.at((int)p, (int)r));
            max_s = std::max(max_s, ls.at((int)p, (int)r));
        }
        for (size_t r = 0; r < n_ratios; ++r) {
            rows[r].mean_content += max_c > 0.0 ? lc.at((int)p, (int)r) / max_c : 0.0;
            rows[r].mean_style += max_s > 0.0 ? ls.at((int)p, (int)r) / max_s : 0.0;
        }
    }
    for (auto& row : rows) {
        row.mean_content /= (double)n_pairs;
        row.mean_style /= (double)n_pairs;
    }
    return rows;
}

inline void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << "ratio,mean_content,mean_style\n";
    for (const auto& r : rows)
        f << fmt_double(r.ratio) << "," << fmt_double(r.mean_content) << ","
          << fmt_double(r.mean_style) << "\n";
}

// ----------------------------------------------------------------------------
// Adapted dataset: one generated window per content window, labeled with the
// expert action at the content window's final timestep.
// ----------------------------------------------------------------------------
struct AdaptedRecord {
    std::string content_id;
    int content_start = 0;
    std::string style_id;
    int style_start = 0;
    double similarity = 0.0;
    double final_content_loss = 0.0;
    double final_style_loss = 0.0;
};

struct AdaptedDataset {
    int window = 0;
    int n_s = 0;
    int n_a = 0;
    std::vector<Mat> windows;  // generated observation windows (normalized space)
    Mat labels;                // K x N_A raw expert actions
    std::vector<AdaptedRecord> provenance;
};

inline AdaptedDataset build_adapted_dataset(const pairing::PairingResult& pairs,
                                            const std::vector<Window>& contents,
                                            const Mat& content_labels,
                                            const std::vector<Window>& styles,
                                            vae::EncoderNet& enc, const TransferConfig& cfg,
                                            int jobs = 1) {
    if ((int)contents.size() != content_labels.rows)
        throw DataError(strformat("build_adapted_dataset: %zu content windows but %d expert "
                                  "action labels",
                                  contents.size(), content_labels.rows));
    if (pairs.match.size() != contents.size())
        throw DataError("build_adapted_dataset: pairing/content size mismatch");

    AdaptedDataset out;
    out.window = contents.empty() ? 0 : contents[0].data.rows;
    out.n_s = contents.empty() ? 0 : contents[0].data.cols;
    out.n_a = content_labels.cols;
    out.windows.resize(contents.size());
    out.labels = content_labels;
    out.provenance.resize(contents.size());

    std::vector<std::unique_ptr<vae::EncoderNet>> clones;
    const int n_workers = std::max(1, jobs);
    for (int w = 0; w < n_workers; ++w) clones.push_back(std::make_unique<vae::EncoderNet>(enc));

    parallel_for((int)contents.size(), jobs, [&](int i, int worker) {
        const Window& cw = contents[i];
        const Window& sw = styles[pairs.match[i]];
        Window aligned = trajdata::align_mean(cw, sw);
        auto res = transfer(cw.data, aligned.data, *clones[worker], cfg);
        out.windows[i] = std::move(res.generated);
        AdaptedRecord rec;
        rec.content_id = cw.trajectory_id;
        rec.content_start = cw.start_index;
        rec.style_id = sw.trajectory_id;
        rec.style_start = sw.start_index;
        rec.similarity = pairs.similarity[i];
        rec.final_content_loss = res.final_content;
        rec.final_style_loss = res.final_style;
        out.provenance[i] = rec;
    });
    return out;
}

// Identity translation (w_s = 0): the dataset degenerates to plain
// (content, expert action) pairs. Fast path that skips the optimizer.
inline AdaptedDataset build_identity_dataset(const std::vector<Window>& contents,
                                             const Mat& content_labels) {
    if ((int)contents.size() != content_labels.rows)
        throw DataError("build_identity_dataset: window/label count mismatch");
    AdaptedDataset out;
    out.window = contents.empty() ? 0 : contents[0].data.rows;
    out.n_s = contents.empty() ? 0 : contents[0].data.cols;
    out.n_a = content_labels.cols;
    out.labels = content_labels;
    for (const auto& w : contents) {
        out.windows.push_back(w.data);
        AdaptedRecord rec;
        rec.content_id = w.trajectory_id;
        rec.content_start = w.start_index;
        rec.style_id = w.trajectory_id;
        rec.style_start = w.start_index;
        rec.similarity = 1.0;
        out.provenance.push_back(rec);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Persistence: windows.csv (flattened rows), labels.csv, provenance.json
// ----------------------------------------------------------------------------
inline void save_adapted_dataset(const AdaptedDataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir + "/windows.csv");
        if (!f) throw DataError("cannot open for writing: " + dir + "/windows.csv");
        f << "idx";
        for (int r = 0; r < ds.window; ++r)
            for (int c = 0; c < ds.n_s; ++c) f << ",w" << r << "_" << c;
        f << "\n";
        for (size_t i = 0; i < ds.windows.size(); ++i) {
            f << i;
            for (double v : ds.windows[i].v) f << "," << fmt_double(v);
            f << "\n";
        }
    }
    {
        std::ofstream f(dir + "/labels.csv");
        if (!f) throw DataError("cannot open for writing: " + dir + "/labels.csv");
        f << "idx";
        for (int c = 0; c < ds.n_a; ++c) f << ",a" << c;
        f << "\n";
        for (int i = 0; i < ds.labels.rows; ++i) {
            f << i;
            for (int c = 0; c < ds.n_a; ++c) f << "," << fmt_double(ds.labels.at(i, c));
            f << "\n";
        }
    }
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : ds.provenance)
        j.push_back({{"content_id", r.content_id},
                     {"content_start", r.content_start},
                     {"style_id", r.style_id},
                     {"style_start", r.style_start},
                     {"similarity", r.similarity},
                     {"final_content_loss", r.final_content_loss},
                     {"final_style_loss", r.final_style_loss}});
    nlohmann::json meta{{"window", ds.window}, {"n_s", ds.n_s}, {"n_a", ds.n_a},
                        {"records", std::move(j)}};
    std::ofstream f(dir + "/provenance.json");
    if (!f) throw DataError("cannot open for writing: " + dir + "/provenance.json");
    f << meta.dump(2) << "\n";
}

inline AdaptedDataset load_adapted_dataset(const std::string& dir) {
    AdaptedDataset ds;
    std::ifstream mf(dir + "/provenance.json");
    if (!mf) throw DataError("missing file: " + dir + "/provenance.json");
    nlohmann::json meta;
    try {
        mf >> meta;
    } catch (const std::exception& e) {
        throw DataError(dir + "/provenance.json: parse error: " + e.what());
    }
    ds.window = meta.at("window").get<int>();
    ds.n_s = meta.at("n_s").get<int>();
    ds.n_a = meta.at("n_a").get<int>();
    for (const auto& r : meta.at("records")) {
        AdaptedRecord rec;
        rec.content_id = r.at("content_id").get<std::string>();
        rec.content_start = r.at("content_start").get<int>();
        rec.style_id = r.at("style_id").get<std::string>();
        rec.style_start = r.at("style_start").get<int>();
        rec.similarity = r.at("similarity").get<double>();
        rec.final_content_loss = r.at("final_content_loss").get<double>();
        rec.final_style_loss = r.at("final_style_loss").get<double>();
        ds.provenance.push_back(rec);
    }

    auto read_csv = [](const std::string& path, int expect_cols) {
        std::ifstream f(path);
        if (!f) throw DataError("missing file: " + path);
        std::string line;
        std::getline(f, line);  // header
        std::vector<std::vector<double>> rows;
        int rno = 0;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            ++rno;
            auto toks = trajdata::detail::split_csv_line(line);
            if ((int)toks.size() != expect_cols + 1)
                throw DataError(strformat("%s: row %d has %d columns, expected %d",
                                          path.c_str(), rno, (int)toks.size(), expect_cols + 1));
            std::vector<double> vals;
            for (int c = 1; c < (int)toks.size(); ++c)
                vals.push_back(trajdata::detail::parse_double(toks[c], path, rno, c));
            rows.push_back(std::move(vals));
        }
        return rows;
    };

    auto wrows = read_csv(dir + "/windows.csv", ds.window * ds.n_s);
    for (auto& r : wrows) {
        Mat w(ds.window, ds.n_s);
        w.v = std::move(r);
        ds.windows.push_back(std::move(w));
    }
    auto lrows = read_csv(dir + "/labels.csv", ds.n_a);
    ds.labels = Mat((int)lrows.size(), ds.n_a);
    for (size_t i = 0; i < lrows.size(); ++i)
        std::copy(lrows[i].begin(), lrows[i].end(), ds.labels.row((int)i));
    return ds;
}

}  // namespace trajstyle::styletx
