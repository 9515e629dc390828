// ============================================================================
// pairing.hpp - Latent-space content/style pairing: encode both datasets with
// the trained encoder (posterior means), build the pairwise cosine similarity
// matrix, take per-row argmax matches and report coverage statistics.
// ============================================================================

#pragma once

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "trajstyle/common.hpp"
#include "trajstyle/trajdata.hpp"
#include "trajstyle/vae.hpp"

namespace trajstyle::pairing {

using nlohmann::json;
using trajdata::Domain;
using trajdata::Window;

struct EmbeddingSet {
    Domain domain = Domain::source;
    std::vector<std::pair<std::string, int>> refs;  // (trajectory id, start index)
    Mat embeddings;                                 // K x latent, posterior means
    std::vector<double> norms;

    int count() const { return embeddings.rows; }
};

// Posterior means only; sampling plays no role in pairing.
inline EmbeddingSet embed_dataset(const std::vector<Window>& windows, vae::EncoderNet& enc,
                                  Domain tag) {
    EmbeddingSet set;
    set.domain = tag;
    const int latent = enc.arch().latent;
    set.embeddings = Mat((int)windows.size(), latent);
    set.norms.resize(windows.size(), 0.0);
    const std::vector<double> eps(latent, 0.0);
    for (size_t i = 0; i < windows.size(); ++i) {
        auto code = enc.encode(windows[i].data, eps);
        std::copy(code.mu.begin(), code.mu.end(), set.embeddings.row((int)i));
        double n2 = 0.0;
        for (double v : code.mu) n2 += v * v;
        set.norms[i] = std::sqrt(n2);
        set.refs.push_back({windows[i].trajectory_id, windows[i].start_index});
    }
    return set;
}

// S_ij = z_i . z_j / (|z_i| |z_j|), fixed summation order.
inline Mat similarity_matrix(const EmbeddingSet& content, const EmbeddingSet& style) {
    const int latent = content.embeddings.cols;
    if (style.embeddings.cols != latent)
        throw DataError("similarity_matrix: latent dimension mismatch");
    auto check_norms = [](const EmbeddingSet& s, const char* which) {
        for (size_t i = 0; i < s.norms.size(); ++i)
            if (!(s.norms[i] > 0.0))
                throw DataError(strformat("similarity_matrix: zero-norm %s embedding for "
                                          "window %s@%d",
                                          which, s.refs[i].first.c_str(), s.refs[i].second));
    };
    check_norms(content, "content");
    check_norms(style, "style");
    Mat s(content.count(), style.count());
    for (int i = 0; i < content.count(); ++i) {
        const double* zi = content.embeddings.row(i);
        for (int j = 0; j < style.count(); ++j) {
            const double* zj = style.embeddings.row(j);
            double dot = 0.0;
            for (int k = 0; k < latent; ++k) dot += zi[k] * zj[k];
            s.at(i, j) = dot / (content.norms[i] * style.norms[j]);
        }
    }
    return s;
}

struct PairingResult {
    std::vector<int> match;            // per content row: matched style index
    std::vector<double> similarity;    // similarity of the match
    std::vector<int> style_match_counts;
    std::vector<double> style_best_sim;  // per style row: best similarity over content
    double coverage = 0.0;               // fraction of style windows matched at least once
    double gini = 0.0;                   // concentration of the match-count histogram
};

inline double gini_coefficient(const std::vector<int>& counts) {
    const size_t n = counts.size();
    if (n == 0) return 0.0;
    double total = 0.0;
    for (int c : counts) total += c;
    if (total <= 0.0) return 0.0;
    double abs_diff = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) abs_diff += std::fabs((double)counts[i] - counts[j]);
    return abs_diff / (2.0 * (double)n * total);
}

// Ties break to the lowest style index.
inline PairingResult match(const EmbeddingSet& content, const EmbeddingSet& style) {
    if (content.count() == 0 || style.count() == 0)
        throw DataError("match: both embedding sets must be nonempty");
    Mat s = similarity_matrix(content, style);
    PairingResult res;
    res.match.resize(content.count());
    res.similarity.resize(content.count());
    res.style_match_counts.assign(style.count(), 0);
    res.style_best_sim.assign(style.count(), -1.0);
    for (int i = 0; i < content.count(); ++i) {
        int best = 0;
        double best_sim = s.at(i, 0);
        for (int j = 1; j < style.count(); ++j)
            if (s.at(i, j) > best_sim) {
                best_sim = s.at(i, j);
                best = j;
            }
        res.match[i] = best;
        res.similarity[i] = best_sim;
        res.style_match_counts[best]++;
    }
    for (int j = 0; j < style.count(); ++j)
        for (int i = 0; i < content.count(); ++i)
            res.style_best_sim[j] = std::max(res.style_best_sim[j], s.at(i, j));
    int matched = 0;
    for (int c : res.style_match_counts)
        if (c > 0) ++matched;
    res.coverage = (double)matched / style.count();
    res.gini = gini_coefficient(res.style_match_counts);
    return res;
}

// ----------------------------------------------------------------------------
// Persistence
// ----------------------------------------------------------------------------
inline void save_pairing_json(const PairingResult& res, const std::string& path) {
    json j;
    j["pairs"] = json::array();
    for (size_t i = 0; i < res.match.size(); ++i)
        j["pairs"].push_back({{"content_idx", i},
                              {"style_idx", res.match[i]},
                              {"similarity", res.similarity[i]}});
    j["coverage"] = res.coverage;
    j["gini"] = res.gini;
    j["style_match_counts"] = res.style_match_counts;
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

inline PairingResult load_pairing_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("missing file: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw DataError(path + ": parse error: " + e.what());
    }
    PairingResult res;
    for (const auto& p : j.at("pairs")) {
        res.match.push_back(p.at("style_idx").get<int>());
        res.similarity.push_back(p.at("similarity").get<double>());
    }
    res.coverage = j.at("coverage").get<double>();
    res.gini = j.at("gini").get<double>();
    res.style_match_counts = j.at("style_match_counts").get<std::vector<int>>();
    return res;
}

// CSV export of embeddings and match statistics, one row per window, content
// rows first. Stands in for projection plots; feed it to any external tool.
inline void export_embeddings(const EmbeddingSet& content, const EmbeddingSet& style,
                              const PairingResult& res, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    const int latent = content.embeddings.cols;
    f << "domain,traj_id,start,matched_style_idx,best_similarity,match_count";
    for (int k = 0; k < latent; ++k) f << ",z" << k;
    f << "\n";
    for (int i = 0; i < content.count(); ++i) {
        f << "content," << content.refs[i].first << "," << content.refs[i].second << ","
          << res.match[i] << "," << fmt_double(res.similarity[i]) << ",0";
        for (int k = 0; k < latent; ++k) f << "," << fmt_double(content.embeddings.at(i, k));
        f << "\n";
    }
    for (int j = 0; j < style.count(); ++j) {
        f << "style," << style.refs[j].first << "," << style.refs[j].second << ",-1,"
          << fmt_double(res.style_best_sim[j]) << "," << res.style_match_counts[j];
        for (int k = 0; k < latent; ++k) f << "," << fmt_double(style.embeddings.at(j, k));
        f << "\n";
    }
}

}  // namespace trajstyle::pairing
