// ============================================================================
// trajdata.hpp - Trajectory/window data model, windowing, normalization
// statistics and CSV/JSON dataset persistence.
//
// File format: one CSV per trajectory with header t,s0..s{N_S-1},a0..a{N_A-1}
// (first column is the integer sample index) plus one manifest.json with
// fields {domain, n_s, n_a, dt, files[], norm:{mean[], std[]}}.
// ============================================================================

#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "trajstyle/common.hpp"

namespace trajstyle::trajdata {

using nlohmann::json;

enum class Domain { source, target };

inline std::string domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }
inline Domain domain_from_name(const std::string& s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    throw DataError("unknown domain tag: " + s);
}

// ----------------------------------------------------------------------------
// Core types
// ----------------------------------------------------------------------------
struct Trajectory {
    std::string id;
    double dt = 0.0;       // seconds per sample
    Mat states;            // T x N_S
    Mat actions;           // T x N_A
    Domain domain = Domain::source;

    int length() const { return states.rows; }

    // zero-row trajectories are allowed as the degenerate zero-length-path case
    void validate() const {
        if (states.rows != actions.rows)
            throw DataError("trajectory " + id + ": state/action row count mismatch");
        if (!(dt > 0.0)) throw DataError("trajectory " + id + ": dt must be positive");
        if (!states.all_finite() || !actions.all_finite())
            throw DataError("trajectory " + id + ": nonfinite entry");
    }
};

struct Window {
    std::string trajectory_id;
    int start_index = 0;
    Mat data;                          // N x N_S
    std::vector<double> channel_means; // removed during alignment, zero if unaligned

    Window() = default;
    Window(std::string id, int start, Mat d)
        : trajectory_id(std::move(id)), start_index(start), data(std::move(d)),
          channel_means(data.cols, 0.0) {}
};

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<int> zero_variance; // flagged channels, std forced to 1
};

struct TrajDataset {
    Domain domain = Domain::source;
    int n_s = 0;
    int n_a = 0;
    double dt = 0.0;
    std::vector<Trajectory> trajectories;
    NormStats norm; // empty until computed or loaded

    bool empty() const { return trajectories.empty(); }
};

// ----------------------------------------------------------------------------
// Windowing
// ----------------------------------------------------------------------------
inline std::vector<Window> make_windows(const Trajectory& traj, int n, int stride = 1) {
    const int t = traj.length();
    if (n < 1) throw DataError("window size must be >= 1");
    if (stride < 1) throw DataError("window stride must be >= 1");
    if (n > t)
        throw DataError(strformat("trajectory %s: window size %d exceeds length %d",
                                  traj.id.c_str(), n, t));
    std::vector<Window> out;
    for (int start = 0; start + n <= t; start += stride) {
        Mat d(n, traj.states.cols);
        for (int r = 0; r < n; ++r)
            std::copy(traj.states.row(start + r), traj.states.row(start + r) + traj.states.cols,
                      d.row(r));
        out.emplace_back(traj.id, start, std::move(d));
    }
    return out;
}

// Reference into a dataset: (trajectory index, start row). Bulk enumeration is
// sorted by trajectory id then start so output order is deterministic.
struct WindowRef {
    int traj = 0;
    int start = 0;
};

inline std::vector<WindowRef> enumerate_windows(const TrajDataset& ds, int n, int stride) {
    std::vector<int> order(ds.trajectories.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return ds.trajectories[a].id < ds.trajectories[b].id;
    });
    std::vector<WindowRef> refs;
    for (int ti : order) {
        const Trajectory& tr = ds.trajectories[ti];
        if (tr.length() < n) {
            log_warn(strformat("skipping trajectory %s: length %d < window %d",
                               tr.id.c_str(), tr.length(), n));
            continue;
        }
        for (int s = 0; s + n <= tr.length(); s += stride) refs.push_back({ti, s});
    }
    return refs;
}

inline void fill_window(const TrajDataset& ds, const WindowRef& ref, int n, Mat& dst) {
    const Trajectory& tr = ds.trajectories[ref.traj];
    if (dst.rows != n || dst.cols != tr.states.cols) dst = Mat(n, tr.states.cols);
    for (int r = 0; r < n; ++r)
        std::copy(tr.states.row(ref.start + r), tr.states.row(ref.start + r) + tr.states.cols,
                  dst.row(r));
}

inline Window materialize_window(const TrajDataset& ds, const WindowRef& ref, int n) {
    Mat d;
    fill_window(ds, ref, n, d);
    return Window(ds.trajectories[ref.traj].id, ref.start, std::move(d));
}

// ----------------------------------------------------------------------------
// Normalization. Population std over the concatenated dataset; zero-variance
// channels are flagged and get std = 1.
// ----------------------------------------------------------------------------
inline NormStats compute_norm_stats(const TrajDataset& ds) {
    if (ds.empty()) throw DataError("cannot compute normalization stats of empty dataset");
    const int c = ds.trajectories.front().states.cols;
    NormStats st;
    st.mean.assign(c, 0.0);
    st.std.assign(c, 0.0);
    size_t rows = 0;
    for (const auto& tr : ds.trajectories) {
        for (int r = 0; r < tr.states.rows; ++r)
            for (int j = 0; j < c; ++j) st.mean[j] += tr.states.at(r, j);
        rows += (size_t)tr.states.rows;
    }
    for (int j = 0; j < c; ++j) st.mean[j] /= (double)rows;
    for (const auto& tr : ds.trajectories)
        for (int r = 0; r < tr.states.rows; ++r)
            for (int j = 0; j < c; ++j) {
                const double d = tr.states.at(r, j) - st.mean[j];
                st.std[j] += d * d;
            }
    for (int j = 0; j < c; ++j) {
        st.std[j] = std::sqrt(st.std[j] / (double)rows);
        if (st.std[j] <= 0.0) {
            log_warn(strformat("channel %d has zero variance, std forced to 1", j));
            st.zero_variance.push_back(j);
            st.std[j] = 1.0;
        }
    }
    return st;
}

inline void apply_norm(TrajDataset& ds, const NormStats& st) {
    for (auto& tr : ds.trajectories)
        for (int r = 0; r < tr.states.rows; ++r)
            for (int j = 0; j < tr.states.cols; ++j)
                tr.states.at(r, j) = (tr.states.at(r, j) - st.mean[j]) / st.std[j];
    ds.norm = st;
}

inline void invert_norm(TrajDataset& ds, const NormStats& st) {
    for (auto& tr : ds.trajectories)
        for (int r = 0; r < tr.states.rows; ++r)
            for (int j = 0; j < tr.states.cols; ++j)
                tr.states.at(r, j) = tr.states.at(r, j) * st.std[j] + st.mean[j];
    ds.norm = NormStats{};
}

inline void normalize_window(Mat& w, const NormStats& st) {
    for (int r = 0; r < w.rows; ++r)
        for (int j = 0; j < w.cols; ++j) w.at(r, j) = (w.at(r, j) - st.mean[j]) / st.std[j];
}

// ----------------------------------------------------------------------------
// Mean alignment: shift the style window per channel so its means match the
// content window's. Original style means are recorded in channel_means.
// ----------------------------------------------------------------------------
inline std::vector<double> channel_means_of(const Mat& m) {
    std::vector<double> mu(m.cols, 0.0);
    for (int r = 0; r < m.rows; ++r)
        for (int j = 0; j < m.cols; ++j) mu[j] += m.at(r, j);
    for (int j = 0; j < m.cols; ++j) mu[j] /= (double)m.rows;
    return mu;
}

inline Window align_mean(const Window& content, const Window& style) {
    if (!content.data.same_shape(style.data))
        throw DataError("align_mean: shape mismatch between content and style windows");
    const auto mu_c = channel_means_of(content.data);
    const auto mu_s = channel_means_of(style.data);
    Window out = style;
    for (int r = 0; r < out.data.rows; ++r)
        for (int j = 0; j < out.data.cols; ++j)
            out.data.at(r, j) += mu_c[j] - mu_s[j];
    out.channel_means = mu_s;
    return out;
}

// ----------------------------------------------------------------------------
// Persistence
// ----------------------------------------------------------------------------
namespace detail {

inline double parse_double(const std::string& tok, const std::string& file, int row, int col) {
    double x = 0.0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    auto r = std::from_chars(b, e, x);
    if (r.ec != std::errc{} || r.ptr != e)
        throw DataError(strformat("%s: row %d col %d: cannot parse '%s'", file.c_str(), row,
                                  col, tok.c_str()));
    if (!std::isfinite(x))
        throw DataError(strformat("%s: row %d col %d: nonfinite value", file.c_str(), row, col));
    return x;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

} // namespace detail

inline void save_trajectory_csv(const Trajectory& tr, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << "t";
    for (int j = 0; j < tr.states.cols; ++j) f << ",s" << j;
    for (int j = 0; j < tr.actions.cols; ++j) f << ",a" << j;
    f << "\n";
    for (int r = 0; r < tr.states.rows; ++r) {
        f << r;
        for (int j = 0; j < tr.states.cols; ++j) f << "," << fmt_double(tr.states.at(r, j));
        for (int j = 0; j < tr.actions.cols; ++j) f << "," << fmt_double(tr.actions.at(r, j));
        f << "\n";
    }
    if (!f) throw DataError("write failed: " + path);
}

inline Trajectory load_trajectory_csv(const std::string& path, int n_s, int n_a, double dt,
                                      Domain domain) {
    std::ifstream f(path);
    if (!f) throw DataError("missing file: " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError(path + ": empty file");
    auto header = detail::split_csv_line(line);
    if ((int)header.size() != 1 + n_s + n_a)
        throw DataError(strformat("%s: header has %d columns, expected %d", path.c_str(),
                                  (int)header.size(), 1 + n_s + n_a));
    if (header[0] != "t") throw DataError(path + ": malformed header, first column must be t");
    std::vector<double> sbuf, abuf;
    int row = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ++row;
        auto toks = detail::split_csv_line(line);
        if ((int)toks.size() != 1 + n_s + n_a)
            throw DataError(strformat("%s: row %d has %d columns, expected %d", path.c_str(),
                                      row, (int)toks.size(), 1 + n_s + n_a));
        for (int j = 0; j < n_s; ++j)
            sbuf.push_back(detail::parse_double(toks[1 + j], path, row, 1 + j));
        for (int j = 0; j < n_a; ++j)
            abuf.push_back(detail::parse_double(toks[1 + n_s + j], path, row, 1 + n_s + j));
    }
    Trajectory tr;
    tr.id = std::filesystem::path(path).stem().string();
    tr.dt = dt;
    tr.domain = domain;
    tr.states = Mat(row, n_s);
    tr.states.v = std::move(sbuf);
    tr.actions = Mat(row, n_a);
    tr.actions.v = std::move(abuf);
    tr.validate();
    return tr;
}

// Writes trajectories (one CSV each, named by trajectory id) plus
// manifest.json into dir. File order in the manifest is sorted.
inline void save_dataset(const TrajDataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    for (const auto& tr : ds.trajectories) {
        std::string name = tr.id + ".csv";
        save_trajectory_csv(tr, dir + "/" + name);
        files.push_back(name);
    }
    std::sort(files.begin(), files.end());
    json m;
    m["domain"] = domain_name(ds.domain);
    m["n_s"] = ds.n_s;
    m["n_a"] = ds.n_a;
    m["dt"] = ds.dt;
    m["files"] = files;
    m["norm"]["mean"] = ds.norm.mean;
    m["norm"]["std"] = ds.norm.std;
    m["norm"]["zero_variance"] = ds.norm.zero_variance;
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw DataError("cannot open for writing: " + dir + "/manifest.json");
    f << m.dump(2) << "\n";
}

inline TrajDataset load_dataset(const std::string& dir) {
    const std::string mpath = dir + "/manifest.json";
    std::ifstream f(mpath);
    if (!f) throw DataError("missing file: " + mpath);
    json m;
    try {
        f >> m;
    } catch (const std::exception& e) {
        throw DataError(mpath + ": parse error: " + e.what());
    }
    TrajDataset ds;
    ds.domain = domain_from_name(m.at("domain").get<std::string>());
    ds.n_s = m.at("n_s").get<int>();
    ds.n_a = m.at("n_a").get<int>();
    ds.dt = m.at("dt").get<double>();
    ds.norm.mean = m.at("norm").at("mean").get<std::vector<double>>();
    ds.norm.std = m.at("norm").at("std").get<std::vector<double>>();
    if (m.at("norm").contains("zero_variance"))
        ds.norm.zero_variance = m.at("norm").at("zero_variance").get<std::vector<int>>();
    auto files = m.at("files").get<std::vector<std::string>>();
    std::sort(files.begin(), files.end());
    for (const auto& name : files)
        ds.trajectories.push_back(load_trajectory_csv(dir + "/" + name, ds.n_s, ds.n_a, ds.dt,
                                                      ds.domain));
    return ds;
}

// Window <-> network tensor layout: tensor channel = state channel, tensor
// length = time.
inline Tensor3 window_to_tensor(const Mat& w) {
    Tensor3 x(1, w.cols, w.rows);
    for (int r = 0; r < w.rows; ++r)
        for (int j = 0; j < w.cols; ++j) x.at(0, j, r) = w.at(r, j);
    return x;
}

inline void windows_to_tensor(const std::vector<const Mat*>& ws, Tensor3& x) {
    const int n = ws[0]->rows, c = ws[0]->cols;
    if (x.b != (int)ws.size() || x.c != c || x.l != n) x = Tensor3((int)ws.size(), c, n);
    for (size_t b = 0; b < ws.size(); ++b)
        for (int r = 0; r < n; ++r)
            for (int j = 0; j < c; ++j) x.at((int)b, j, r) = ws[b]->at(r, j);
}

inline Mat tensor_to_window(const Tensor3& x, int batch = 0) {
    Mat w(x.l, x.c);
    for (int r = 0; r < x.l; ++r)
        for (int j = 0; j < x.c; ++j) w.at(r, j) = x.at(batch, j, r);
    return w;
}

}  // namespace trajstyle::trajdata
