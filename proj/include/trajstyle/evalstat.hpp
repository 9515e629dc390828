// ============================================================================
// evalstat.hpp - Episode metrics (completion time, path deviation, average
// force, MRV, normalized DTW against expert action references) and the
// statistical comparison suite: Box-Cox, one-way ANOVA, Kruskal-Wallis,
// Levene (Brown-Forsythe), Hedges' g and Holm-corrected pairwise tests.
//
// p-values come from hand-rolled regularized incomplete beta/gamma functions
// (continued fractions, ~1e-12 accuracy).
// ============================================================================

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "trajstyle/common.hpp"
#include "trajstyle/cutsim.hpp"
#include "trajstyle/trajdata.hpp"

namespace trajstyle::evalstat {

// ----------------------------------------------------------------------------
// Special functions
// ----------------------------------------------------------------------------
namespace sf {

inline double betacf(double a, double b, double x) {
    const int maxit = 400;
    const double eps = 1e-15, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= maxit; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

// regularized incomplete beta I_x(a, b)
inline double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lnbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(lnbt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// regularized lower incomplete gamma P(a, x) by series
inline double gamma_p_series(double a, double x) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// regularized upper incomplete gamma Q(a, x) by continued fraction
inline double gamma_q_cf(double a, double x) {
    const double fpmin = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / fpmin, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw DataError("gamma_q: invalid arguments");
    if (x == 0.0) return 1.0;
    return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

}  // namespace sf

inline double f_dist_sf(double f, double d1, double d2) {
    if (!(f >= 0.0)) throw DataError("f_dist_sf: negative statistic");
    if (std::isinf(f)) return 0.0;
    return sf::incbeta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

inline double t_dist_sf_two_sided(double t, double df) {
    return sf::incbeta(df / 2.0, 0.5, df / (df + t * t));
}

inline double chi2_sf(double x, double k) { return sf::gamma_q(k / 2.0, x / 2.0); }

inline double norm_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// ----------------------------------------------------------------------------
// Normalized dynamic time warping over multivariate series (rows = steps).
// Classic DP with per-step Euclidean cost, normalized by the length of the
// optimal warping path. Tie-breaks on backtracking prefer the diagonal.
// ----------------------------------------------------------------------------
enum class DtwNorm { path_length, max_length };

inline double dtw_normalized(const Mat& a, const Mat& b, DtwNorm norm = DtwNorm::path_length) {
    if (a.rows == 0 || b.rows == 0) throw DataError("dtw: empty input series");
    if (a.cols != b.cols) throw DataError("dtw: channel count mismatch");
    const int n = a.rows, m = b.rows;
    auto cost = [&](int i, int j) {
        double s = 0.0;
        for (int c = 0; c < a.cols; ++c) {
            const double d = a.at(i, c) - b.at(j, c);
            s += d * d;
        }
        return std::sqrt(s);
    };
    Mat dp(n, m);
    dp.at(0, 0) = cost(0, 0);
    for (int i = 1; i < n; ++i) dp.at(i, 0) = cost(i, 0) + dp.at(i - 1, 0);
    for (int j = 1; j < m; ++j) dp.at(0, j) = cost(0, j) + dp.at(0, j - 1);
    for (int i = 1; i < n; ++i)
        for (int j = 1; j < m; ++j)
            dp.at(i, j) =
                cost(i, j) + std::min({dp.at(i - 1, j - 1), dp.at(i - 1, j), dp.at(i, j - 1)});

    long k = 1;
    if (norm == DtwNorm::path_length) {
        int i = n - 1, j = m - 1;
        while (i > 0 || j > 0) {
            if (i == 0) {
                --j;
            } else if (j == 0) {
                --i;
            } else {
                const double diag = dp.at(i - 1, j - 1), up = dp.at(i - 1, j),
                             left = dp.at(i, j - 1);
                if (diag <= up && diag <= left) {
                    --i;
                    --j;
                } else if (up <= left) {
                    --i;
                } else {
                    --j;
                }
            }
            ++k;
        }
    } else {
        k = std::max(n, m);
    }
    return dp.at(n - 1, m - 1) / (double)k;
}

// ----------------------------------------------------------------------------
// Episode metrics
// ----------------------------------------------------------------------------
struct EpisodeMetrics {
    double completion_time = 0.0;     // s
    double avg_path_deviation = 0.0;  // mm, mean |normal deviation| over contact
    double avg_force = 0.0;           // N, mean force magnitude over contact
    double mrv = 0.0;                 // mm^3
    double dtw_to_expert = 0.0;       // normalized, dimensionless
    bool zero_contact = false;
    bool fault = false;
};

inline Mat normalize_actions(const Mat& actions, const cutsim::ActionBounds& bounds) {
    Mat out(actions.rows, actions.cols);
    for (int r = 0; r < actions.rows; ++r) {
        cutsim::Action a = cutsim::Action::from_array({actions.at(r, 0), actions.at(r, 1),
                                                       actions.at(r, 2), actions.at(r, 3),
                                                       actions.at(r, 4)});
        auto nv = cutsim::action_to_norm(a, bounds);
        for (int c = 0; c < 5; ++c) out.at(r, c) = nv[c];
    }
    return out;
}

struct MetricsConfig {
    double contact_force_eps = 0.1;  // N
    double width_mm = 0.5;           // cutter width for the MRV fallback integration
    bool dtw_use_min = false;        // mean over references by default
    cutsim::ActionBounds bounds;
};

// expert_refs: action series of source-domain expert episodes, already in
// normalized action units. meta.mrv_mm3 < 0 requests the trajectory-channel
// fallback integration (commanded DoC x width x feed velocity).
inline EpisodeMetrics episode_metrics(const trajdata::Trajectory& traj,
                                      const cutsim::EpisodeMeta& meta,
                                      const std::vector<Mat>& expert_refs,
                                      const MetricsConfig& cfg) {
    if (traj.length() == 0) throw DataError("episode_metrics: empty trajectory");
    EpisodeMetrics m;
    m.completion_time = meta.completion_time;
    m.fault = meta.fault;

    long contact = 0;
    double dev_sum = 0.0, force_sum = 0.0;
    for (int r = 0; r < traj.length(); ++r) {
        const double fmag = std::sqrt(traj.states.at(r, 0) * traj.states.at(r, 0) +
                                      traj.states.at(r, 1) * traj.states.at(r, 1) +
                                      traj.states.at(r, 2) * traj.states.at(r, 2));
        if (fmag > cfg.contact_force_eps) {
            ++contact;
            dev_sum += std::fabs(traj.states.at(r, 4));
            force_sum += fmag;
        }
    }
    if (contact == 0) {
        m.zero_contact = true;
    } else {
        m.avg_path_deviation = dev_sum / contact;
        m.avg_force = force_sum / contact;
    }

    if (meta.mrv_mm3 >= 0.0) {
        m.mrv = meta.mrv_mm3;
    } else {
        double mrv = 0.0;
        for (int r = 0; r < traj.length(); ++r) {
            const double doc_mm = traj.states.at(r, 5);
            const double feed_mm_s = traj.states.at(r, 3) * 1000.0 / 60.0;
            mrv += doc_mm * cfg.width_mm * feed_mm_s * traj.dt;
        }
        m.mrv = mrv;
    }

    if (!expert_refs.empty()) {
        Mat norm_actions = normalize_actions(traj.actions, cfg.bounds);
        double agg = cfg.dtw_use_min ? 1e300 : 0.0;
        for (const auto& ref : expert_refs) {
            const double d = dtw_normalized(norm_actions, ref);
            if (cfg.dtw_use_min)
                agg = std::min(agg, d);
            else
                agg += d;
        }
        m.dtw_to_expert = cfg.dtw_use_min ? agg : agg / expert_refs.size();
    }
    return m;
}

// ----------------------------------------------------------------------------
// Box-Cox. The applied transform is the piecewise form
//   y = x^lambda - 1   (lambda != 0),   y = log(x)  (lambda = 0);
// lambda, when not given, maximizes the profile log-likelihood of the
// variance-stabilized form (x^lambda - 1)/lambda. The Jacobian term of the
// piecewise form differs only by n*log|lambda|, which cancels against the
// variance scaling, so both forms share the same maximizer.
// ----------------------------------------------------------------------------
struct BoxCoxResult {
    std::vector<double> y;
    double lambda = 1.0;
};

namespace detail {

inline double boxcox_llf(const std::vector<double>& x, double lambda, double sum_log) {
    const size_t n = x.size();
    std::vector<double> y(n);
    if (lambda == 0.0) {
        for (size_t i = 0; i < n; ++i) y[i] = std::log(x[i]);
    } else {
        for (size_t i = 0; i < n; ++i) y[i] = (std::pow(x[i], lambda) - 1.0) / lambda;
    }
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= n;
    if (var <= 0.0) return -1e300;
    return -0.5 * (double)n * std::log(var) + (lambda - 1.0) * sum_log;
}

}  // namespace detail

inline BoxCoxResult box_cox(const std::vector<double>& x,
                            std::optional<double> lambda = std::nullopt) {
    if (x.empty()) throw DataError("box_cox: empty sample");
    double sum_log = 0.0;
    for (double v : x) {
        if (!(v > 0.0)) throw DataError("box_cox: sample values must be positive");
        sum_log += std::log(v);
    }
    BoxCoxResult res;
    if (lambda.has_value()) {
        res.lambda = *lambda;
    } else {
        // golden-section maximization on [-5, 5]
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double lo = -5.0, hi = 5.0;
        double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
        double fc = detail::boxcox_llf(x, c, sum_log), fd = detail::boxcox_llf(x, d, sum_log);
        for (int it = 0; it < 200; ++it) {
            if (fc > fd) {
                hi = d;
                d = c;
                fd = fc;
                c = hi - gr * (hi - lo);
                fc = detail::boxcox_llf(x, c, sum_log);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + gr * (hi - lo);
                fd = detail::boxcox_llf(x, d, sum_log);
            }
            if (hi - lo < 1e-10) break;
        }
        res.lambda = 0.5 * (lo + hi);
    }
    res.y.resize(x.size());
    if (res.lambda == 0.0) {
        for (size_t i = 0; i < x.size(); ++i) res.y[i] = std::log(x[i]);
    } else {
        for (size_t i = 0; i < x.size(); ++i) res.y[i] = std::pow(x[i], res.lambda) - 1.0;
    }
    return res;
}

// ----------------------------------------------------------------------------
// Group tests
// ----------------------------------------------------------------------------
struct StatReport {
    std::string test;
    double statistic = 0.0;
    double p_value = 1.0;
    double df1 = 0.0, df2 = 0.0;
    std::string transform = "none";
    std::string note;
};

namespace detail {

inline void check_groups(const std::vector<std::vector<double>>& groups, const char* who) {
    if (groups.size() < 2) throw DataError(std::string(who) + ": need at least 2 groups");
    for (const auto& g : groups)
        if (g.size() < 2) throw DataError(std::string(who) + ": each group needs >= 2 samples");
}

}  // namespace detail

inline StatReport anova_oneway(const std::vector<std::vector<double>>& groups) {
    detail::check_groups(groups, "anova_oneway");
    const int k = (int)groups.size();
    long n = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        n += (long)g.size();
        for (double v : g) grand += v;
    }
    grand /= n;
    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
        double mean = 0.0;
        for (double v : g) mean += v;
        mean /= g.size();
        ssb += (double)g.size() * (mean - grand) * (mean - grand);
        for (double v : g) ssw += (v - mean) * (v - mean);
    }
    StatReport rep;
    rep.test = "anova";
    rep.df1 = k - 1;
    rep.df2 = (double)(n - k);
    if (ssb == 0.0) {
        rep.statistic = 0.0;
        rep.p_value = 1.0;
    } else if (ssw == 0.0) {
        rep.statistic = std::numeric_limits<double>::infinity();
        rep.p_value = 0.0;
    } else {
        rep.statistic = (ssb / rep.df1) / (ssw / rep.df2);
        rep.p_value = f_dist_sf(rep.statistic, rep.df1, rep.df2);
    }
    return rep;
}

namespace detail {

// average ranks with tie handling; returns ranks of the pooled sample
inline std::vector<double> rank_with_ties(const std::vector<double>& pooled,
                                          double* tie_correction_sum) {
    const size_t n = pooled.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return pooled[a] < pooled[b]; });
    std::vector<double> ranks(n);
    double tsum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double avg_rank = 0.5 * ((double)(i + 1) + (double)(j + 1));
        const double t = (double)(j - i + 1);
        tsum += t * t * t - t;
        for (size_t q = i; q <= j; ++q) ranks[order[q]] = avg_rank;
        i = j + 1;
    }
    if (tie_correction_sum) *tie_correction_sum = tsum;
    return ranks;
}

}  // namespace detail

inline StatReport kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    detail::check_groups(groups, "kruskal_wallis");
    std::vector<double> pooled;
    std::vector<size_t> sizes;
    for (const auto& g : groups) {
        sizes.push_back(g.size());
        pooled.insert(pooled.end(), g.begin(), g.end());
    }
    const double n = (double)pooled.size();
    double tsum = 0.0;
    auto ranks = detail::rank_with_ties(pooled, &tsum);
    double h = 0.0;
    size_t off = 0;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        double rsum = 0.0;
        for (size_t q = 0; q < sizes[gi]; ++q) rsum += ranks[off + q];
        h += rsum * rsum / (double)sizes[gi];
        off += sizes[gi];
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    const double correction = 1.0 - tsum / (n * n * n - n);
    if (correction > 0.0) h /= correction;
    StatReport rep;
    rep.test = "kruskal-wallis";
    rep.statistic = h;
    rep.df1 = (double)groups.size() - 1.0;
    rep.p_value = chi2_sf(std::max(0.0, h), rep.df1);
    return rep;
}

// Brown-Forsythe variant: absolute deviations from group medians.
inline StatReport levene(const std::vector<std::vector<double>>& groups) {
    detail::check_groups(groups, "levene");
    std::vector<std::vector<double>> z(groups.size());
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        std::vector<double> sorted = groups[gi];
        std::sort(sorted.begin(), sorted.end());
        const size_t n = sorted.size();
        const double median =
            n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        for (double v : groups[gi]) z[gi].push_back(std::fabs(v - median));
    }
    StatReport rep = anova_oneway(z);
    rep.test = "levene";
    rep.note = "Brown-Forsythe (median-centered)";
    return rep;
}

inline double hedges_g(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw DataError("hedges_g: need >= 2 samples per group");
    auto mean_var = [](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m += v;
        m /= x.size();
        double s2 = 0.0;
        for (double v : x) s2 += (v - m) * (v - m);
        s2 /= (x.size() - 1);
        return std::pair<double, double>(m, s2);
    };
    auto [ma, va] = mean_var(a);
    auto [mb, vb] = mean_var(b);
    const double na = (double)a.size(), nb = (double)b.size();
    const double df = na + nb - 2.0;
    const double sp = std::sqrt(((na - 1.0) * va + (nb - 1.0) * vb) / df);
    if (sp == 0.0) return 0.0;
    const double j = 1.0 - 3.0 / (4.0 * df - 1.0);  // small-sample correction
    return j * (ma - mb) / sp;
}

// ----------------------------------------------------------------------------
// Pairwise post-hoc tests with Holm correction. Substitutes for Tukey HSD and
// Dunn; every report carries a note saying so.
// ----------------------------------------------------------------------------
enum class PosthocMethod { welch_t, mann_whitney };

struct PairwiseReport {
    int group_a = 0, group_b = 0;
    std::string test;
    double statistic = 0.0;
    double p_raw = 1.0;
    double p_holm = 1.0;
    double hedges = 0.0;
};

inline StatReport welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw DataError("welch_t: need >= 2 samples per group");
    auto mean_var = [](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m += v;
        m /= x.size();
        double s2 = 0.0;
        for (double v : x) s2 += (v - m) * (v - m);
        s2 /= (x.size() - 1);
        return std::pair<double, double>(m, s2);
    };
    auto [ma, va] = mean_var(a);
    auto [mb, vb] = mean_var(b);
    const double na = (double)a.size(), nb = (double)b.size();
    const double se2 = va / na + vb / nb;
    StatReport rep;
    rep.test = "welch-t";
    if (se2 == 0.0) {
        rep.statistic = ma == mb ? 0.0 : std::numeric_limits<double>::infinity();
        rep.p_value = ma == mb ? 1.0 : 0.0;
        return rep;
    }
    rep.statistic = (ma - mb) / std::sqrt(se2);
    rep.df1 = se2 * se2 /
              (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    rep.p_value = t_dist_sf_two_sided(rep.statistic, rep.df1);
    return rep;
}

inline StatReport mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw DataError("mann_whitney: empty group");
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    double tsum = 0.0;
    auto ranks = detail::rank_with_ties(pooled, &tsum);
    const double na = (double)a.size(), nb = (double)b.size(), n = na + nb;
    double r1 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) r1 += ranks[i];
    const double u1 = na * nb + na * (na + 1.0) / 2.0 - r1;
    const double u = std::min(u1, na * nb - u1);
    StatReport rep;
    rep.test = "mann-whitney";
    rep.statistic = u;
    const double mu = na * nb / 2.0;
    const double sigma2 = na * nb / 12.0 * ((n + 1.0) - tsum / (n * (n - 1.0)));
    if (sigma2 <= 0.0) {
        rep.p_value = 1.0;
        return rep;
    }
    // normal approximation with continuity correction, two-sided
    const double z = (std::fabs(u - mu) - 0.5) / std::sqrt(sigma2);
    rep.p_value = std::min(1.0, 2.0 * norm_sf(std::max(0.0, z)));
    return rep;
}

inline std::vector<PairwiseReport> pairwise_posthoc(
    const std::vector<std::vector<double>>& groups, PosthocMethod method) {
    detail::check_groups(groups, "pairwise_posthoc");
    std::vector<PairwiseReport> reports;
    for (size_t i = 0; i < groups.size(); ++i)
        for (size_t j = i + 1; j < groups.size(); ++j) {
            StatReport r = method == PosthocMethod::welch_t
                               ? welch_t_test(groups[i], groups[j])
                               : mann_whitney_u(groups[i], groups[j]);
            PairwiseReport pr;
            pr.group_a = (int)i;
            pr.group_b = (int)j;
            pr.test = r.test;
            pr.statistic = r.statistic;
            pr.p_raw = r.p_value;
            pr.hedges = hedges_g(groups[i], groups[j]);
            reports.push_back(pr);
        }
    // Holm step-down adjustment
    std::vector<size_t> order(reports.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return reports[a].p_raw < reports[b].p_raw; });
    const size_t m = reports.size();
    double running = 0.0;
    for (size_t rank = 0; rank < m; ++rank) {
        const double adj = std::min(1.0, (double)(m - rank) * reports[order[rank]].p_raw);
        running = std::max(running, adj);
        reports[order[rank]].p_holm = running;
    }
    return reports;
}

}  // namespace trajstyle::evalstat
