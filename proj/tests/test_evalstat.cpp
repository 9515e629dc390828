#include <gtest/gtest.h>

#include <cmath>

#include "trajstyle/evalstat.hpp"

using namespace trajstyle;
using namespace trajstyle::evalstat;

namespace {

Mat series1d(const std::vector<double>& v) {
    Mat m((int)v.size(), 1);
    for (size_t i = 0; i < v.size(); ++i) m.at((int)i, 0) = v[i];
    return m;
}

// Exhaustive DTW oracle: enumerate all monotone warping paths, accumulate the
// step costs sequentially from the path start, normalize by path length.
struct DtwOracle {
    const Mat& a;
    const Mat& b;
    double best = 1e300;
    long best_len = 0;

    double cost(int i, int j) const {
        double s = 0.0;
        for (int c = 0; c < a.cols; ++c) {
            const double d = a.at(i, c) - b.at(j, c);
            s += d * d;
        }
        return std::sqrt(s);
    }
    void walk(int i, int j, double acc, long len) {
        acc += cost(i, j);
        len += 1;
        if (i == a.rows - 1 && j == b.rows - 1) {
            if (acc < best) {
                best = acc;
                best_len = len;
            }
            return;
        }
        if (i + 1 < a.rows && j + 1 < b.rows) walk(i + 1, j + 1, acc, len);
        if (i + 1 < a.rows) walk(i + 1, j, acc, len);
        if (j + 1 < b.rows) walk(i, j + 1, acc, len);
    }
    double run() {
        walk(0, 0, 0.0, 0);
        return best / (double)best_len;
    }
};

}  // namespace

// ----------------------------------------------------------------------------
// special functions against frozen reference values
// ----------------------------------------------------------------------------
TEST(SpecialFunctions, MatchTabulatedValues) {
    EXPECT_NEAR(sf::incbeta(2.0, 5.0, 0.3), 0.5798250000000003, 1e-12);
    EXPECT_NEAR(sf::incbeta(0.5, 3.0, 0.7), 0.9903963064097122, 1e-12);
    EXPECT_NEAR(sf::gamma_q(2.5, 3.0), 0.30621891841327875, 1e-12);
    EXPECT_NEAR(f_dist_sf(7.0, 2, 6), 0.027, 1e-10);
    EXPECT_NEAR(f_dist_sf(3.5, 4, 20), 0.025385230866441275, 1e-12);
    EXPECT_NEAR(chi2_sf(5.6, 2), 0.06081006262521797, 1e-12);
    EXPECT_NEAR(chi2_sf(0.8, 4), 0.938448064449895, 1e-12);
    EXPECT_NEAR(t_dist_sf_two_sided(2.1, 10), 0.06207724420221853, 1e-12);
    EXPECT_NEAR(t_dist_sf_two_sided(0.3, 5), 0.7762490422632745, 1e-12);
    EXPECT_NEAR(norm_sf(1.96), 0.024997895148220435, 1e-12);
}

// ----------------------------------------------------------------------------
// DTW
// ----------------------------------------------------------------------------
TEST(Dtw, IdenticalSeriesGiveZero) {
    Rng rng(1);
    Mat a(6, 5);
    for (auto& v : a.v) v = rng.normal();
    EXPECT_EQ(dtw_normalized(a, a), 0.0);
}

TEST(Dtw, SingleCellCase) {
    EXPECT_EQ(dtw_normalized(series1d({0.0}), series1d({3.0})), 3.0);
}

TEST(Dtw, HandCase1223) {
    Mat a = series1d({1, 2, 3});
    Mat b = series1d({1, 2, 2, 3});
    DtwOracle oracle{a, b};
    EXPECT_EQ(dtw_normalized(a, b), oracle.run());
    EXPECT_EQ(dtw_normalized(a, b), 0.0);
}

TEST(Dtw, MatchesExhaustiveOracleExactly) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = (int)rng.uniform_int(1, 6);
        const int m = (int)rng.uniform_int(1, 6);
        const int ch = (int)rng.uniform_int(1, 3);
        Mat a(n, ch), b(m, ch);
        for (auto& v : a.v) v = rng.normal();
        for (auto& v : b.v) v = rng.normal();
        DtwOracle oracle{a, b};
        const double expect = oracle.run();
        const double got = dtw_normalized(a, b);
        ASSERT_EQ(got, expect) << "trial " << trial;
    }
}

TEST(Dtw, Symmetric) {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        Mat a((int)rng.uniform_int(1, 6), 2), b((int)rng.uniform_int(1, 6), 2);
        for (auto& v : a.v) v = rng.normal();
        for (auto& v : b.v) v = rng.normal();
        EXPECT_EQ(dtw_normalized(a, b), dtw_normalized(b, a));
    }
}

TEST(Dtw, ErrorsOnBadInput) {
    Mat empty(0, 1), a = series1d({1.0});
    EXPECT_THROW(dtw_normalized(empty, a), DataError);
    Mat two(2, 2, 0.0);
    EXPECT_THROW(dtw_normalized(a, two), DataError);
}

// ----------------------------------------------------------------------------
// episode metrics
// ----------------------------------------------------------------------------
TEST(Metrics, MrvHandIntegration) {
    // constant feed 0.75 m/min, DoC 1 mm, width 0.5 mm, 0.2 m path -> 100 mm^3
    const int t = 800;  // 16 s at 20 ms
    trajdata::Trajectory tr;
    tr.id = "hand";
    tr.dt = 0.02;
    tr.states = Mat(t, 7);
    tr.actions = Mat(t, 5);
    for (int r = 0; r < t; ++r) {
        tr.states.at(r, 2) = 5.0;   // in contact
        tr.states.at(r, 3) = 0.75;  // m/min
        tr.states.at(r, 5) = 1.0;   // mm
    }
    cutsim::EpisodeMeta meta;
    meta.completion_time = 16.0;
    meta.mrv_mm3 = -1.0;  // request trajectory integration
    MetricsConfig cfg;
    auto m = episode_metrics(tr, meta, {}, cfg);
    EXPECT_NEAR(m.mrv, 100.0, 1e-9);
    EXPECT_FALSE(m.zero_contact);
    EXPECT_NEAR(m.avg_force, 5.0, 1e-12);
}

TEST(Metrics, ZeroContactFlagged) {
    trajdata::Trajectory tr;
    tr.id = "free";
    tr.dt = 0.02;
    tr.states = Mat(10, 7);
    tr.actions = Mat(10, 5);
    cutsim::EpisodeMeta meta;
    MetricsConfig cfg;
    auto m = episode_metrics(tr, meta, {}, cfg);
    EXPECT_TRUE(m.zero_contact);
    EXPECT_EQ(m.avg_force, 0.0);
    EXPECT_EQ(m.avg_path_deviation, 0.0);
}

TEST(Metrics, DtwToIdenticalExpertIsZero) {
    Rng rng(11);
    trajdata::Trajectory tr;
    tr.id = "e";
    tr.dt = 0.02;
    tr.states = Mat(20, 7);
    tr.actions = Mat(20, 5);
    MetricsConfig cfg;
    for (int r = 0; r < 20; ++r) {
        auto nv = std::array<double, 5>{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                                        rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                                        rng.uniform(-0.5, 0.5)};
        auto a = cutsim::action_from_norm(nv, cfg.bounds);
        auto arr = a.to_array();
        for (int c = 0; c < 5; ++c) tr.actions.at(r, c) = arr[c];
        tr.states.at(r, 2) = 1.0;
    }
    cutsim::EpisodeMeta meta;
    auto ref = normalize_actions(tr.actions, cfg.bounds);
    auto m = episode_metrics(tr, meta, {ref}, cfg);
    EXPECT_NEAR(m.dtw_to_expert, 0.0, 1e-12);
}

TEST(Metrics, EmptyTrajectoryThrows) {
    trajdata::Trajectory tr;
    tr.dt = 0.02;
    tr.states = Mat(0, 7);
    tr.actions = Mat(0, 5);
    EXPECT_THROW(episode_metrics(tr, {}, {}, MetricsConfig{}), DataError);
}

// ----------------------------------------------------------------------------
// Box-Cox
// ----------------------------------------------------------------------------
TEST(BoxCox, LambdaZeroIsLog) {
    auto r = box_cox({1.0, 2.0, 10.0}, 0.0);
    EXPECT_DOUBLE_EQ(r.y[0], 0.0);
    EXPECT_DOUBLE_EQ(r.y[1], std::log(2.0));
    EXPECT_DOUBLE_EQ(r.y[2], std::log(10.0));
}

TEST(BoxCox, LambdaOneIsShift) {
    auto r = box_cox({1.0, 2.5, 7.0}, 1.0);
    EXPECT_DOUBLE_EQ(r.y[0], 0.0);
    EXPECT_DOUBLE_EQ(r.y[1], 1.5);
    EXPECT_DOUBLE_EQ(r.y[2], 6.0);
    // ordering preserved
    for (size_t i = 1; i < r.y.size(); ++i) EXPECT_GT(r.y[i], r.y[i - 1]);
}

TEST(BoxCox, NonpositiveValueThrows) {
    EXPECT_THROW(box_cox({1.0, 0.0}, std::nullopt), DataError);
    EXPECT_THROW(box_cox({1.0, -2.0}, 1.0), DataError);
}

TEST(BoxCox, LognormalLambdaNearZeroAndMatchesGridOracle) {
    Rng rng(42);
    std::vector<double> x(200);
    for (auto& v : x) v = std::exp(rng.normal(0.0, 1.0));
    auto r = box_cox(x, std::nullopt);
    EXPECT_LT(std::fabs(r.lambda), 0.15);

    // independent dense grid search over the same profile likelihood
    double sum_log = 0.0;
    for (double v : x) sum_log += std::log(v);
    auto llf = [&](double lam) {
        std::vector<double> y(x.size());
        if (lam == 0.0)
            for (size_t i = 0; i < x.size(); ++i) y[i] = std::log(x[i]);
        else
            for (size_t i = 0; i < x.size(); ++i) y[i] = (std::pow(x[i], lam) - 1.0) / lam;
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= y.size();
        double var = 0.0;
        for (double v : y) var += (v - mean) * (v - mean);
        var /= y.size();
        return -0.5 * (double)x.size() * std::log(var) + (lam - 1.0) * sum_log;
    };
    double best_lam = -5.0, best = -1e300;
    for (double lam = -5.0; lam <= 5.0; lam += 5e-4) {
        const double v = llf(lam);
        if (v > best) {
            best = v;
            best_lam = lam;
        }
    }
    EXPECT_NEAR(r.lambda, best_lam, 0.02);
}

// ----------------------------------------------------------------------------
// ANOVA
// ----------------------------------------------------------------------------
TEST(Anova, EqualMeansGiveZeroF) {
    auto rep = anova_oneway({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
    EXPECT_EQ(rep.statistic, 0.0);
    EXPECT_EQ(rep.p_value, 1.0);
}

TEST(Anova, TextbookThreeGroups) {
    // groups {1,2,3},{2,3,4},{4,5,6}: SSB = 14, SSW = 6, F = (14/2)/(6/6) = 7
    auto rep = anova_oneway({{1, 2, 3}, {2, 3, 4}, {4, 5, 6}});
    EXPECT_NEAR(rep.statistic, 7.0, 1e-10);
    EXPECT_NEAR(rep.p_value, 0.027, 1e-10);
    auto rep2 = anova_oneway({{1, 2, 3, 4}, {2, 4, 6, 9}, {1, 1, 2, 2}});
    EXPECT_NEAR(rep2.statistic, 4.145038167938931, 1e-10);
    EXPECT_NEAR(rep2.p_value, 0.05296697789434572, 1e-10);
}

TEST(Anova, TwoGroupsEqualsPooledTSquared) {
    Rng rng(13);
    std::vector<double> a(8), b(6);
    for (auto& v : a) v = rng.normal(1.0, 2.0);
    for (auto& v : b) v = rng.normal(0.0, 2.0);
    auto rep = anova_oneway({a, b});
    // pooled two-sample t
    auto mean = [](const std::vector<double>& x) {
        double m = 0;
        for (double v : x) m += v;
        return m / x.size();
    };
    const double ma = mean(a), mb = mean(b);
    double ssa = 0, ssb2 = 0;
    for (double v : a) ssa += (v - ma) * (v - ma);
    for (double v : b) ssb2 += (v - mb) * (v - mb);
    const double sp2 = (ssa + ssb2) / (a.size() + b.size() - 2.0);
    const double t = (ma - mb) / std::sqrt(sp2 * (1.0 / a.size() + 1.0 / b.size()));
    EXPECT_NEAR(rep.statistic, t * t, 1e-9 * std::max(1.0, t * t));
}

TEST(Anova, AffineInvariance) {
    Rng rng(17);
    std::vector<std::vector<double>> groups(3);
    for (auto& g : groups) {
        g.resize(6);
        for (auto& v : g) v = rng.normal();
    }
    const double f0 = anova_oneway(groups).statistic;
    auto shifted = groups;
    for (auto& g : shifted)
        for (auto& v : g) v = 3.7 * v - 11.0;
    EXPECT_NEAR(anova_oneway(shifted).statistic, f0, 1e-9 * std::max(1.0, f0));
}

TEST(Anova, DegenerateGroupsThrow) {
    EXPECT_THROW(anova_oneway({{1.0, 2.0}}), DataError);
    EXPECT_THROW(anova_oneway({{1.0}, {2.0, 3.0}}), DataError);
}

// ----------------------------------------------------------------------------
// Kruskal-Wallis
// ----------------------------------------------------------------------------
TEST(KruskalWallis, IdenticalGroupsGiveZeroH) {
    auto rep = kruskal_wallis({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
    EXPECT_NEAR(rep.statistic, 0.0, 1e-12);
    EXPECT_NEAR(rep.p_value, 1.0, 1e-12);
}

TEST(KruskalWallis, TextbookValues) {
    auto rep = kruskal_wallis({{1, 2, 3}, {2, 3, 4}, {4, 5, 6}});
    EXPECT_NEAR(rep.statistic, 5.629629629629635, 1e-10);
    EXPECT_NEAR(rep.p_value, 0.059915813233781604, 1e-10);
    auto rep2 = kruskal_wallis({{1, 2, 3, 4}, {2, 4, 6, 9}, {1, 1, 2, 2}});
    EXPECT_NEAR(rep2.statistic, 5.398523985239858, 1e-10);
    EXPECT_NEAR(rep2.p_value, 0.067255129210542, 1e-10);
}

TEST(KruskalWallis, MonotoneTransformInvariance) {
    Rng rng(19);
    std::vector<std::vector<double>> groups(3);
    for (auto& g : groups) {
        g.resize(7);
        for (auto& v : g) v = rng.uniform(0.1, 5.0);
    }
    const double h0 = kruskal_wallis(groups).statistic;
    auto cubed = groups;
    for (auto& g : cubed)
        for (auto& v : g) v = v * v * v;
    EXPECT_NEAR(kruskal_wallis(cubed).statistic, h0, 1e-10);
    auto exped = groups;
    for (auto& g : exped)
        for (auto& v : g) v = std::exp(v);
    EXPECT_NEAR(kruskal_wallis(exped).statistic, h0, 1e-10);
}

// ----------------------------------------------------------------------------
// Levene / Hedges
// ----------------------------------------------------------------------------
TEST(Levene, IdenticalGroupsHighP) {
    auto rep = levene({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
    EXPECT_NEAR(rep.statistic, 0.0, 1e-12);
    EXPECT_NEAR(rep.p_value, 1.0, 1e-12);
    EXPECT_NE(rep.note.find("Brown-Forsythe"), std::string::npos);
}

TEST(Levene, ReferenceValues) {
    auto rep = levene({{1, 2, 3, 4}, {2, 4, 6, 9}, {1, 1, 2, 2}});
    EXPECT_NEAR(rep.statistic, 3.774193548387097, 1e-10);
    EXPECT_NEAR(rep.p_value, 0.06451946710912007, 1e-10);
}

TEST(Hedges, IdenticalSamplesGiveZero) {
    EXPECT_EQ(hedges_g({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}), 0.0);
}

TEST(Hedges, UnitGapClosedForm) {
    // equal variance s, mean gap s: g = J(df), df = 2, J = 1 - 3/7
    std::vector<double> a{-1.0, 1.0};
    std::vector<double> b{-1.0 + std::sqrt(2.0), 1.0 + std::sqrt(2.0)};
    const double j = 1.0 - 3.0 / 7.0;
    EXPECT_NEAR(hedges_g(b, a), j, 1e-12);
    EXPECT_NEAR(hedges_g(a, b), -j, 1e-12);
}

TEST(Hedges, SignFlipsUnderSwap) {
    Rng rng(23);
    std::vector<double> a(9), b(7);
    for (auto& v : a) v = rng.normal(0.5, 1.0);
    for (auto& v : b) v = rng.normal(0.0, 1.0);
    EXPECT_DOUBLE_EQ(hedges_g(a, b), -hedges_g(b, a));
}

// ----------------------------------------------------------------------------
// pairwise post-hoc
// ----------------------------------------------------------------------------
TEST(Posthoc, WelchReferenceValues) {
    auto rep = welch_t_test({1.0, 2, 3, 4}, {2.0, 4, 6, 9});
    EXPECT_NEAR(rep.statistic, -1.690641214609248, 1e-10);
    EXPECT_NEAR(rep.p_value, 0.1647020796280566, 1e-10);
    auto rep2 = welch_t_test({1.0, 2, 3, 4}, {1.0, 1, 2, 2});
    EXPECT_NEAR(rep2.statistic, 1.4142135623730951, 1e-10);
    EXPECT_NEAR(rep2.p_value, 0.2276824467223011, 1e-10);
}

TEST(Posthoc, MannWhitneyReferenceValues) {
    auto rep = mann_whitney_u({1.0, 2, 3, 4}, {2.0, 4, 6, 9});
    EXPECT_NEAR(rep.statistic, 3.0, 1e-12);
    EXPECT_NEAR(rep.p_value, 0.1885823055190361, 1e-10);
}

TEST(Posthoc, HolmAdjustmentMonotone) {
    Rng rng(29);
    std::vector<std::vector<double>> groups(4);
    for (size_t i = 0; i < groups.size(); ++i) {
        groups[i].resize(6);
        for (auto& v : groups[i]) v = rng.normal(0.4 * (double)i, 1.0);
    }
    auto reports = pairwise_posthoc(groups, PosthocMethod::welch_t);
    EXPECT_EQ(reports.size(), 6u);
    for (const auto& r : reports) {
        EXPECT_GE(r.p_holm, r.p_raw - 1e-15);
        EXPECT_LE(r.p_holm, 1.0);
        EXPECT_GE(r.p_raw, 0.0);
    }
    auto sorted = reports;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.p_raw < b.p_raw; });
    for (size_t i = 1; i < sorted.size(); ++i)
        EXPECT_GE(sorted[i].p_holm, sorted[i - 1].p_holm - 1e-15);
}
