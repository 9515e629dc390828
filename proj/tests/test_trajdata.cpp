#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "trajstyle/trajdata.hpp"

using namespace trajstyle;
using namespace trajstyle::trajdata;

namespace {

Trajectory random_traj(const std::string& id, int t, int n_s, int n_a, Rng& rng,
                       Domain dom = Domain::source) {
    Trajectory tr;
    tr.id = id;
    tr.dt = 0.02;
    tr.domain = dom;
    tr.states = Mat(t, n_s);
    tr.actions = Mat(t, n_a);
    for (auto& v : tr.states.v) v = rng.normal();
    for (auto& v : tr.actions.v) v = rng.normal();
    return tr;
}

std::filesystem::path temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("ts_trajdata_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

// ----------------------------------------------------------------------------
// make_windows
// ----------------------------------------------------------------------------
TEST(MakeWindows, PaperCount120_100) {
    Rng rng(1);
    auto tr = random_traj("a", 120, 3, 2, rng);
    auto ws = make_windows(tr, 100, 1);
    EXPECT_EQ(ws.size(), 21u);
}

TEST(MakeWindows, FullLengthWindowBoundary) {
    Rng rng(2);
    auto tr = random_traj("a", 100, 3, 2, rng);
    auto ws = make_windows(tr, 100, 1);
    ASSERT_EQ(ws.size(), 1u);
    for (int r = 0; r < 100; ++r)
        for (int c = 0; c < 3; ++c) EXPECT_EQ(ws[0].data.at(r, c), tr.states.at(r, c));
}

TEST(MakeWindows, StrideStartIndices) {
    Rng rng(3);
    auto tr = random_traj("a", 10, 2, 1, rng);
    auto ws = make_windows(tr, 4, 3);
    ASSERT_EQ(ws.size(), 3u);
    EXPECT_EQ(ws[0].start_index, 0);
    EXPECT_EQ(ws[1].start_index, 3);
    EXPECT_EQ(ws[2].start_index, 6);
}

TEST(MakeWindows, WindowTooLargeNamesTrajectory) {
    Rng rng(4);
    auto tr = random_traj("short_traj", 5, 2, 1, rng);
    try {
        make_windows(tr, 10, 1);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("short_traj"), std::string::npos);
    }
}

TEST(MakeWindows, CountLawProperty) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int t = (int)rng.uniform_int(1, 60);
        const int n = (int)rng.uniform_int(1, t);
        auto tr = random_traj("p", t, 2, 1, rng);
        auto ws = make_windows(tr, n, 1);
        EXPECT_EQ((int)ws.size(), t - n + 1);
    }
}

TEST(MakeWindows, ContentLawProperty) {
    Rng rng(6);
    auto tr = random_traj("p", 30, 3, 1, rng);
    auto ws = make_windows(tr, 7, 2);
    for (const auto& w : ws)
        for (int r = 0; r < 7; ++r)
            for (int c = 0; c < 3; ++c)
                EXPECT_EQ(w.data.at(r, c), tr.states.at(w.start_index + r, c));
}

// ----------------------------------------------------------------------------
// normalization
// ----------------------------------------------------------------------------
TEST(Normalize, ConstantChannelFlagged) {
    Rng rng(7);
    TrajDataset ds;
    ds.n_s = 2;
    ds.n_a = 1;
    ds.dt = 0.02;
    auto tr = random_traj("a", 50, 2, 1, rng);
    for (int r = 0; r < 50; ++r) tr.states.at(r, 1) = 5.0;
    ds.trajectories.push_back(tr);
    auto st = compute_norm_stats(ds);
    ASSERT_EQ(st.zero_variance.size(), 1u);
    EXPECT_EQ(st.zero_variance[0], 1);
    EXPECT_EQ(st.std[1], 1.0);
    apply_norm(ds, st);
    for (int r = 0; r < 50; ++r) EXPECT_EQ(ds.trajectories[0].states.at(r, 1), 0.0);
}

TEST(Normalize, TwoSampleSymmetry) {
    TrajDataset ds;
    ds.n_s = 1;
    ds.n_a = 1;
    ds.dt = 1.0;
    Trajectory tr;
    tr.id = "a";
    tr.dt = 1.0;
    tr.states = Mat(2, 1);
    tr.states.at(0, 0) = -1.0;
    tr.states.at(1, 0) = 1.0;
    tr.actions = Mat(2, 1);
    ds.trajectories.push_back(tr);
    auto st = compute_norm_stats(ds);
    apply_norm(ds, st);
    EXPECT_DOUBLE_EQ(ds.trajectories[0].states.at(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(ds.trajectories[0].states.at(1, 0), 1.0);
}

TEST(Normalize, RoundTripIdentity) {
    Rng rng(8);
    TrajDataset ds;
    ds.n_s = 3;
    ds.n_a = 2;
    ds.dt = 0.02;
    for (int i = 0; i < 4; ++i)
        ds.trajectories.push_back(random_traj("t" + std::to_string(i), 40, 3, 2, rng));
    TrajDataset orig = ds;
    auto st = compute_norm_stats(ds);
    apply_norm(ds, st);
    invert_norm(ds, st);
    for (size_t i = 0; i < ds.trajectories.size(); ++i)
        for (size_t j = 0; j < ds.trajectories[i].states.v.size(); ++j) {
            const double a = ds.trajectories[i].states.v[j];
            const double b = orig.trajectories[i].states.v[j];
            EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::fabs(b)));
        }
}

// ----------------------------------------------------------------------------
// align_mean
// ----------------------------------------------------------------------------
TEST(AlignMean, IdentityWhenEqual) {
    Rng rng(9);
    auto tr = random_traj("a", 20, 2, 1, rng);
    auto ws = make_windows(tr, 10, 10);
    auto out = align_mean(ws[0], ws[0]);
    for (size_t i = 0; i < out.data.v.size(); ++i)
        EXPECT_NEAR(out.data.v[i], ws[0].data.v[i], 1e-12);
}

TEST(AlignMean, ConstantShiftCase) {
    Window c("c", 0, Mat(4, 1, 0.0));
    Window s("s", 0, Mat(4, 1, 3.0));
    auto out = align_mean(c, s);
    for (int r = 0; r < 4; ++r) EXPECT_NEAR(out.data.at(r, 0), 0.0, 1e-12);
    ASSERT_EQ(out.channel_means.size(), 1u);
    EXPECT_NEAR(out.channel_means[0], 3.0, 1e-12);
}

TEST(AlignMean, OutputMeansEqualContentMeans) {
    Rng rng(10);
    auto a = random_traj("a", 16, 3, 1, rng);
    auto b = random_traj("b", 16, 3, 1, rng);
    auto wa = make_windows(a, 16, 1)[0];
    auto wb = make_windows(b, 16, 1)[0];
    auto out = align_mean(wa, wb);
    auto mc = channel_means_of(wa.data);
    auto mo = channel_means_of(out.data);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(mo[j], mc[j], 1e-12);
}

TEST(AlignMean, Idempotent) {
    Rng rng(11);
    auto a = random_traj("a", 12, 2, 1, rng);
    auto b = random_traj("b", 12, 2, 1, rng);
    auto wa = make_windows(a, 12, 1)[0];
    auto wb = make_windows(b, 12, 1)[0];
    auto once = align_mean(wa, wb);
    auto twice = align_mean(wa, once);
    for (size_t i = 0; i < once.data.v.size(); ++i)
        EXPECT_NEAR(twice.data.v[i], once.data.v[i], 1e-12);
}

TEST(AlignMean, ShapeMismatchThrows) {
    Window c("c", 0, Mat(4, 2));
    Window s("s", 0, Mat(5, 2));
    EXPECT_THROW(align_mean(c, s), DataError);
}

// ----------------------------------------------------------------------------
// persistence
// ----------------------------------------------------------------------------
TEST(Persistence, BitwiseRoundTrip) {
    Rng rng(12);
    auto dir = temp_dir("roundtrip");
    TrajDataset ds;
    ds.n_s = 3;
    ds.n_a = 2;
    ds.dt = 0.02;
    for (int i = 0; i < 3; ++i)
        ds.trajectories.push_back(random_traj("traj_" + std::to_string(i), 25, 3, 2, rng));
    save_dataset(ds, dir.string());
    auto ds2 = load_dataset(dir.string());
    ASSERT_EQ(ds2.trajectories.size(), 3u);
    for (size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(ds.trajectories[i].states.v, ds2.trajectories[i].states.v);
        EXPECT_EQ(ds.trajectories[i].actions.v, ds2.trajectories[i].actions.v);
    }
    std::filesystem::remove_all(dir);
}

TEST(Persistence, EmptyDatasetValidManifest) {
    auto dir = temp_dir("empty");
    TrajDataset ds;
    ds.n_s = 7;
    ds.n_a = 5;
    ds.dt = 0.02;
    save_dataset(ds, dir.string());
    auto ds2 = load_dataset(dir.string());
    EXPECT_TRUE(ds2.empty());
    EXPECT_EQ(ds2.n_s, 7);
    std::filesystem::remove_all(dir);
}

TEST(Persistence, HeaderColumnMismatchNamesFile) {
    auto dir = temp_dir("badheader");
    {
        std::ofstream f(dir / "bad.csv");
        f << "t,s0,s1\n0,1.0,2.0\n";
    }
    try {
        load_trajectory_csv((dir / "bad.csv").string(), 3, 2, 0.02, Domain::source);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.csv"), std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST(Persistence, NanEntryReportsRowCol) {
    auto dir = temp_dir("nan");
    {
        std::ofstream f(dir / "n.csv");
        f << "t,s0,a0\n0,1.0,2.0\n1,nan,2.0\n";
    }
    try {
        load_trajectory_csv((dir / "n.csv").string(), 1, 1, 0.02, Domain::source);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos);
        EXPECT_NE(msg.find("col 1"), std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST(Persistence, MissingFileThrows) {
    EXPECT_THROW(load_dataset("/nonexistent/dir"), DataError);
}

// ----------------------------------------------------------------------------
// bulk enumeration
// ----------------------------------------------------------------------------
TEST(EnumerateWindows, SortsByIdAndSkipsShort) {
    Rng rng(13);
    TrajDataset ds;
    ds.n_s = 2;
    ds.n_a = 1;
    ds.dt = 0.02;
    ds.trajectories.push_back(random_traj("b_long", 12, 2, 1, rng));
    ds.trajectories.push_back(random_traj("a_long", 12, 2, 1, rng));
    ds.trajectories.push_back(random_traj("c_short", 3, 2, 1, rng));
    auto refs = enumerate_windows(ds, 10, 1);
    ASSERT_EQ(refs.size(), 6u);  // two long trajectories, 3 windows each
    EXPECT_EQ(ds.trajectories[refs[0].traj].id, "a_long");
    EXPECT_EQ(ds.trajectories[refs[3].traj].id, "b_long");
    EXPECT_EQ(refs[0].start, 0);
    EXPECT_EQ(refs[1].start, 1);
}

TEST(WindowTensor, RoundTrip) {
    Rng rng(14);
    auto tr = random_traj("a", 8, 3, 1, rng);
    auto w = make_windows(tr, 8, 1)[0];
    auto t = window_to_tensor(w.data);
    auto back = tensor_to_window(t, 0);
    EXPECT_EQ(back.v, w.data.v);
}
