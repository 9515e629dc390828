#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "trajstyle/checkpoint.hpp"
#include "trajstyle/numkern.hpp"

using namespace trajstyle;
using namespace trajstyle::numkern;

namespace {

Tensor3 random_tensor(int b, int c, int l, Rng& rng, double scale = 1.0) {
    Tensor3 t(b, c, l);
    for (auto& v : t.v) v = rng.normal(0.0, scale);
    return t;
}

// Scalar loss sum(coef .* layer(x)) used to exercise layer backward passes.
// Copies x from the param each call so grad_check can perturb it.
struct LayerHarness {
    Layer& layer;
    Param x;
    std::vector<double> coef;
    bool train;
    int b, c, l;

    LayerHarness(Layer& ly, const Tensor3& x0, Rng& rng, bool train_mode)
        : layer(ly), x("x", {x0.b, x0.c, x0.l}), train(train_mode), b(x0.b), c(x0.c), l(x0.l) {
        x.value = x0.v;
        Tensor3 y = ly.forward(x0, train_mode);
        coef.resize(y.v.size());
        for (auto& v : coef) v = rng.normal();
    }

    double operator()(bool backward) {
        Tensor3 xin(b, c, l);
        xin.v = x.value;
        if (backward) {
            x.zero_grad();
            for (auto* p : layer.params()) p->zero_grad();
        }
        Tensor3 y = layer.forward(xin, train);
        double loss = 0.0;
        for (size_t i = 0; i < y.v.size(); ++i) loss += coef[i] * y.v[i];
        if (backward) {
            Tensor3 g(y.b, y.c, y.l);
            g.v = coef;
            Tensor3 gx = layer.backward(g);
            x.grad = gx.v;
        }
        return loss;
    }

    std::vector<Param*> all_params() {
        std::vector<Param*> ps{&x};
        for (auto* p : layer.params()) ps.push_back(p);
        return ps;
    }
};

GradCheckReport check_layer(Layer& layer, const Tensor3& x0, Rng& rng, bool train,
                            double tol = 1e-6) {
    LayerHarness h(layer, x0, rng, train);
    auto fn = [&](bool bk) { return h(bk); };
    return grad_check(fn, h.all_params(), 1e-5, tol);
}

}  // namespace

// ----------------------------------------------------------------------------
// conv1d
// ----------------------------------------------------------------------------
TEST(Conv1d, ZeroInputZeroBiasGivesZeroOutput) {
    Rng rng(1);
    Conv1d conv("c", 2, 3, 3, 2, 1);
    conv.init(rng);
    Tensor3 x(2, 2, 10, 0.0);
    Tensor3 y = conv.forward(x, false);
    for (double v : y.v) EXPECT_EQ(v, 0.0);
}

TEST(Conv1d, LengthChain100_50_25_13) {
    EXPECT_EQ(Conv1d::out_len(100, 3, 2, 1), 50);
    EXPECT_EQ(Conv1d::out_len(50, 3, 2, 1), 25);
    EXPECT_EQ(Conv1d::out_len(25, 3, 2, 1), 13);
}

TEST(Conv1d, LengthFormulaProperty) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int l = (int)rng.uniform_int(1, 40);
        const int k = (int)rng.uniform_int(1, 5);
        const int s = (int)rng.uniform_int(1, 3);
        const int p = (int)rng.uniform_int(0, 3);
        const int lo = (l + 2 * p - k) / s + 1;
        if (lo < 1) continue;
        Conv1d conv("c", 1, 1, k, s, p);
        Tensor3 x(1, 1, l, 0.0);
        Tensor3 y = conv.forward(x, false);
        EXPECT_EQ(y.l, lo);
    }
}

TEST(Conv1d, SlidingSumOracle) {
    // k=3, s=1, p=0, weights all one: output is the sum of input triples
    Rng rng(3);
    Conv1d conv("c", 1, 1, 3, 1, 0);
    auto ps = conv.params();
    std::fill(ps[0]->value.begin(), ps[0]->value.end(), 1.0);
    Tensor3 x = random_tensor(1, 1, 5, rng);
    Tensor3 y = conv.forward(x, false);
    ASSERT_EQ(y.l, 3);
    for (int i = 0; i < 3; ++i) {
        const double expect = x.at(0, 0, i) + x.at(0, 0, i + 1) + x.at(0, 0, i + 2);
        EXPECT_NEAR(y.at(0, 0, i), expect, 1e-12);
    }
}

TEST(Conv1d, ChannelMismatchThrows) {
    Rng rng(1);
    Conv1d conv("c", 2, 3, 3, 1, 1);
    conv.init(rng);
    Tensor3 x(1, 4, 10);
    EXPECT_THROW(conv.forward(x, false), DataError);
}

TEST(Conv1d, BackwardZeroGradOutGivesZeroGrads) {
    Rng rng(5);
    Conv1d conv("c", 2, 3, 3, 2, 1);
    conv.init(rng);
    Tensor3 x = random_tensor(2, 2, 9, rng);
    Tensor3 y = conv.forward(x, false);
    Tensor3 g(y.b, y.c, y.l, 0.0);
    Tensor3 gx = conv.backward(g);
    for (double v : gx.v) EXPECT_EQ(v, 0.0);
    for (auto* p : conv.params())
        for (double v : p->grad) EXPECT_EQ(v, 0.0);
}

TEST(Conv1d, BackwardLinearInGradOut) {
    Rng rng(11);
    Conv1d conv("c", 2, 2, 3, 1, 1);
    conv.init(rng);
    Tensor3 x = random_tensor(1, 2, 7, rng);
    conv.forward(x, false);
    Tensor3 g = random_tensor(1, 2, 7, rng);
    for (auto* p : conv.params()) p->zero_grad();
    Tensor3 gx1 = conv.backward(g);
    Tensor3 g2 = g;
    for (auto& v : g2.v) v *= 2.5;
    for (auto* p : conv.params()) p->zero_grad();
    Tensor3 gx2 = conv.backward(g2);
    for (size_t i = 0; i < gx1.v.size(); ++i) EXPECT_NEAR(gx2.v[i], 2.5 * gx1.v[i], 1e-12);
}

TEST(Conv1d, GradMatchesFiniteDifferences) {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const int b = (int)rng.uniform_int(1, 2);
        const int cin = (int)rng.uniform_int(1, 3);
        const int cout = (int)rng.uniform_int(1, 3);
        const int l = (int)rng.uniform_int(3, 7);
        const int s = (int)rng.uniform_int(1, 2);
        Conv1d conv("c", cin, cout, 3, s, 1);
        conv.init(rng);
        Tensor3 x = random_tensor(b, cin, l, rng);
        auto rep = check_layer(conv, x, rng, false, 1e-6);
        EXPECT_TRUE(rep.pass) << "worst " << rep.worst << " err " << rep.max_rel_err;
    }
}

// ----------------------------------------------------------------------------
// transposed conv
// ----------------------------------------------------------------------------
TEST(ConvTranspose1d, InvertsLengthChain) {
    EXPECT_EQ(ConvTranspose1d::out_len(13, 3, 2, 1, 0), 25);
    EXPECT_EQ(ConvTranspose1d::out_len(25, 3, 2, 1, 1), 50);
    EXPECT_EQ(ConvTranspose1d::out_len(50, 3, 2, 1, 1), 100);
}

TEST(ConvTranspose1d, GradMatchesFiniteDifferences) {
    Rng rng(31);
    for (int trial = 0; trial < 8; ++trial) {
        const int b = (int)rng.uniform_int(1, 2);
        const int cin = (int)rng.uniform_int(1, 3);
        const int cout = (int)rng.uniform_int(1, 3);
        const int l = (int)rng.uniform_int(3, 6);
        const int op = (int)rng.uniform_int(0, 1);
        ConvTranspose1d tc("t", cin, cout, 3, 2, 1, op);
        tc.init(rng);
        Tensor3 x = random_tensor(b, cin, l, rng);
        auto rep = check_layer(tc, x, rng, false, 1e-6);
        EXPECT_TRUE(rep.pass) << "worst " << rep.worst << " err " << rep.max_rel_err;
    }
}

// ----------------------------------------------------------------------------
// batchnorm
// ----------------------------------------------------------------------------
TEST(BatchNorm, ConstantInputMapsToBeta) {
    BatchNorm1d bn("bn", 2);
    Tensor3 x(2, 2, 4, 3.5);
    Tensor3 y = bn.forward(x, true);
    for (double v : y.v) EXPECT_NEAR(v, 0.0, 1e-9);  // gamma=1, beta=0
}

TEST(BatchNorm, TrainOutputMeanEqualsBeta) {
    Rng rng(41);
    BatchNorm1d bn("bn", 3);
    auto ps = bn.params();
    for (auto& v : ps[1]->value) v = 0.7;  // beta
    Tensor3 x = random_tensor(4, 3, 5, rng, 2.0);
    Tensor3 y = bn.forward(x, true);
    for (int c = 0; c < 3; ++c) {
        double m = 0.0;
        for (int b = 0; b < 4; ++b)
            for (int l = 0; l < 5; ++l) m += y.at(b, c, l);
        m /= 20.0;
        EXPECT_NEAR(m, 0.7, 1e-10);
    }
}

TEST(BatchNorm, TrainGradMatchesFiniteDifferences) {
    Rng rng(43);
    BatchNorm1d bn("bn", 2);
    auto ps = bn.params();
    for (auto& v : ps[0]->value) v = 1.3;
    for (auto& v : ps[1]->value) v = -0.2;
    Tensor3 x = random_tensor(2, 2, 4, rng);
    auto rep = check_layer(bn, x, rng, true, 1e-5);
    EXPECT_TRUE(rep.pass) << "worst " << rep.worst << " err " << rep.max_rel_err;
}

TEST(BatchNorm, EvalIsPureAffineNoBatchCoupling) {
    Rng rng(47);
    BatchNorm1d bn("bn", 2);
    Tensor3 warm = random_tensor(4, 2, 6, rng);
    bn.forward(warm, true);  // populate running stats

    Tensor3 a = random_tensor(1, 2, 3, rng);
    Tensor3 b = random_tensor(1, 2, 3, rng);
    Tensor3 both(2, 2, 3);
    for (int c = 0; c < 2; ++c)
        for (int l = 0; l < 3; ++l) {
            both.at(0, c, l) = a.at(0, c, l);
            both.at(1, c, l) = b.at(0, c, l);
        }
    Tensor3 ya = bn.forward(a, false);
    Tensor3 yboth = bn.forward(both, false);
    for (int c = 0; c < 2; ++c)
        for (int l = 0; l < 3; ++l) EXPECT_EQ(ya.at(0, c, l), yboth.at(0, c, l));
}

TEST(BatchNorm, EvalModeDoesNotTouchRunningStats) {
    Rng rng(53);
    BatchNorm1d bn("bn", 2);
    bn.forward(random_tensor(3, 2, 4, rng), true);
    auto rm = bn.running_mean();
    auto rv = bn.running_var();
    bn.forward(random_tensor(3, 2, 4, rng), false);
    EXPECT_EQ(rm, bn.running_mean());
    EXPECT_EQ(rv, bn.running_var());
}

TEST(BatchNorm, TrainModeRequiresTwoSamples) {
    BatchNorm1d bn("bn", 1);
    Tensor3 x(1, 1, 1, 1.0);
    EXPECT_THROW(bn.forward(x, true), NumericError);
}

// ----------------------------------------------------------------------------
// linear / activations
// ----------------------------------------------------------------------------
TEST(Linear, GradMatchesFiniteDifferences) {
    Rng rng(61);
    Linear lin("l", 5, 3);
    lin.init(rng);
    Tensor3 x = random_tensor(3, 5, 1, rng);
    auto rep = check_layer(lin, x, rng, false, 1e-6);
    EXPECT_TRUE(rep.pass) << rep.worst << " " << rep.max_rel_err;
}

TEST(Activations, GradMatchesFiniteDifferences) {
    Rng rng(67);
    LeakyReLU lr(0.2);
    Tensor3 x = random_tensor(2, 3, 4, rng);
    // keep away from the kink
    for (auto& v : x.v)
        if (std::fabs(v) < 0.05) v += 0.1;
    auto rep1 = check_layer(lr, x, rng, false, 1e-6);
    EXPECT_TRUE(rep1.pass) << rep1.max_rel_err;

    Tanh th;
    Tensor3 x2 = random_tensor(2, 3, 4, rng);
    auto rep2 = check_layer(th, x2, rng, false, 1e-6);
    EXPECT_TRUE(rep2.pass) << rep2.max_rel_err;
}

// ----------------------------------------------------------------------------
// Adam
// ----------------------------------------------------------------------------
TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Param p("p", {3});
    p.value = {1.0, -2.0, 0.5};
    std::vector<Param*> ps{&p};
    AdamState st;
    st.init(ps);
    adam_step(ps, st, AdamConfig{});
    EXPECT_EQ(st.step, 1);
    EXPECT_EQ(p.value[0], 1.0);
    EXPECT_EQ(p.value[1], -2.0);
    EXPECT_EQ(p.value[2], 0.5);
}

TEST(Adam, ConstantGradientMovesOppositeSign) {
    Param p("p", {1});
    p.value = {0.0};
    std::vector<Param*> ps{&p};
    AdamState st;
    st.init(ps);
    AdamConfig cfg;
    double prev = 0.0;
    for (int i = 0; i < 50; ++i) {
        p.grad[0] = 2.0;  // positive gradient: parameter must decrease
        adam_step(ps, st, cfg);
        EXPECT_LT(p.value[0], prev);
        prev = p.value[0];
    }
}

TEST(Adam, SingleStepClosedForm) {
    // from zero moments: mhat = g, vhat = g^2, delta = -lr*g/(|g|+eps)
    const double g = 0.37, lr = 1e-3, eps = 1e-8;
    Param p("p", {1});
    p.value = {1.0};
    p.grad = {g};
    std::vector<Param*> ps{&p};
    AdamState st;
    st.init(ps);
    AdamConfig cfg;
    cfg.lr = lr;
    adam_step(ps, st, cfg);
    const double expect = 1.0 - lr * g / (std::fabs(g) + eps);
    EXPECT_NEAR(p.value[0], expect, 1e-15);
}

TEST(Adam, DeterministicBitwise) {
    auto run = [] {
        Param p("p", {4});
        p.value = {0.1, 0.2, 0.3, 0.4};
        std::vector<Param*> ps{&p};
        AdamState st;
        st.init(ps);
        AdamConfig cfg;
        for (int i = 0; i < 20; ++i) {
            for (int j = 0; j < 4; ++j) p.grad[j] = std::sin(i + j);
            adam_step(ps, st, cfg);
        }
        return p.value;
    };
    EXPECT_EQ(run(), run());
}

TEST(Adam, NonfiniteGradientNamesParameter) {
    Param p("weights.w", {1});
    p.grad = {std::nan("")};
    std::vector<Param*> ps{&p};
    AdamState st;
    st.init(ps);
    try {
        adam_step(ps, st, AdamConfig{});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("weights.w"), std::string::npos);
    }
}

// ----------------------------------------------------------------------------
// grad_check itself
// ----------------------------------------------------------------------------
TEST(GradCheck, QuadraticNorm) {
    Param p("theta", {4});
    Rng rng(71);
    for (auto& v : p.value) v = rng.normal();
    auto fn = [&](bool backward) {
        double loss = 0.0;
        for (double v : p.value) loss += v * v;
        if (backward) {
            p.zero_grad();
            for (size_t i = 0; i < p.size(); ++i) p.grad[i] = 2.0 * p.value[i];
        }
        return loss;
    };
    auto rep = grad_check(fn, {&p}, 1e-5, 1e-9);
    EXPECT_TRUE(rep.pass) << rep.max_rel_err;
}

// ----------------------------------------------------------------------------
// randomized layer battery (unit-scale version of the acceptance suite)
// ----------------------------------------------------------------------------
TEST(GradBattery, RandomizedShapes) {
    Rng rng(101);
    int trials = 0;
    for (int t = 0; t < 30; ++t) {
        const int b = (int)rng.uniform_int(1, 2);
        const int cin = (int)rng.uniform_int(1, 3);
        const int cout = (int)rng.uniform_int(1, 3);
        const int l = (int)rng.uniform_int(4, 8);
        const int kind = t % 3;
        std::unique_ptr<Layer> layer;
        bool train = false;
        if (kind == 0) {
            auto c = std::make_unique<Conv1d>("c", cin, cout, 3, (int)rng.uniform_int(1, 2), 1);
            c->init(rng);
            layer = std::move(c);
        } else if (kind == 1) {
            auto c = std::make_unique<ConvTranspose1d>("t", cin, cout, 3, 2, 1,
                                                       (int)rng.uniform_int(0, 1));
            c->init(rng);
            layer = std::move(c);
        } else {
            layer = std::make_unique<BatchNorm1d>("bn", cin);
            train = true;
        }
        Tensor3 x = random_tensor(b, cin, l, rng);
        auto rep = check_layer(*layer, x, rng, train, 1e-4);
        EXPECT_TRUE(rep.pass) << "trial " << t << " worst " << rep.worst << " err "
                              << rep.max_rel_err;
        ++trials;
    }
    EXPECT_EQ(trials, 30);
}

// ----------------------------------------------------------------------------
// checkpoint round trip
// ----------------------------------------------------------------------------
TEST(Checkpoint, BitwiseRoundTrip) {
    Rng rng(211);
    Conv1d conv("net.conv", 2, 3, 3, 2, 1);
    conv.init(rng);
    BatchNorm1d bn("net.bn", 3);
    bn.forward(random_tensor(2, 3, 6, rng), true);

    std::vector<Param*> params = conv.params();
    for (auto* p : bn.params()) params.push_back(p);
    auto buffers = bn.buffers();

    const std::string path = std::filesystem::temp_directory_path() / "ts_ckpt_test.ckpt";
    save_checkpoint(path, params, buffers);

    Conv1d conv2("net.conv", 2, 3, 3, 2, 1);
    BatchNorm1d bn2("net.bn", 3);
    std::vector<Param*> params2 = conv2.params();
    for (auto* p : bn2.params()) params2.push_back(p);
    load_checkpoint(path, params2, bn2.buffers());

    for (size_t i = 0; i < params.size(); ++i) EXPECT_EQ(params[i]->value, params2[i]->value);
    EXPECT_EQ(bn.running_mean(), bn2.running_mean());
    EXPECT_EQ(bn.running_var(), bn2.running_var());
    std::filesystem::remove(path);
}

TEST(Checkpoint, MissingParameterThrows) {
    const std::string path = std::filesystem::temp_directory_path() / "ts_ckpt_test2.ckpt";
    Param a("a", {2});
    a.value = {1.0, 2.0};
    save_checkpoint(path, {&a});
    Param b("b", {2});
    EXPECT_THROW(load_checkpoint(path, {&b}), DataError);
    std::filesystem::remove(path);
}
