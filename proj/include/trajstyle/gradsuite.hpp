// ============================================================================
// gradsuite.hpp - Randomized gradient validation battery: every backward pass
// (conv, transposed conv, batchnorm, full VAE loss, style-transfer objective,
// BC loss) against central finite differences on seeded small instances.
// ============================================================================

#pragma once

#include <string>
#include <vector>

#include "trajstyle/adapt.hpp"
#include "trajstyle/common.hpp"
#include "trajstyle/numkern.hpp"
#include "trajstyle/styletx.hpp"
#include "trajstyle/vae.hpp"

namespace trajstyle::gradsuite {

struct SuiteRow {
    std::string op;
    int instances = 0;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct SuiteReport {
    std::vector<SuiteRow> rows;
    int total_instances = 0;
    double tolerance = 1e-4;
    bool pass = true;
};

namespace detail {

inline Tensor3 random_tensor(int b, int c, int l, Rng& rng) {
    Tensor3 t(b, c, l);
    for (auto& v : t.v) v = rng.normal();
    return t;
}

// linear functional of the layer output exercises the full backward pass
inline double layer_instance(numkern::Layer& layer, const Tensor3& x0, bool train, Rng& rng) {
    Tensor3 probe = x0;
    Tensor3 y0 = layer.forward(probe, train);
    std::vector<double> coef(y0.v.size());
    for (auto& v : coef) v = rng.normal();

    numkern::Param xp("input", {x0.b, x0.c, x0.l});
    xp.value = x0.v;
    auto fn = [&](bool backward) {
        Tensor3 xin(x0.b, x0.c, x0.l);
        xin.v = xp.value;
        if (backward) {
            xp.zero_grad();
            for (auto* p : layer.params()) p->zero_grad();
        }
        Tensor3 y = layer.forward(xin, train);
        double loss = 0.0;
        for (size_t i = 0; i < y.v.size(); ++i) loss += coef[i] * y.v[i];
        if (backward) {
            Tensor3 g(y.b, y.c, y.l);
            g.v = coef;
            xp.grad = layer.backward(g).v;
        }
        return loss;
    };
    std::vector<numkern::Param*> ps{&xp};
    for (auto* p : layer.params()) ps.push_back(p);
    return numkern::grad_check(fn, ps, 1e-5, 1.0).max_rel_err;
}

}  // namespace detail

inline SuiteReport run_gradient_suite(uint64_t seed, double tolerance = 1e-4,
                                      int conv_n = 30, int tconv_n = 10, int bn_n = 30,
                                      int elbo_n = 12, int style_n = 9, int bc_n = 9) {
    using namespace numkern;
    SuiteReport report;
    report.tolerance = tolerance;
    Rng rng(seed_mix(seed, 0x97ad));

    auto add_row = [&](const std::string& op, int n, double err) {
        SuiteRow row{op, n, err, err < tolerance};
        report.pass = report.pass && row.pass;
        report.total_instances += n;
        report.rows.push_back(row);
    };

    {
        double worst = 0.0;
        for (int t = 0; t < conv_n; ++t) {
            const int cin = (int)rng.uniform_int(1, 3);
            Conv1d conv("c", cin, (int)rng.uniform_int(1, 3), 3, (int)rng.uniform_int(1, 2), 1);
            conv.init(rng);
            Tensor3 xin = detail::random_tensor((int)rng.uniform_int(1, 2), cin,
                                                (int)rng.uniform_int(4, 8), rng);
            worst = std::max(worst, detail::layer_instance(conv, xin, false, rng));
        }
        add_row("conv1d", conv_n, worst);
    }
    {
        double worst = 0.0;
        for (int t = 0; t < tconv_n; ++t) {
            const int cin = (int)rng.uniform_int(1, 3);
            ConvTranspose1d tc("t", cin, (int)rng.uniform_int(1, 3), 3, 2, 1,
                               (int)rng.uniform_int(0, 1));
            tc.init(rng);
            Tensor3 xin = detail::random_tensor((int)rng.uniform_int(1, 2), cin,
                                                (int)rng.uniform_int(3, 6), rng);
            worst = std::max(worst, detail::layer_instance(tc, xin, false, rng));
        }
        add_row("conv_transpose1d", tconv_n, worst);
    }
    {
        double worst = 0.0;
        for (int t = 0; t < bn_n; ++t) {
            const int c = (int)rng.uniform_int(1, 3);
            BatchNorm1d bn("bn", c);
            auto ps = bn.params();
            for (auto& v : ps[0]->value) v = rng.uniform(0.5, 1.5);
            for (auto& v : ps[1]->value) v = rng.normal(0.0, 0.3);
            Tensor3 xin = detail::random_tensor((int)rng.uniform_int(2, 3), c,
                                                (int)rng.uniform_int(3, 6), rng);
            worst = std::max(worst, detail::layer_instance(bn, xin, true, rng));
        }
        add_row("batchnorm1d", bn_n, worst);
    }
    {
        double worst = 0.0;
        for (int t = 0; t < elbo_n; ++t) {
            vae::VaeArch a;
            a.n_s = 2;
            a.window = 8;
            a.channels = {3, 4};
            a.latent = 3;
            vae::Vae v(a, rng.uniform_int(1, 1 << 30));
            Tensor3 x = detail::random_tensor(2, a.n_s, a.window, rng);
            Mat eps(2, a.latent);
            for (auto& e : eps.v) e = rng.normal();
            auto params = v.params();
            auto fn = [&](bool bk) {
                if (bk)
                    for (auto* p : params) p->zero_grad();
                return vae::vae_elbo_pass(v, x, eps, 1.0, bk, true).total;
            };
            auto rep = numkern::grad_check(fn, params, 1e-5, 1.0);
            if (std::getenv("TRAJSTYLE_GRADSUITE_VERBOSE"))
                log_info(strformat("elbo instance %d: err %.6g worst %s", t, rep.max_rel_err,
                                   rep.worst.c_str()));
            if (rep.max_rel_err > tolerance && std::getenv("TRAJSTYLE_GRADSUITE_SAVE")) {
                const std::string base = std::getenv("TRAJSTYLE_GRADSUITE_SAVE");
                v.save(base + strformat("_elbo%d.ckpt", t));
                std::vector<std::pair<std::string, numkern::NamedArray>> arrays;
                arrays.push_back({"x", {{x.b, x.c, x.l}, x.v}});
                arrays.push_back({"eps", {{eps.rows, eps.cols}, eps.v}});
                numkern::save_arrays(base + strformat("_elbo%d_data.ckpt", t), arrays);
            }
            worst = std::max(worst, rep.max_rel_err);
        }
        add_row("vae_elbo", elbo_n, worst);
    }
    {
        double worst = 0.0;
        for (int t = 0; t < style_n; ++t) {
            vae::VaeArch a;
            a.n_s = 2;
            a.window = 16;
            a.channels = {4, 6};
            a.latent = 4;
            vae::Vae v(a, rng.uniform_int(1, 1 << 30));
            styletx::TransferConfig cfg;
            cfg.content_layers = {2};
            cfg.style_layers = {2, 5};
            Mat content = Mat(a.window, a.n_s), style = Mat(a.window, a.n_s);
            for (auto& x : content.v) x = rng.normal();
            for (auto& x : style.v) x = rng.normal();
            auto targets = styletx::make_targets(v.enc, content, style, cfg);
            numkern::Param wp("window", {a.window, a.n_s});
            wp.value = content.v;
            for (auto& x : wp.value) x += 0.1 * rng.normal();
            Mat grad;
            auto fn = [&](bool bk) {
                Mat w(a.window, a.n_s);
                w.v = wp.value;
                auto it = styletx::transfer_objective(w, targets, v.enc, cfg,
                                                      bk ? &grad : nullptr);
                if (bk) wp.grad = grad.v;
                return it.total;
            };
            worst = std::max(worst, numkern::grad_check(fn, {&wp}, 1e-5, 1.0).max_rel_err);
        }
        add_row("style_transfer_objective", style_n, worst);
    }
    {
        double worst = 0.0;
        for (int t = 0; t < bc_n; ++t) {
            adapt::PolicyArch a;
            a.n_s = 2;
            a.window = 8;
            a.channels = {3, 4};
            adapt::PolicyNet net(a, rng.uniform_int(1, 1 << 30));
            Tensor3 x = detail::random_tensor(2, a.n_s, a.window, rng);
            Mat target(2, a.n_a);
            for (auto& v : target.v) v = rng.uniform(-0.8, 0.8);
            auto params = net.params();
            auto fn = [&](bool bk) {
                if (bk)
                    for (auto* p : params) p->zero_grad();
                Tensor3 y = net.forward_batch(x, true);
                double loss = 0.0;
                Tensor3 g(y.b, y.c, y.l);
                for (int i = 0; i < y.b; ++i)
                    for (int j = 0; j < a.n_a; ++j) {
                        const double d = y.at(i, j, 0) - target.at(i, j);
                        loss += d * d / (y.b * a.n_a);
                        g.at(i, j, 0) = 2.0 * d / (y.b * a.n_a);
                    }
                if (bk) net.net().backward(g);
                return loss;
            };
            worst = std::max(worst, numkern::grad_check(fn, params, 1e-5, 1.0).max_rel_err);
        }
        add_row("bc_loss", bc_n, worst);
    }
    return report;
}

}  // namespace trajstyle::gradsuite
