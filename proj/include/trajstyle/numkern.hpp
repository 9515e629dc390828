// ============================================================================
// numkern.hpp - Differentiable numerical kernels with explicit backward
// passes: 1D strided convolution (plain and transposed), batch normalization,
// LeakyReLU/Tanh, fully connected layers, the Adam optimizer and a central
// finite-difference gradient checker. Everything is 64-bit.
//
// Convolutions are lowered to matrix multiplies (im2col/col2im); matmul is
// the single BLAS call site in common.hpp.
// ============================================================================

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "trajstyle/common.hpp"

namespace trajstyle::numkern {

// ----------------------------------------------------------------------------
// Parameters
// ----------------------------------------------------------------------------
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;

    Param() = default;
    Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
        size_t sz = 1;
        for (int d : shape) sz *= (size_t)d;
        value.assign(sz, 0.0);
        grad.assign(sz, 0.0);
    }
    size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

inline void kaiming_uniform(Param& p, int fan_in, double leaky_slope, Rng& rng) {
    const double bound = std::sqrt(6.0 / ((1.0 + leaky_slope * leaky_slope) * (double)fan_in));
    for (auto& w : p.value) w = rng.uniform(-bound, bound);
}

// ----------------------------------------------------------------------------
// im2col / col2im for 1D convolution lowering.
// col layout: rows = C*k, cols = B*Lcols, col(c*k+kk, b*Lcols+ol) maps to
// source position ol*stride + kk - pad.
// ----------------------------------------------------------------------------
inline void im2col(const Tensor3& x, int k, int stride, int pad, int lcols, Mat& col) {
    const int rows = x.c * k, cols = x.b * lcols;
    if (col.rows != rows || col.cols != cols) col = Mat(rows, cols);
    for (int c = 0; c < x.c; ++c)
        for (int kk = 0; kk < k; ++kk) {
            double* dst = col.row(c * k + kk);
            for (int b = 0; b < x.b; ++b) {
                const double* src = x.chan(b, c);
                double* d = dst + (size_t)b * lcols;
                for (int ol = 0; ol < lcols; ++ol) {
                    const int pos = ol * stride + kk - pad;
                    d[ol] = (pos >= 0 && pos < x.l) ? src[pos] : 0.0;
                }
            }
        }
}

inline void col2im_add(const Mat& col, int k, int stride, int pad, int lcols, Tensor3& out) {
    for (int c = 0; c < out.c; ++c)
        for (int kk = 0; kk < k; ++kk) {
            const double* src = col.row(c * k + kk);
            for (int b = 0; b < out.b; ++b) {
                double* dst = out.chan(b, c);
                const double* s = src + (size_t)b * lcols;
                for (int ol = 0; ol < lcols; ++ol) {
                    const int pos = ol * stride + kk - pad;
                    if (pos >= 0 && pos < out.l) dst[pos] += s[ol];
                }
            }
        }
}

// ----------------------------------------------------------------------------
// Layer interface. forward caches whatever backward needs; backward returns
// the gradient w.r.t. the layer input and accumulates parameter gradients.
// ----------------------------------------------------------------------------
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor3 forward(const Tensor3& x, bool train) = 0;
    virtual Tensor3 backward(const Tensor3& grad_out) = 0;
    virtual std::vector<Param*> params() { return {}; }
    // persistent non-trainable state (batchnorm running stats)
    virtual std::vector<std::pair<std::string, std::vector<double>*>> buffers() { return {}; }
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual std::string kind() const = 0;
};

// ----------------------------------------------------------------------------
// Conv1d: cross-correlation with zero padding.
// L_out = floor((L_in + 2p - k)/s) + 1
// ----------------------------------------------------------------------------
class Conv1d : public Layer {
public:
    Conv1d(std::string name, int in_ch, int out_ch, int k, int stride, int pad)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
          w_(name + ".w", {out_ch, in_ch, k}), b_(name + ".b", {out_ch}) {
        if (k < 1 || stride < 1 || pad < 0) throw DataError(name + ": bad conv geometry");
    }

    void init(Rng& rng, double leaky_slope = 0.2) {
        kaiming_uniform(w_, in_ch_ * k_, leaky_slope, rng);
    }

    static int out_len(int l_in, int k, int stride, int pad) {
        return (l_in + 2 * pad - k) / stride + 1;
    }

    Tensor3 forward(const Tensor3& x, bool) override {
        if (x.c != in_ch_)
            throw DataError(strformat("%s: input has %d channels, expected %d",
                                      w_.name.c_str(), x.c, in_ch_));
        const int lo = out_len(x.l, k_, stride_, pad_);
        if (lo < 1) throw DataError(w_.name + ": output length < 1");
        in_b_ = x.b;
        in_l_ = x.l;
        im2col(x, k_, stride_, pad_, lo, col_);
        Mat y_mat(out_ch_, x.b * lo);
        matmul(w_.value.data(), col_.v.data(), y_mat.v.data(), out_ch_, in_ch_ * k_, x.b * lo);
        Tensor3 y(x.b, out_ch_, lo);
        for (int b = 0; b < x.b; ++b)
            for (int oc = 0; oc < out_ch_; ++oc) {
                const double* src = y_mat.row(oc) + (size_t)b * lo;
                double* dst = y.chan(b, oc);
                const double bias = b_.value[oc];
                for (int ol = 0; ol < lo; ++ol) dst[ol] = src[ol] + bias;
            }
        return y;
    }

    Tensor3 backward(const Tensor3& g) override {
        const int lo = g.l;
        Mat g_mat(out_ch_, g.b * lo);
        for (int b = 0; b < g.b; ++b)
            for (int oc = 0; oc < out_ch_; ++oc) {
                const double* src = g.chan(b, oc);
                double* dst = g_mat.row(oc) + (size_t)b * lo;
                for (int ol = 0; ol < lo; ++ol) dst[ol] = src[ol];
            }
        for (int oc = 0; oc < out_ch_; ++oc) {
            double s = 0.0;
            const double* r = g_mat.row(oc);
            for (int j = 0; j < g_mat.cols; ++j) s += r[j];
            b_.grad[oc] += s;
        }
        matmul(g_mat.v.data(), col_.v.data(), w_.grad.data(), out_ch_, g.b * lo, in_ch_ * k_,
               false, true, 1.0, 1.0);
        Mat grad_col(in_ch_ * k_, g.b * lo);
        matmul(w_.value.data(), g_mat.v.data(), grad_col.v.data(), in_ch_ * k_, out_ch_,
               g.b * lo, true, false);
        Tensor3 gx(in_b_, in_ch_, in_l_);
        col2im_add(grad_col, k_, stride_, pad_, lo, gx);
        return gx;
    }

    std::vector<Param*> params() override { return {&w_, &b_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1d>(*this); }
    std::string kind() const override { return "conv1d"; }

    int out_channels() const { return out_ch_; }
    int kernel() const { return k_; }
    int stride() const { return stride_; }
    int pad() const { return pad_; }

private:
    int in_ch_, out_ch_, k_, stride_, pad_;
    int in_b_ = 0, in_l_ = 0;
    Param w_, b_;
    Mat col_;
};

// ----------------------------------------------------------------------------
// ConvTranspose1d, PyTorch weight convention (in_ch, out_ch, k).
// L_out = (L_in - 1)*s - 2p + k + out_pad
// ----------------------------------------------------------------------------
class ConvTranspose1d : public Layer {
public:
    ConvTranspose1d(std::string name, int in_ch, int out_ch, int k, int stride, int pad,
                    int out_pad)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad), out_pad_(out_pad),
          w_(name + ".w", {in_ch, out_ch, k}), b_(name + ".b", {out_ch}) {}

    void init(Rng& rng, double leaky_slope = 0.2) {
        kaiming_uniform(w_, in_ch_ * k_, leaky_slope, rng);
    }

    static int out_len(int l_in, int k, int stride, int pad, int out_pad) {
        return (l_in - 1) * stride - 2 * pad + k + out_pad;
    }

    Tensor3 forward(const Tensor3& x, bool) override {
        if (x.c != in_ch_)
            throw DataError(strformat("%s: input has %d channels, expected %d",
                                      w_.name.c_str(), x.c, in_ch_));
        const int lo = out_len(x.l, k_, stride_, pad_, out_pad_);
        if (lo < 1) throw DataError(w_.name + ": output length < 1");
        in_l_ = x.l;
        x_mat_ = Mat(in_ch_, x.b * x.l);
        for (int b = 0; b < x.b; ++b)
            for (int ci = 0; ci < in_ch_; ++ci) {
                const double* src = x.chan(b, ci);
                double* dst = x_mat_.row(ci) + (size_t)b * x.l;
                for (int l = 0; l < x.l; ++l) dst[l] = src[l];
            }
        Mat g_cols(out_ch_ * k_, x.b * x.l);
        matmul(w_.value.data(), x_mat_.v.data(), g_cols.v.data(), out_ch_ * k_, in_ch_,
               x.b * x.l, true, false);
        Tensor3 y(x.b, out_ch_, lo);
        col2im_add(g_cols, k_, stride_, pad_, x.l, y);
        for (int b = 0; b < x.b; ++b)
            for (int oc = 0; oc < out_ch_; ++oc) {
                double* dst = y.chan(b, oc);
                for (int l = 0; l < lo; ++l) dst[l] += b_.value[oc];
            }
        in_b_ = x.b;
        return y;
    }

    Tensor3 backward(const Tensor3& g) override {
        Mat col_g;
        im2col(g, k_, stride_, pad_, in_l_, col_g);  // (out_ch*k, B*L_in)
        Tensor3 gx(in_b_, in_ch_, in_l_);
        Mat gx_mat(in_ch_, in_b_ * in_l_);
        matmul(w_.value.data(), col_g.v.data(), gx_mat.v.data(), in_ch_, out_ch_ * k_,
               in_b_ * in_l_);
        for (int b = 0; b < in_b_; ++b)
            for (int ci = 0; ci < in_ch_; ++ci) {
                const double* src = gx_mat.row(ci) + (size_t)b * in_l_;
                double* dst = gx.chan(b, ci);
                for (int l = 0; l < in_l_; ++l) dst[l] = src[l];
            }
        matmul(x_mat_.v.data(), col_g.v.data(), w_.grad.data(), in_ch_, in_b_ * in_l_,
               out_ch_ * k_, false, true, 1.0, 1.0);
        for (int oc = 0; oc < out_ch_; ++oc) {
            double s = 0.0;
            for (int b = 0; b < g.b; ++b) {
                const double* r = g.chan(b, oc);
                for (int l = 0; l < g.l; ++l) s += r[l];
            }
            b_.grad[oc] += s;
        }
        return gx;
    }

    std::vector<Param*> params() override { return {&w_, &b_}; }
    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<ConvTranspose1d>(*this);
    }
    std::string kind() const override { return "conv_transpose1d"; }

private:
    int in_ch_, out_ch_, k_, stride_, pad_, out_pad_;
    int in_b_ = 0, in_l_ = 0;
    Param w_, b_;
    Mat x_mat_;
};

// ----------------------------------------------------------------------------
// BatchNorm1d over (B, L) per channel.
// Train mode uses biased batch statistics and updates running stats with
// momentum; eval mode is a pure per-element affine map of the running stats.
// ----------------------------------------------------------------------------
class BatchNorm1d : public Layer {
public:
    BatchNorm1d(std::string name, int channels, double eps = 1e-5, double momentum = 0.1)
        : ch_(channels), eps_(eps), momentum_(momentum), gamma_(name + ".gamma", {channels}),
          beta_(name + ".beta", {channels}), running_mean_(channels, 0.0),
          running_var_(channels, 1.0), name_(std::move(name)) {
        std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
    }

    Tensor3 forward(const Tensor3& x, bool train) override {
        if (x.c != ch_) throw DataError(name_ + ": channel mismatch");
        const int n = x.b * x.l;
        train_ = train;
        if (train && n < 2) throw NumericError(name_ + ": batchnorm train mode needs B*L >= 2");
        xhat_ = Tensor3(x.b, x.c, x.l);
        invstd_.assign(ch_, 0.0);
        Tensor3 y(x.b, x.c, x.l);
        for (int c = 0; c < ch_; ++c) {
            double mean, var;
            if (train) {
                double s = 0.0;
                for (int b = 0; b < x.b; ++b) {
                    const double* p = x.chan(b, c);
                    for (int l = 0; l < x.l; ++l) s += p[l];
                }
                mean = s / n;
                double sv = 0.0;
                for (int b = 0; b < x.b; ++b) {
                    const double* p = x.chan(b, c);
                    for (int l = 0; l < x.l; ++l) sv += (p[l] - mean) * (p[l] - mean);
                }
                var = sv / n;
                running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
                running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var;
            } else {
                mean = running_mean_[c];
                var = running_var_[c];
            }
            const double inv = 1.0 / std::sqrt(var + eps_);
            invstd_[c] = inv;
            const double g = gamma_.value[c], be = beta_.value[c];
            for (int b = 0; b < x.b; ++b) {
                const double* p = x.chan(b, c);
                double* xh = xhat_.chan(b, c);
                double* yy = y.chan(b, c);
                for (int l = 0; l < x.l; ++l) {
                    xh[l] = (p[l] - mean) * inv;
                    yy[l] = g * xh[l] + be;
                }
            }
        }
        return y;
    }

    Tensor3 backward(const Tensor3& g) override {
        const int n = g.b * g.l;
        Tensor3 gx(g.b, g.c, g.l);
        for (int c = 0; c < ch_; ++c) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int b = 0; b < g.b; ++b) {
                const double* gp = g.chan(b, c);
                const double* xh = xhat_.chan(b, c);
                for (int l = 0; l < g.l; ++l) {
                    sum_g += gp[l];
                    sum_gx += gp[l] * xh[l];
                }
            }
            beta_.grad[c] += sum_g;
            gamma_.grad[c] += sum_gx;
            const double gam = gamma_.value[c], inv = invstd_[c];
            for (int b = 0; b < g.b; ++b) {
                const double* gp = g.chan(b, c);
                const double* xh = xhat_.chan(b, c);
                double* gxp = gx.chan(b, c);
                if (train_) {
                    for (int l = 0; l < g.l; ++l)
                        gxp[l] = gam * inv / n * (n * gp[l] - sum_g - xh[l] * sum_gx);
                } else {
                    for (int l = 0; l < g.l; ++l) gxp[l] = gam * inv * gp[l];
                }
            }
        }
        return gx;
    }

    std::vector<Param*> params() override { return {&gamma_, &beta_}; }
    std::vector<std::pair<std::string, std::vector<double>*>> buffers() override {
        return {{name_ + ".running_mean", &running_mean_}, {name_ + ".running_var", &running_var_}};
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm1d>(*this); }
    std::string kind() const override { return "batchnorm1d"; }

    const std::vector<double>& running_mean() const { return running_mean_; }
    const std::vector<double>& running_var() const { return running_var_; }

private:
    int ch_;
    double eps_, momentum_;
    Param gamma_, beta_;
    std::vector<double> running_mean_, running_var_;
    std::string name_;
    Tensor3 xhat_;
    std::vector<double> invstd_;
    bool train_ = true;
};

// ----------------------------------------------------------------------------
// Activations
// ----------------------------------------------------------------------------
class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}

    Tensor3 forward(const Tensor3& x, bool) override {
        x_ = x;
        Tensor3 y = x;
        for (auto& v : y.v) v = v >= 0.0 ? v : slope_ * v;
        return y;
    }
    Tensor3 backward(const Tensor3& g) override {
        Tensor3 gx = g;
        for (size_t i = 0; i < gx.v.size(); ++i)
            gx.v[i] = x_.v[i] >= 0.0 ? g.v[i] : slope_ * g.v[i];
        return gx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyReLU>(*this); }
    std::string kind() const override { return "leaky_relu"; }

private:
    double slope_;
    Tensor3 x_;
};

class Tanh : public Layer {
public:
    Tensor3 forward(const Tensor3& x, bool) override {
        y_ = x;
        for (auto& v : y_.v) v = std::tanh(v);
        return y_;
    }
    Tensor3 backward(const Tensor3& g) override {
        Tensor3 gx = g;
        for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] = g.v[i] * (1.0 - y_.v[i] * y_.v[i]);
        return gx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Tanh>(*this); }
    std::string kind() const override { return "tanh"; }

private:
    Tensor3 y_;
};

// ----------------------------------------------------------------------------
// Shape plumbing
// ----------------------------------------------------------------------------
class Flatten : public Layer {
public:
    Tensor3 forward(const Tensor3& x, bool) override {
        c_ = x.c;
        l_ = x.l;
        Tensor3 y(x.b, x.c * x.l, 1);
        y.v = x.v;
        return y;
    }
    Tensor3 backward(const Tensor3& g) override {
        Tensor3 gx(g.b, c_, l_);
        gx.v = g.v;
        return gx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
    std::string kind() const override { return "flatten"; }

private:
    int c_ = 0, l_ = 0;
};

class Unflatten : public Layer {
public:
    Unflatten(int c, int l) : c_(c), l_(l) {}
    Tensor3 forward(const Tensor3& x, bool) override {
        if (x.c != c_ * l_) throw DataError("unflatten: size mismatch");
        Tensor3 y(x.b, c_, l_);
        y.v = x.v;
        return y;
    }
    Tensor3 backward(const Tensor3& g) override {
        Tensor3 gx(g.b, c_ * l_, 1);
        gx.v = g.v;
        return gx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Unflatten>(*this); }
    std::string kind() const override { return "unflatten"; }

private:
    int c_, l_;
};

// ----------------------------------------------------------------------------
// Linear on (B, F, 1) tensors.
// ----------------------------------------------------------------------------
class Linear : public Layer {
public:
    Linear(std::string name, int in_f, int out_f)
        : in_f_(in_f), out_f_(out_f), w_(name + ".w", {out_f, in_f}), b_(name + ".b", {out_f}) {}

    void init(Rng& rng, double leaky_slope = 0.2) { kaiming_uniform(w_, in_f_, leaky_slope, rng); }

    Tensor3 forward(const Tensor3& x, bool) override {
        if (x.c != in_f_ || x.l != 1)
            throw DataError(strformat("%s: input features %dx%d, expected %dx1",
                                      w_.name.c_str(), x.c, x.l, in_f_));
        x_ = x;
        Tensor3 y(x.b, out_f_, 1);
        matmul(x.v.data(), w_.value.data(), y.v.data(), x.b, in_f_, out_f_, false, true);
        for (int b = 0; b < x.b; ++b)
            for (int o = 0; o < out_f_; ++o) y.at(b, o, 0) += b_.value[o];
        return y;
    }

    Tensor3 backward(const Tensor3& g) override {
        matmul(g.v.data(), x_.v.data(), w_.grad.data(), out_f_, g.b, in_f_, true, false, 1.0,
               1.0);
        for (int o = 0; o < out_f_; ++o) {
            double s = 0.0;
            for (int b = 0; b < g.b; ++b) s += g.at(b, o, 0);
            b_.grad[o] += s;
        }
        Tensor3 gx(g.b, in_f_, 1);
        matmul(g.v.data(), w_.value.data(), gx.v.data(), g.b, out_f_, in_f_);
        return gx;
    }

    std::vector<Param*> params() override { return {&w_, &b_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }
    std::string kind() const override { return "linear"; }

private:
    int in_f_, out_f_;
    Param w_, b_;
    Tensor3 x_;
};

// ----------------------------------------------------------------------------
// Sequential container with per-layer output taps (used by feature extraction
// and style transfer, which need gradients injected at interior layers).
// ----------------------------------------------------------------------------
class Sequential {
public:
    Sequential() = default;
    Sequential(const Sequential& o) {
        for (const auto& l : o.layers_) layers_.push_back(l->clone());
    }
    Sequential& operator=(const Sequential& o) {
        layers_.clear();
        for (const auto& l : o.layers_) layers_.push_back(l->clone());
        return *this;
    }
    Sequential(Sequential&&) = default;
    Sequential& operator=(Sequential&&) = default;

    void add(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }
    Layer& layer(int i) { return *layers_[i]; }
    const Layer& layer(int i) const { return *layers_[i]; }
    int size() const { return (int)layers_.size(); }

    Tensor3 forward(const Tensor3& x, bool train, int upto = -1,
                    std::vector<Tensor3>* taps = nullptr) {
        const int last = upto < 0 ? size() - 1 : upto;
        if (taps) taps->assign((size_t)last + 1, Tensor3());
        Tensor3 h = x;
        for (int i = 0; i <= last; ++i) {
            h = layers_[i]->forward(h, train);
            if (taps) (*taps)[i] = h;
        }
        return h;
    }

    // Plain backward from the final layer.
    Tensor3 backward(const Tensor3& g) {
        Tensor3 h = g;
        for (int i = size() - 1; i >= 0; --i) h = layers_[i]->backward(h);
        return h;
    }

    // Backward with gradients injected at the outputs of tapped layers.
    Tensor3 backward_taps(const std::map<int, Tensor3>& tap_grads) {
        int deepest = -1;
        for (const auto& [idx, t] : tap_grads) deepest = std::max(deepest, idx);
        if (deepest < 0) throw DataError("backward_taps: no tap gradients");
        Tensor3 g;
        bool have = false;
        for (int i = deepest; i >= 0; --i) {
            auto it = tap_grads.find(i);
            if (it != tap_grads.end()) {
                if (!have) {
                    g = it->second;
                    have = true;
                } else {
                    if (!g.same_shape(it->second)) throw DataError("backward_taps: shape clash");
                    for (size_t j = 0; j < g.v.size(); ++j) g.v[j] += it->second.v[j];
                }
            }
            g = layers_[i]->backward(g);
        }
        return g;
    }

    std::vector<Param*> params() {
        std::vector<Param*> ps;
        for (auto& l : layers_)
            for (auto* p : l->params()) ps.push_back(p);
        return ps;
    }
    std::vector<std::pair<std::string, std::vector<double>*>> buffers() {
        std::vector<std::pair<std::string, std::vector<double>*>> bs;
        for (auto& l : layers_)
            for (auto& b : l->buffers()) bs.push_back(b);
        return bs;
    }
    void zero_grad() {
        for (auto* p : params()) p->zero_grad();
    }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// ----------------------------------------------------------------------------
// Adam with bias correction. Deterministic given identical inputs and state.
// ----------------------------------------------------------------------------
struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    long step = 0;
    std::vector<std::vector<double>> m, v;

    void init(const std::vector<Param*>& ps) {
        step = 0;
        m.clear();
        v.clear();
        for (auto* p : ps) {
            m.emplace_back(p->size(), 0.0);
            v.emplace_back(p->size(), 0.0);
        }
    }
};

inline void adam_step(const std::vector<Param*>& ps, AdamState& st, const AdamConfig& cfg) {
    if (st.m.size() != ps.size()) throw DataError("adam: state/parameter count mismatch");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, (double)st.step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, (double)st.step);
    for (size_t i = 0; i < ps.size(); ++i) {
        Param& p = *ps[i];
        if (st.m[i].size() != p.size())
            throw DataError("adam: shape mismatch for parameter " + p.name);
        for (size_t j = 0; j < p.size(); ++j) {
            const double g = p.grad[j];
            if (!std::isfinite(g))
                throw NumericError("adam: nonfinite gradient in parameter " + p.name);
            st.m[i][j] = cfg.beta1 * st.m[i][j] + (1.0 - cfg.beta1) * g;
            st.v[i][j] = cfg.beta2 * st.v[i][j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = st.m[i][j] / bc1;
            const double vhat = st.v[i][j] / bc2;
            p.value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// ----------------------------------------------------------------------------
// Gradient checking. loss(true) must zero grads, run forward+backward and
// return the scalar loss; loss(false) is forward only. Relative error uses
// max(1, |a|, |n|) in the denominator so near-zero gradients compare
// absolutely. Coordinates that fail at the base step are re-measured at
// smaller steps: a wrong gradient stays wrong at every h, while a central
// difference that happens to straddle a piecewise-linear activation kink
// becomes exact once h drops below the distance to the kink.
// ----------------------------------------------------------------------------
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;
    bool pass = false;
};

inline GradCheckReport grad_check(const std::function<double(bool)>& loss,
                                  const std::vector<Param*>& ps, double h = 1e-5,
                                  double tol = 1e-4) {
    loss(true);
    std::vector<std::vector<double>> analytic;
    for (auto* p : ps) analytic.push_back(p->grad);
    GradCheckReport rep;
    for (size_t i = 0; i < ps.size(); ++i) {
        Param& p = *ps[i];
        for (size_t j = 0; j < p.size(); ++j) {
            const double keep = p.value[j];
            const double a = analytic[i][j];
            double rel = 0.0;
            for (double step : {h, h / 8.0, h / 64.0}) {
                p.value[j] = keep + step;
                const double lp = loss(false);
                p.value[j] = keep - step;
                const double lm = loss(false);
                p.value[j] = keep;
                const double numeric = (lp - lm) / (2.0 * step);
                rel = std::fabs(a - numeric) /
                      std::max({1.0, std::fabs(a), std::fabs(numeric)});
                if (rel < tol) break;
            }
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = strformat("%s[%zu]", p.name.c_str(), j);
            }
        }
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace trajstyle::numkern
