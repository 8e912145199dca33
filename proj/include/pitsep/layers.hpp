#pragma once

// Layer vocabulary with reverse-mode gradients. Data layout is channels x time.
// Training runs in float; gradient checks instantiate the same code in double.

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pitsep/errors.hpp"
#include "pitsep/signal.hpp"

namespace pitsep {

template <class S>
struct ParamRef {
    std::string name;
    Mat<S>* value;
    Mat<S>* grad;
};

template <class S>
using Rng = std::mt19937_64;

template <class S>
void fanin_init(Mat<S>& w, Eigen::Index fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, fan_in)));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<S>(u(rng));
}

template <class S>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Mat<S> forward(const Mat<S>& x, bool training) = 0;
    virtual Mat<S> backward(const Mat<S>& dy) = 0;
    virtual void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) {}
    virtual std::string kind() const = 0;
};

// ---------------------------------------------------------------------------

template <class S>
class Linear : public Layer<S> {
public:
    Linear(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng, bool zero_init = false)
        : in_(in), out_(out) {
        w_.setZero(out, in);
        b_.setZero(out, 1);
        if (!zero_init) {
            fanin_init(w_, in, rng);
            fanin_init(b_, in, rng);
        }
        dw_.setZero(out, in);
        db_.setZero(out, 1);
    }
    static std::unique_ptr<Linear> identity(Eigen::Index n) {
        std::mt19937_64 rng(0);
        auto l = std::make_unique<Linear>(n, n, rng, true);
        l->w_.setIdentity(n, n);
        return l;
    }
    Mat<S> forward(const Mat<S>& x, bool) override {
        if (x.rows() != in_)
            throw StructuralError("linear: expected " + std::to_string(in_) + " input channels, got " +
                                  std::to_string(x.rows()));
        x_ = x;
        return (w_ * x).colwise() + b_.col(0);
    }
    Mat<S> backward(const Mat<S>& dy) override {
        dw_ += dy * x_.transpose();
        db_.col(0) += dy.rowwise().sum();
        return w_.transpose() * dy;
    }
    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        out.push_back({p + ".weight", &w_, &dw_});
        out.push_back({p + ".bias", &b_, &db_});
    }
    std::string kind() const override { return "linear"; }
    Mat<S> w_, b_, dw_, db_;

private:
    Eigen::Index in_, out_;
    Mat<S> x_;
};

// General 1-D convolution. Stride 1 keeps the time length (symmetric zero
// padding of dilation*(kernel-1)); stride > 1 emits ceil(T/stride) steps with
// total padding kernel - stride.
template <class S>
class Conv1d : public Layer<S> {
public:
    Conv1d(Eigen::Index in, Eigen::Index out, Eigen::Index kernel, Eigen::Index dilation,
           Eigen::Index stride, std::mt19937_64& rng, bool bias = true)
        : in_(in), out_(out), k_(kernel), d_(dilation), s_(stride), has_bias_(bias) {
        if (kernel < 1 || dilation < 1 || stride < 1) throw ParamError("conv1d: bad hyperparameters");
        taps_.resize(k_);
        dtaps_.resize(k_);
        for (Eigen::Index j = 0; j < k_; ++j) {
            taps_[j].setZero(out, in);
            fanin_init(taps_[j], in * k_, rng);
            dtaps_[j].setZero(out, in);
        }
        b_.setZero(out, 1);
        if (bias) fanin_init(b_, in * k_, rng);
        db_.setZero(out, 1);
        if (s_ == 1) {
            pad_left_ = d_ * (k_ - 1) / 2;
            pad_right_ = d_ * (k_ - 1) - pad_left_;
        } else {
            const Eigen::Index total = std::max<Eigen::Index>(0, d_ * (k_ - 1) + 1 - s_);
            pad_left_ = total / 2;
            pad_right_ = total - total / 2;
        }
    }
    Mat<S> forward(const Mat<S>& x, bool) override {
        if (x.rows() != in_)
            throw StructuralError("conv1d: expected " + std::to_string(in_) + " input channels, got " +
                                  std::to_string(x.rows()));
        x_ = x;
        const Eigen::Index T = x.cols();
        const Eigen::Index To = (T + pad_left_ + pad_right_ - d_ * (k_ - 1) - 1) / s_ + 1;
        Mat<S> y = Mat<S>::Zero(out_, To);
        y.colwise() += b_.col(0);
        for (Eigen::Index j = 0; j < k_; ++j) {
            for (Eigen::Index o = 0; o < To; ++o) {
                const Eigen::Index t = o * s_ + j * d_ - pad_left_;
                if (t >= 0 && t < T) y.col(o) += taps_[j] * x.col(t);
            }
        }
        return y;
    }
    Mat<S> backward(const Mat<S>& dy) override {
        const Eigen::Index T = x_.cols();
        const Eigen::Index To = dy.cols();
        Mat<S> dx = Mat<S>::Zero(in_, T);
        if (has_bias_) db_.col(0) += dy.rowwise().sum();
        for (Eigen::Index j = 0; j < k_; ++j) {
            for (Eigen::Index o = 0; o < To; ++o) {
                const Eigen::Index t = o * s_ + j * d_ - pad_left_;
                if (t >= 0 && t < T) {
                    dtaps_[j] += dy.col(o) * x_.col(t).transpose();
                    dx.col(t) += taps_[j].transpose() * dy.col(o);
                }
            }
        }
        return dx;
    }
    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        for (Eigen::Index j = 0; j < k_; ++j)
            out.push_back({p + ".tap" + std::to_string(j), &taps_[j], &dtaps_[j]});
        if (has_bias_) out.push_back({p + ".bias", &b_, &db_});
    }
    std::string kind() const override { return "conv1d"; }

private:
    Eigen::Index in_, out_, k_, d_, s_, pad_left_ = 0, pad_right_ = 0;
    bool has_bias_;
    std::vector<Mat<S>> taps_, dtaps_;
    Mat<S> b_, db_, x_;
};

// Depthwise convolution, stride 1, symmetric padding.
template <class S>
class DepthwiseConv1d : public Layer<S> {
public:
    DepthwiseConv1d(Eigen::Index channels, Eigen::Index kernel, Eigen::Index dilation,
                    std::mt19937_64& rng)
        : c_(channels), k_(kernel), d_(dilation) {
        w_.setZero(c_, k_);
        fanin_init(w_, k_, rng);
        dw_.setZero(c_, k_);
        b_.setZero(c_, 1);
        fanin_init(b_, k_, rng);
        db_.setZero(c_, 1);
        pad_ = d_ * (k_ - 1) / 2;
    }
    Mat<S> forward(const Mat<S>& x, bool) override {
        if (x.rows() != c_)
            throw StructuralError("depthwise-conv1d: expected " + std::to_string(c_) +
                                  " channels, got " + std::to_string(x.rows()));
        x_ = x;
        const Eigen::Index T = x.cols();
        Mat<S> y = Mat<S>::Zero(c_, T);
        y.colwise() += b_.col(0);
        for (Eigen::Index j = 0; j < k_; ++j) {
            const Eigen::Index off = j * d_ - pad_;
            const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
            const Eigen::Index hi = std::min(T, T - off);
            if (lo < hi)
                y.block(0, lo, c_, hi - lo).array() +=
                    x.block(0, lo + off, c_, hi - lo).array().colwise() * w_.col(j).array();
        }
        return y;
    }
    Mat<S> backward(const Mat<S>& dy) override {
        const Eigen::Index T = x_.cols();
        Mat<S> dx = Mat<S>::Zero(c_, T);
        db_.col(0) += dy.rowwise().sum();
        for (Eigen::Index j = 0; j < k_; ++j) {
            const Eigen::Index off = j * d_ - pad_;
            const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
            const Eigen::Index hi = std::min(T, T - off);
            if (lo < hi) {
                dw_.col(j) += (dy.block(0, lo, c_, hi - lo).array() *
                               x_.block(0, lo + off, c_, hi - lo).array())
                                  .rowwise()
                                  .sum()
                                  .matrix();
                dx.block(0, lo + off, c_, hi - lo).array() +=
                    dy.block(0, lo, c_, hi - lo).array().colwise() * w_.col(j).array();
            }
        }
        return dx;
    }
    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        out.push_back({p + ".weight", &w_, &dw_});
        out.push_back({p + ".bias", &b_, &db_});
    }
    std::string kind() const override { return "depthwise-conv1d"; }

private:
    Eigen::Index c_, k_, d_, pad_;
    Mat<S> w_, dw_, b_, db_, x_;
};

template <class S>
class ReLU : public Layer<S> {
public:
    Mat<S> forward(const Mat<S>& x, bool) override {
        x_ = x;
        return x.cwiseMax(S(0));
    }
    Mat<S> backward(const Mat<S>& dy) override {
        return (x_.array() > S(0)).template cast<S>() * dy.array();
    }
    std::string kind() const override { return "relu"; }

private:
    Mat<S> x_;
};

template <class S>
class Sigmoid : public Layer<S> {
public:
    Mat<S> forward(const Mat<S>& x, bool) override {
        y_ = x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
        return y_;
    }
    Mat<S> backward(const Mat<S>& dy) override {
        return (dy.array() * y_.array() * (S(1) - y_.array())).matrix();
    }
    std::string kind() const override { return "sigmoid"; }

private:
    Mat<S> y_;
};

// Single learnable slope, initialized to 0.25.
template <class S>
class PReLU : public Layer<S> {
public:
    PReLU() {
        a_.setConstant(1, 1, S(0.25));
        da_.setZero(1, 1);
    }
    Mat<S> forward(const Mat<S>& x, bool) override {
        x_ = x;
        const S a = a_(0, 0);
        return x.unaryExpr([a](S v) { return v > S(0) ? v : a * v; });
    }
    Mat<S> backward(const Mat<S>& dy) override {
        const S a = a_(0, 0);
        da_(0, 0) += (dy.array() * (x_.array() < S(0)).template cast<S>() * x_.array()).sum();
        return (x_.array() > S(0))
            .select(dy, (dy.array() * a).matrix());
    }
    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        out.push_back({p + ".slope", &a_, &da_});
    }
    std::string kind() const override { return "prelu"; }

private:
    Mat<S> a_, da_, x_;
};

// Input rows are C stacked groups of N channels; softmax runs across the C
// group entries that share a channel index and time step.
template <class S>
class SoftmaxOverSources : public Layer<S> {
public:
    explicit SoftmaxOverSources(int sources) : c_(sources) {}
    Mat<S> forward(const Mat<S>& x, bool) override {
        if (x.rows() % c_ != 0)
            throw StructuralError("softmax-over-sources: rows not divisible by source count");
        const Eigen::Index n = x.rows() / c_;
        y_.resize(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index t = 0; t < x.cols(); ++t) {
                S mx = x(i, t);
                for (int c = 1; c < c_; ++c) mx = std::max(mx, x(c * n + i, t));
                S z = S(0);
                for (int c = 0; c < c_; ++c) z += std::exp(x(c * n + i, t) - mx);
                for (int c = 0; c < c_; ++c) y_(c * n + i, t) = std::exp(x(c * n + i, t) - mx) / z;
            }
        return y_;
    }
    Mat<S> backward(const Mat<S>& dy) override {
        const Eigen::Index n = y_.rows() / c_;
        Mat<S> dx(y_.rows(), y_.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index t = 0; t < y_.cols(); ++t) {
                S dot = S(0);
                for (int c = 0; c < c_; ++c) dot += dy(c * n + i, t) * y_(c * n + i, t);
                for (int c = 0; c < c_; ++c)
                    dx(c * n + i, t) = y_(c * n + i, t) * (dy(c * n + i, t) - dot);
            }
        return dx;
    }
    std::string kind() const override { return "softmax-over-sources"; }

private:
    int c_;
    Mat<S> y_;
};

// Per-channel normalization over the time axis with running statistics.
template <class S>
class BatchNorm1d : public Layer<S> {
public:
    explicit BatchNorm1d(Eigen::Index channels, double momentum = 0.1)
        : c_(channels), momentum_(momentum) {
        gamma_.setOnes(c_, 1);
        beta_.setZero(c_, 1);
        dgamma_.setZero(c_, 1);
        dbeta_.setZero(c_, 1);
        run_mean_.setZero(c_, 1);
        run_var_.setOnes(c_, 1);
    }
    Mat<S> forward(const Mat<S>& x, bool training) override {
        if (x.rows() != c_) throw StructuralError("batchnorm1d: channel mismatch");
        const Eigen::Index T = x.cols();
        Vec<S> mean(c_), var(c_);
        if (training) {
            mean = x.rowwise().mean();
            var = (x.colwise() - mean).array().square().rowwise().mean();
            run_mean_.col(0) = (S(1) - S(momentum_)) * run_mean_.col(0) + S(momentum_) * mean;
            run_var_.col(0) = (S(1) - S(momentum_)) * run_var_.col(0) + S(momentum_) * var;
        } else {
            mean = run_mean_.col(0);
            var = run_var_.col(0);
        }
        inv_std_ = (var.array() + S(kEps)).sqrt().inverse();
        xhat_ = ((x.colwise() - mean).array().colwise() * inv_std_.array()).matrix();
        training_ = training;
        return ((xhat_.array().colwise() * gamma_.col(0).array()).colwise() +
                beta_.col(0).array())
            .matrix();
    }
    Mat<S> backward(const Mat<S>& dy) override {
        const Eigen::Index T = dy.cols();
        dgamma_.col(0) += (dy.array() * xhat_.array()).rowwise().sum().matrix();
        dbeta_.col(0) += dy.rowwise().sum();
        Mat<S> dxhat = (dy.array().colwise() * gamma_.col(0).array()).matrix();
        if (!training_) return (dxhat.array().colwise() * inv_std_.array()).matrix();
        Vec<S> m1 = dxhat.rowwise().mean();
        Vec<S> m2 = (dxhat.array() * xhat_.array()).rowwise().mean();
        Mat<S> dx = ((dxhat.colwise() - m1).array() - xhat_.array().colwise() * m2.array())
                        .colwise() *
                    inv_std_.array();
        return dx.matrix();
    }
    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        out.push_back({p + ".gamma", &gamma_, &dgamma_});
        out.push_back({p + ".beta", &beta_, &dbeta_});
    }
    // Running stats are state, not optimizer-updated parameters.
    Mat<S> run_mean_, run_var_;
    std::string kind() const override { return "batchnorm1d"; }

private:
    static constexpr double kEps = 1e-5;
    Eigen::Index c_;
    double momentum_;
    bool training_ = true;
    Mat<S> gamma_, beta_, dgamma_, dbeta_, xhat_;
    Vec<S> inv_std_;
};

// Normalizes over all channels and time steps jointly (gLN).
template <class S>
class GlobalLayerNorm : public Layer<S> {
public:
    explicit GlobalLayerNorm(Eigen::Index channels) : c_(channels) {
        gamma_.setOnes(c_, 1);
        beta_.setZero(c_, 1);
        dgamma_.setZero(c_, 1);
        dbeta_.setZero(c_, 1);
    }
    Mat<S> forward(const Mat<S>& x, bool) override {
        if (x.rows() != c_) throw StructuralError("global-layernorm: channel mismatch");
        const S mean = x.mean();
        const S var = (x.array() - mean).square().mean();
        inv_std_ = S(1) / std::sqrt(var + S(kEps));
        xhat_ = ((x.array() - mean) * inv_std_).matrix();
        return ((xhat_.array().colwise() * gamma_.col(0).array()).colwise() +
                beta_.col(0).array())
            .matrix();
    }
    Mat<S> backward(const Mat<S>& dy) override {
        dgamma_.col(0) += (dy.array() * xhat_.array()).rowwise().sum().matrix();
        dbeta_.col(0) += dy.rowwise().sum();
        Mat<S> dxhat = (dy.array().colwise() * gamma_.col(0).array()).matrix();
        const S m1 = dxhat.mean();
        const S m2 = (dxhat.array() * xhat_.array()).mean();
        return ((dxhat.array() - m1 - xhat_.array() * m2) * inv_std_).matrix();
    }
    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        out.push_back({p + ".gamma", &gamma_, &dgamma_});
        out.push_back({p + ".beta", &beta_, &dbeta_});
    }
    std::string kind() const override { return "global-layernorm"; }

private:
    static constexpr double kEps = 1e-8;
    Eigen::Index c_;
    Mat<S> gamma_, beta_, dgamma_, dbeta_, xhat_;
    S inv_std_ = S(1);
};

// ---------------------------------------------------------------------------
// FiLM with weights shared across all layers that reference the same params.

template <class S>
struct FilmParams {
    Mat<S> w_scale, b_scale, w_shift, b_shift;
    Mat<S> dw_scale, db_scale, dw_shift, db_shift;

    // Identity initialization: scale 1, shift 0 regardless of the condition.
    FilmParams(Eigen::Index cond_dim, Eigen::Index channels) {
        w_scale.setZero(channels, cond_dim);
        b_scale.setOnes(channels, 1);
        w_shift.setZero(channels, cond_dim);
        b_shift.setZero(channels, 1);
        dw_scale.setZero(channels, cond_dim);
        db_scale.setZero(channels, 1);
        dw_shift.setZero(channels, cond_dim);
        db_shift.setZero(channels, 1);
    }
    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) {
        out.push_back({p + ".w_scale", &w_scale, &dw_scale});
        out.push_back({p + ".b_scale", &b_scale, &db_scale});
        out.push_back({p + ".w_shift", &w_shift, &dw_shift});
        out.push_back({p + ".b_shift", &b_shift, &db_shift});
    }
};

template <class S>
class Film : public Layer<S> {
public:
    Film(std::shared_ptr<FilmParams<S>> params) : p_(std::move(params)) {}

    // Condition matrix (cond_dim x T), already aligned to the layer's time
    // axis; the owning model sets it before forward and collects dcond after
    // backward when the conditioning path is being fine-tuned.
    void set_condition(const Mat<S>* cond) { cond_ = cond; }
    const Mat<S>& condition_grad() const { return dcond_; }

    Mat<S> forward(const Mat<S>& x, bool) override {
        if (cond_ == nullptr) throw StructuralError("film: condition not set");
        if (cond_->cols() != x.cols())
            throw StructuralError("film: condition length " + std::to_string(cond_->cols()) +
                                  " does not match " + std::to_string(x.cols()) + " time steps");
        x_ = x;
        scale_ = ((p_->w_scale * (*cond_)).colwise() + p_->b_scale.col(0));
        shift_ = ((p_->w_shift * (*cond_)).colwise() + p_->b_shift.col(0));
        return (x.array() * scale_.array() + shift_.array()).matrix();
    }
    Mat<S> backward(const Mat<S>& dy) override {
        Mat<S> dscale = (dy.array() * x_.array()).matrix();
        p_->dw_scale += dscale * cond_->transpose();
        p_->db_scale.col(0) += dscale.rowwise().sum();
        p_->dw_shift += dy * cond_->transpose();
        p_->db_shift.col(0) += dy.rowwise().sum();
        dcond_ = p_->w_scale.transpose() * dscale + p_->w_shift.transpose() * dy;
        return (dy.array() * scale_.array()).matrix();
    }
    std::string kind() const override { return "film"; }

private:
    std::shared_ptr<FilmParams<S>> p_;
    const Mat<S>* cond_ = nullptr;
    Mat<S> x_, scale_, shift_, dcond_;
};

// ---------------------------------------------------------------------------

template <class S>
class Sequential : public Layer<S> {
public:
    Sequential() = default;
    void add(std::unique_ptr<Layer<S>> l) { layers_.push_back(std::move(l)); }
    Layer<S>& at(std::size_t i) { return *layers_[i]; }
    std::size_t size() const { return layers_.size(); }

    Mat<S> forward(const Mat<S>& x, bool training) override {
        Mat<S> h = x;
        for (auto& l : layers_) h = l->forward(h, training);
        return h;
    }
    Mat<S> backward(const Mat<S>& dy) override {
        Mat<S> g = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }
    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect_params(p + "." + std::to_string(i) + "_" + layers_[i]->kind(), out);
    }
    std::string kind() const override { return "sequential"; }

private:
    std::vector<std::unique_ptr<Layer<S>>> layers_;
};

// pointwise -> PReLU -> gLN -> depthwise dilated -> [FiLM] -> PReLU -> gLN ->
// pointwise, with residual add.
template <class S>
class ResidualTcnBlock : public Layer<S> {
public:
    ResidualTcnBlock(Eigen::Index bottleneck, Eigen::Index hidden, Eigen::Index kernel,
                     Eigen::Index dilation, std::mt19937_64& rng,
                     std::shared_ptr<FilmParams<S>> film = nullptr) {
        body_.add(std::make_unique<Linear<S>>(bottleneck, hidden, rng));
        body_.add(std::make_unique<PReLU<S>>());
        body_.add(std::make_unique<GlobalLayerNorm<S>>(hidden));
        body_.add(std::make_unique<DepthwiseConv1d<S>>(hidden, kernel, dilation, rng));
        if (film) {
            auto f = std::make_unique<Film<S>>(film);
            film_layer_ = f.get();
            body_.add(std::move(f));
        }
        body_.add(std::make_unique<PReLU<S>>());
        body_.add(std::make_unique<GlobalLayerNorm<S>>(hidden));
        body_.add(std::make_unique<Linear<S>>(hidden, bottleneck, rng));
    }
    Film<S>* film_layer() { return film_layer_; }
    Mat<S> forward(const Mat<S>& x, bool training) override {
        return x + body_.forward(x, training);
    }
    Mat<S> backward(const Mat<S>& dy) override { return dy + body_.backward(dy); }
    void collect_params(const std::string& p, std::vector<ParamRef<S>>& out) override {
        // Shared FiLM params are registered once by the owning model.
        std::vector<ParamRef<S>> tmp;
        body_.collect_params(p, tmp);
        for (auto& r : tmp)
            if (r.name.find("film") == std::string::npos) out.push_back(r);
    }
    std::string kind() const override { return "residual-tcn-block"; }

private:
    Sequential<S> body_;
    Film<S>* film_layer_ = nullptr;
};

template <class S>
void zero_grads(std::vector<ParamRef<S>>& params) {
    for (auto& p : params) p.grad->setZero();
}

}  // namespace pitsep
