#pragma once

// Model zoo: learnable encoder/decoder, TCN mask separator (optionally
// FiLM-conditioned), clustering embedding network, deep-feature encoder and
// the small STFT-domain mask separator.

#include <array>
#include <memory>
#include <optional>

#include "pitsep/checkpoint.hpp"
#include "pitsep/layers.hpp"
#include "pitsep/network.hpp"
#include "pitsep/signal.hpp"

namespace pitsep {

// ---------------------------------------------------------------------------
// Encoder/decoder: E = ReLU(U Y), X̂ = Ŝᵀ V followed by overlap-add.

template <class S>
struct EncodeCache {
    Mat<S> frames;  // K x L
    Mat<S> pre;     // N x K, pre-ReLU
};

template <class S>
struct BasicEncoderDecoder {
    Mat<S> U, V;    // N x L each
    Mat<S> dU, dV;
    Eigen::Index frame_length = 16;
    Eigen::Index stride = 8;
    Eigen::Index filters = 512;

    BasicEncoderDecoder() = default;
    BasicEncoderDecoder(Eigen::Index L, Eigen::Index St, Eigen::Index N, std::mt19937_64& rng)
        : frame_length(L), stride(St), filters(N) {
        if (N < 1 || L < St || St < 1) throw ParamError("encoder/decoder: bad L/S/N");
        U.setZero(N, L);
        V.setZero(N, L);
        fanin_init(U, L, rng);
        fanin_init(V, N, rng);
        dU.setZero(N, L);
        dV.setZero(N, L);
    }

    Mat<S> encode(const std::vector<S>& wave, EncodeCache<S>* cache = nullptr) const {
        if (static_cast<Eigen::Index>(wave.size()) < frame_length)
            throw ParamError("encode: signal shorter than one frame");
        FrameMatrix<S> fm = frame_signal(wave, frame_length, stride);
        Mat<S> pre = U * fm.frames.transpose();  // N x K
        if (cache) {
            cache->frames = std::move(fm.frames);
            cache->pre = pre;
        }
        return pre.cwiseMax(S(0));
    }
    Mat<S> encode(const BasicWaveform<S>& w, EncodeCache<S>* cache = nullptr) const {
        return encode(w.samples, cache);
    }

    // dE -> accumulates dU from the cached forward.
    void encode_backward(const Mat<S>& dE, const EncodeCache<S>& cache) {
        Mat<S> dpre = (cache.pre.array() > S(0)).template cast<S>() * dE.array();
        dU += dpre * cache.frames;
    }

    std::vector<S> decode(const Mat<S>& latent, Eigen::Index out_len) const {
        const Eigen::Index K = latent.cols();
        if (latent.rows() != filters) throw ParamError("decode: latent filter count mismatch");
        const Eigen::Index covered = (K - 1) * stride + frame_length;
        if (out_len < 1 || out_len > covered)
            throw ParamError("decode: out_len inconsistent with frame count");
        FrameMatrix<S> fm;
        fm.frames = latent.transpose() * V;  // K x L
        fm.frame_length = frame_length;
        fm.stride = stride;
        return overlap_add(fm, out_len);
    }

    // Frames before the overlap-add; used by the per-frame permutation search.
    Mat<S> decode_frames(const Mat<S>& latent) const { return latent.transpose() * V; }

    // dwave -> dlatent, accumulating dV.
    Mat<S> decode_backward(const std::vector<S>& dwave, const Mat<S>& latent) {
        const Eigen::Index K = latent.cols();
        Mat<S> dframes = overlap_add_adjoint(dwave, K, frame_length, stride);
        dV += latent * dframes;
        return V * dframes.transpose();
    }
    // Same when the frame reordering already happened: caller passes dframes.
    Mat<S> decode_backward_frames(const Mat<S>& dframes, const Mat<S>& latent) {
        dV += latent * dframes;
        return V * dframes.transpose();
    }

    void collect_params(std::vector<ParamRef<S>>& out) {
        out.push_back({"encdec.U", &U, &dU});
        out.push_back({"encdec.V", &V, &dV});
    }
    NetworkSpec spec() const {
        NetworkSpec s;
        s.add("encoder-decoder", {{"L", frame_length}, {"S", stride}, {"N", filters}});
        return s;
    }
};

using EncoderDecoder = BasicEncoderDecoder<float>;

// ---------------------------------------------------------------------------
// Ideal latent targets (softmax masks from encoded ground-truth sources).

template <class S>
struct IdealTargetsCache {
    EncodeCache<S> mix_cache;
    std::array<EncodeCache<S>, 2> src_cache;
    Mat<S> E;
    std::array<Mat<S>, 2> A;  // encoded sources (post-ReLU)
    std::array<Mat<S>, 2> M;  // softmax masks
};

template <class S>
std::array<Mat<S>, 2> ideal_latent_targets(const BasicEncoderDecoder<S>& ed,
                                           const BasicWaveform<S>& mixture,
                                           const std::vector<BasicWaveform<S>>& sources,
                                           IdealTargetsCache<S>* cache = nullptr) {
    if (sources.size() != 2) throw ParamError("ideal_latent_targets: exactly two sources required");
    for (const auto& s : sources)
        if (s.samples.size() != mixture.samples.size())
            throw ParamError("ideal_latent_targets: source/mixture length mismatch");
    IdealTargetsCache<S> local;
    IdealTargetsCache<S>& c = cache ? *cache : local;
    c.E = ed.encode(mixture, &c.mix_cache);
    for (int i = 0; i < 2; ++i) c.A[i] = ed.encode(sources[i], &c.src_cache[i]);
    std::array<Mat<S>, 2> out;
    for (int i = 0; i < 2; ++i) c.M[i].resize(c.E.rows(), c.E.cols());
    for (Eigen::Index n = 0; n < c.E.rows(); ++n)
        for (Eigen::Index k = 0; k < c.E.cols(); ++k) {
            const S a0 = c.A[0](n, k), a1 = c.A[1](n, k);
            const S mx = std::max(a0, a1);
            const S e0 = std::exp(a0 - mx), e1 = std::exp(a1 - mx);
            c.M[0](n, k) = e0 / (e0 + e1);
            c.M[1](n, k) = e1 / (e0 + e1);
        }
    for (int i = 0; i < 2; ++i) out[i] = (c.M[i].array() * c.E.array()).matrix();
    return out;
}

// Backward through the ideal-target construction; dS[i] are gradients w.r.t.
// the returned targets. Accumulates into ed.dU.
template <class S>
void ideal_latent_targets_backward(BasicEncoderDecoder<S>& ed, const IdealTargetsCache<S>& c,
                                   const std::array<Mat<S>, 2>& dS) {
    Mat<S> dE = (dS[0].array() * c.M[0].array() + dS[1].array() * c.M[1].array()).matrix();
    std::array<Mat<S>, 2> dM;
    for (int i = 0; i < 2; ++i) dM[i] = (dS[i].array() * c.E.array()).matrix();
    // Softmax jacobian per (n, k) over the two sources.
    std::array<Mat<S>, 2> dA;
    for (int i = 0; i < 2; ++i) dA[i].resize(c.E.rows(), c.E.cols());
    for (Eigen::Index n = 0; n < c.E.rows(); ++n)
        for (Eigen::Index k = 0; k < c.E.cols(); ++k) {
            const S m0 = c.M[0](n, k), m1 = c.M[1](n, k);
            const S dot = dM[0](n, k) * m0 + dM[1](n, k) * m1;
            dA[0](n, k) = m0 * (dM[0](n, k) - dot);
            dA[1](n, k) = m1 * (dM[1](n, k) - dot);
        }
    ed.encode_backward(dE, c.mix_cache);
    for (int i = 0; i < 2; ++i) ed.encode_backward(dA[i], c.src_cache[i]);
}

// ---------------------------------------------------------------------------
// TCN mask separator.

struct SeparatorConfig {
    long filters = 512;     // N, matches the encoder
    long bottleneck = 64;
    long hidden = 128;
    long kernel = 3;
    long dilations_per_repeat = 4;  // dilations 1, 2, 4, ...
    long repeats = 2;
    long sources = 2;
    long film_cond_dim = 0;  // 0 disables FiLM conditioning
};

template <class S>
class BasicSeparator {
public:
    BasicSeparator(const SeparatorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
        if (cfg.film_cond_dim > 0)
            film_ = std::make_shared<FilmParams<S>>(cfg.film_cond_dim, cfg.hidden);
        net_ = build_network<S>(spec(), rng, film_);
        // Collect the FiLM layers for condition wiring.
        collect_film(*net_);
    }

    NetworkSpec spec() const {
        NetworkSpec s;
        s.add("global-layernorm", {{"channels", cfg_.filters}});
        s.add("linear", {{"in", cfg_.filters}, {"out", cfg_.bottleneck}});
        for (long r = 0; r < cfg_.repeats; ++r)
            for (long d = 0; d < cfg_.dilations_per_repeat; ++d)
                s.add("residual-tcn-block",
                      {{"bottleneck", cfg_.bottleneck},
                       {"hidden", cfg_.hidden},
                       {"kernel", cfg_.kernel},
                       {"dilation", 1L << d},
                       {"film", cfg_.film_cond_dim > 0 ? 1L : 0L}});
        s.add("prelu");
        s.add("linear", {{"in", cfg_.bottleneck}, {"out", cfg_.sources * cfg_.filters}});
        s.add("softmax-over-sources", {{"sources", cfg_.sources}});
        return s;
    }

    // Mask prediction; cond (cond_dim x K) required iff FiLM is configured.
    Mat<S> forward_masks(const Mat<S>& latent, const Mat<S>* cond, bool training) {
        if ((cond != nullptr) != (film_ != nullptr))
            throw StructuralError("separator: condition supplied iff the model has FiLM layers");
        for (auto* f : film_layers_) f->set_condition(cond);
        return net_->forward(latent, training);
    }

    // Masks applied to the latent mixture.
    std::array<Mat<S>, 2> separate(const Mat<S>& latent, const Mat<S>* cond = nullptr,
                                   bool training = false) {
        if (latent.rows() != cfg_.filters)
            throw StructuralError("separator: latent channel mismatch");
        last_latent_ = latent;
        last_masks_ = forward_masks(latent, cond, training);
        const Eigen::Index n = cfg_.filters;
        std::array<Mat<S>, 2> out;
        for (int c = 0; c < 2; ++c)
            out[c] = (last_masks_.middleRows(c * n, n).array() * latent.array()).matrix();
        return out;
    }

    // dOut[c] w.r.t. separate() outputs -> gradient w.r.t. the input latent,
    // combining the direct mask-multiplication path and the network path.
    Mat<S> separate_backward(const std::array<Mat<S>, 2>& dout) {
        const Eigen::Index n = cfg_.filters;
        Mat<S> dmasks(2 * n, last_latent_.cols());
        Mat<S> dlatent = Mat<S>::Zero(n, last_latent_.cols());
        for (int c = 0; c < 2; ++c) {
            dmasks.middleRows(c * n, n) = (dout[c].array() * last_latent_.array()).matrix();
            dlatent.array() += dout[c].array() * last_masks_.middleRows(c * n, n).array();
        }
        dlatent += net_->backward(dmasks);
        return dlatent;
    }

    // Gradient w.r.t. the FiLM condition, summed over all conditioned layers.
    Mat<S> condition_grad() const {
        Mat<S> g;
        for (auto* f : film_layers_) {
            if (g.size() == 0)
                g = f->condition_grad();
            else
                g += f->condition_grad();
        }
        return g;
    }

    void collect_params(std::vector<ParamRef<S>>& out) {
        net_->collect_params("separator", out);
        if (film_) film_->collect_params("separator.film_shared", out);
    }
    const SeparatorConfig& config() const { return cfg_; }
    bool has_film() const { return film_ != nullptr; }
    std::size_t film_layer_count() const { return film_layers_.size(); }

private:
    void collect_film(Sequential<S>& seq) {
        for (std::size_t i = 0; i < seq.size(); ++i)
            if (auto* blk = dynamic_cast<ResidualTcnBlock<S>*>(&seq.at(i)))
                if (blk->film_layer()) film_layers_.push_back(blk->film_layer());
    }
    SeparatorConfig cfg_;
    std::unique_ptr<Sequential<S>> net_;
    std::shared_ptr<FilmParams<S>> film_;
    std::vector<Film<S>*> film_layers_;
    Mat<S> last_latent_, last_masks_;
};

using Separator = BasicSeparator<float>;

// ---------------------------------------------------------------------------
// Clustering embedding network: batchnorm each input, concatenate, project,
// two k3 convolutions with PReLU, TCN, linear head, unit-norm rows.

struct ClusterNetConfig {
    long filters = 512;     // N of the latent inputs
    long width = 512;
    long bottleneck = 64;
    long hidden = 128;
    long kernel = 3;
    long dilations_per_repeat = 4;
    long repeats = 1;
    long embed_dim = 40;
};

template <class S>
class BasicClusterNet {
public:
    BasicClusterNet(const ClusterNetConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
        for (int i = 0; i < 3; ++i) bn_[i] = std::make_unique<BatchNorm1d<S>>(cfg.filters);
        net_ = build_network<S>(trunk_spec(), rng);
    }

    NetworkSpec trunk_spec() const {
        NetworkSpec s;
        s.add("linear", {{"in", 3 * cfg_.filters}, {"out", cfg_.width}});
        s.add("conv1d", {{"in", cfg_.width}, {"out", cfg_.width}, {"kernel", cfg_.kernel}});
        s.add("prelu");
        s.add("conv1d", {{"in", cfg_.width}, {"out", cfg_.width}, {"kernel", cfg_.kernel}});
        s.add("prelu");
        s.add("linear", {{"in", cfg_.width}, {"out", cfg_.bottleneck}});
        for (long r = 0; r < cfg_.repeats; ++r)
            for (long d = 0; d < cfg_.dilations_per_repeat; ++d)
                s.add("residual-tcn-block", {{"bottleneck", cfg_.bottleneck},
                                             {"hidden", cfg_.hidden},
                                             {"kernel", cfg_.kernel},
                                             {"dilation", 1L << d}});
        s.add("linear", {{"in", cfg_.bottleneck}, {"out", cfg_.embed_dim}});
        return s;
    }
    NetworkSpec spec() const {
        NetworkSpec s;
        s.add("batchnorm1d", {{"channels", cfg_.filters}, {"inputs", 3}});
        for (const auto& l : trunk_spec().layers) s.layers.push_back(l);
        return s;
    }

    // Returns embeddings as embed_dim x K with unit-norm columns.
    Mat<S> embed_frames(const Mat<S>& E, const Mat<S>& S1, const Mat<S>& S2, bool training) {
        if (E.cols() != S1.cols() || E.cols() != S2.cols() || E.rows() != S1.rows() ||
            E.rows() != S2.rows())
            throw ParamError("embed_frames: input shape mismatch across E, S1, S2");
        const Eigen::Index K = E.cols();
        Mat<S> cat(3 * cfg_.filters, K);
        cat.topRows(cfg_.filters) = bn_[0]->forward(E, training);
        cat.middleRows(cfg_.filters, cfg_.filters) = bn_[1]->forward(S1, training);
        cat.bottomRows(cfg_.filters) = bn_[2]->forward(S2, training);
        raw_ = net_->forward(cat, training);
        norms_ = raw_.colwise().norm().cwiseMax(S(1e-12));
        emb_ = raw_.array().rowwise() / norms_.transpose().array();
        return emb_;
    }

    // dEmb -> backprop through the normalization and the trunk.
    void backward(const Mat<S>& demb) {
        Mat<S> draw(raw_.rows(), raw_.cols());
        for (Eigen::Index k = 0; k < raw_.cols(); ++k) {
            const S dot = emb_.col(k).dot(demb.col(k));
            draw.col(k) = (demb.col(k) - emb_.col(k) * dot) / norms_(k);
        }
        Mat<S> dcat = net_->backward(draw);
        bn_[0]->backward(dcat.topRows(cfg_.filters));
        bn_[1]->backward(dcat.middleRows(cfg_.filters, cfg_.filters));
        bn_[2]->backward(dcat.bottomRows(cfg_.filters));
    }

    void collect_params(std::vector<ParamRef<S>>& out) {
        for (int i = 0; i < 3; ++i) bn_[i]->collect_params("clusternet.bn" + std::to_string(i), out);
        net_->collect_params("clusternet", out);
    }
    // Running batchnorm statistics, serialized alongside parameters.
    void collect_state(Checkpoint& ckpt) const {
        for (int i = 0; i < 3; ++i) {
            ckpt.put_matrix("clusternet.bn" + std::to_string(i) + ".run_mean", bn_[i]->run_mean_);
            ckpt.put_matrix("clusternet.bn" + std::to_string(i) + ".run_var", bn_[i]->run_var_);
        }
    }
    void load_state(const Checkpoint& ckpt) {
        for (int i = 0; i < 3; ++i) {
            bn_[i]->run_mean_ =
                ckpt.get_matrix<S>("clusternet.bn" + std::to_string(i) + ".run_mean");
            bn_[i]->run_var_ = ckpt.get_matrix<S>("clusternet.bn" + std::to_string(i) + ".run_var");
        }
    }
    const ClusterNetConfig& config() const { return cfg_; }

private:
    ClusterNetConfig cfg_;
    std::array<std::unique_ptr<BatchNorm1d<S>>, 3> bn_;
    std::unique_ptr<Sequential<S>> net_;
    Mat<S> raw_, emb_;
    Vec<S> norms_;
};

using ClusterNet = BasicClusterNet<float>;

// ---------------------------------------------------------------------------
// Deep-feature encoder: strided convolutional stack, one embedding per 10 ms
// at 16 kHz (overall stride 160).

struct FeatureEncoderConfig {
    long embed_dim = 256;
    long width = 64;
    uint64_t seed = 1234;  // frozen default
};

template <class S>
class BasicFeatureEncoder {
public:
    explicit BasicFeatureEncoder(const FeatureEncoderConfig& cfg) : cfg_(cfg) {
        std::mt19937_64 rng(cfg.seed);
        net_ = build_network<S>(spec(), rng);
    }

    NetworkSpec spec() const {
        NetworkSpec s;
        const long w = cfg_.width;
        const long strides[5] = {2, 2, 2, 4, 5};
        const long chans[6] = {1, w / 2, w / 2, w, w, cfg_.embed_dim};
        for (int i = 0; i < 5; ++i) {
            s.add("conv1d", {{"in", chans[i]},
                             {"out", chans[i + 1]},
                             {"kernel", 2 * strides[i]},
                             {"stride", strides[i]}});
            if (i < 4) s.add("prelu");
        }
        return s;
    }

    // wave -> embed_dim x (T/160); requires 16 kHz input.
    Mat<S> embed(const BasicWaveform<S>& wave, bool training = false) {
        if (wave.sample_rate != 16000)
            throw ParamError("deep_feature_embed: requires 16 kHz input, got " +
                             std::to_string(wave.sample_rate) + " Hz");
        Mat<S> x(1, wave.size());
        for (Eigen::Index t = 0; t < wave.size(); ++t) x(0, t) = wave.samples[t];
        return net_->forward(x, training);
    }

    // demb -> gradient w.r.t. the input waveform (fine-tune mode also
    // accumulates parameter gradients).
    std::vector<S> backward(const Mat<S>& demb) {
        Mat<S> dx = net_->backward(demb);
        std::vector<S> g(dx.cols());
        for (Eigen::Index t = 0; t < dx.cols(); ++t) g[t] = dx(0, t);
        return g;
    }

    void collect_params(std::vector<ParamRef<S>>& out) { net_->collect_params("featenc", out); }
    const FeatureEncoderConfig& config() const { return cfg_; }

private:
    FeatureEncoderConfig cfg_;
    std::unique_ptr<Sequential<S>> net_;
};

using FeatureEncoder = BasicFeatureEncoder<float>;

// Nearest-neighbor upsampling of a condition matrix to K time steps.
template <class S>
Mat<S> upsample_nearest(const Mat<S>& cond, Eigen::Index K) {
    if (cond.cols() < 1) throw ParamError("upsample_nearest: empty condition");
    Mat<S> out(cond.rows(), K);
    for (Eigen::Index j = 0; j < K; ++j)
        out.col(j) = cond.col(std::min<Eigen::Index>(cond.cols() - 1, j * cond.cols() / K));
    return out;
}

template <class S>
Mat<S> upsample_nearest_adjoint(const Mat<S>& dout, Eigen::Index Kc) {
    Mat<S> g = Mat<S>::Zero(dout.rows(), Kc);
    const Eigen::Index K = dout.cols();
    for (Eigen::Index j = 0; j < K; ++j)
        g.col(std::min<Eigen::Index>(Kc - 1, j * Kc / K)) += dout.col(j);
    return g;
}

// ---------------------------------------------------------------------------
// STFT-domain mask separator (reference-scale, three conv layers).

struct StftSeparatorConfig {
    long window_length = 256;  // 32 ms at 8 kHz
    long hop = 64;             // 8 ms
    long hidden = 64;
};

template <class S>
class BasicStftSeparator {
public:
    BasicStftSeparator(const StftSeparatorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
        net_ = build_network<S>(spec(), rng);
    }

    NetworkSpec spec() const {
        const long F = cfg_.window_length / 2 + 1;
        NetworkSpec s;
        s.add("conv1d", {{"in", F}, {"out", cfg_.hidden}, {"kernel", 3}});
        s.add("prelu");
        s.add("conv1d", {{"in", cfg_.hidden}, {"out", cfg_.hidden}, {"kernel", 3}});
        s.add("prelu");
        s.add("conv1d", {{"in", cfg_.hidden}, {"out", 2 * F}, {"kernel", 1}});
        s.add("sigmoid");
        return s;
    }

    // Predicts two real masks (each F x K_f) from the log-magnitude features.
    std::array<Mat<S>, 2> predict_masks(const BasicSpectrogram<S>& mix, bool training) {
        const Eigen::Index F = cfg_.window_length / 2 + 1;
        if (mix.bins.cols() != F || mix.window_length != cfg_.window_length)
            throw StructuralError("stft separator: spectrogram shape mismatch");
        Mat<S> feat(F, mix.bins.rows());
        for (Eigen::Index k = 0; k < mix.bins.rows(); ++k)
            for (Eigen::Index f = 0; f < F; ++f)
                feat(f, k) = std::log1p(std::abs(mix.bins(k, f)));
        Mat<S> m = net_->forward(feat, training);
        return {m.topRows(F), m.bottomRows(F)};
    }

    static std::array<BasicSpectrogram<S>, 2> apply_masks(const BasicSpectrogram<S>& mix,
                                                          const std::array<Mat<S>, 2>& masks) {
        std::array<BasicSpectrogram<S>, 2> out;
        for (int c = 0; c < 2; ++c) {
            out[c] = mix;
            for (Eigen::Index k = 0; k < mix.bins.rows(); ++k)
                for (Eigen::Index f = 0; f < mix.bins.cols(); ++f)
                    out[c].bins(k, f) = mix.bins(k, f) * masks[c](f, k);
        }
        return out;
    }

    std::array<BasicSpectrogram<S>, 2> separate(const BasicSpectrogram<S>& mix,
                                                bool training = false) {
        return apply_masks(mix, predict_masks(mix, training));
    }

    // dmasks -> parameter gradients (input features are fixed).
    void backward(const std::array<Mat<S>, 2>& dmasks) {
        Mat<S> d(2 * dmasks[0].rows(), dmasks[0].cols());
        d.topRows(dmasks[0].rows()) = dmasks[0];
        d.bottomRows(dmasks[1].rows()) = dmasks[1];
        net_->backward(d);
    }

    void collect_params(std::vector<ParamRef<S>>& out) { net_->collect_params("stftsep", out); }
    const StftSeparatorConfig& config() const { return cfg_; }

private:
    StftSeparatorConfig cfg_;
    std::unique_ptr<Sequential<S>> net_;
};

using StftSeparator = BasicStftSeparator<float>;

}  // namespace pitsep
