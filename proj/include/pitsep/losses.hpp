#pragma once

// Training objectives: SI-SNR/SNR, uPIT, the tPIT frame-permutation searches
// (time, latent, STFT), the GE2E permutation-softmax loss, the pairwise
// similarity baseline, and the uPIT + deep-feature composite.
//
// Permutation labels: 0 = identity, 1 = swap (C = 2 throughout). Argmin ties
// resolve to the identity.

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "pitsep/errors.hpp"
#include "pitsep/models.hpp"
#include "pitsep/signal.hpp"

namespace pitsep {

struct LossReport {
    double loss = 0.0;
    int utterance_perm = 0;
    std::vector<int> frame_perms;
    std::map<std::string, double> terms;
};

constexpr double kSiSnrEps = 1e-8;
constexpr double kSiSnrClampDb = 80.0;

// ---------------------------------------------------------------------------
// SI-SNR / SNR

template <class S>
double si_snr(const std::vector<S>& ref, const std::vector<S>& est) {
    if (ref.size() != est.size()) throw ParamError("si_snr: length mismatch");
    double rr = 0.0, re = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        rr += static_cast<double>(ref[i]) * ref[i];
        re += static_cast<double>(ref[i]) * est[i];
    }
    if (rr <= 0.0) throw DegenerateInputError("si_snr: all-zero reference");
    const double a = re / rr;
    double pe = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double e = static_cast<double>(est[i]) - a * ref[i];
        pe += e * e;
    }
    const double ps = a * a * rr;
    return std::min(kSiSnrClampDb, 10.0 * std::log10(ps / (pe + kSiSnrEps)));
}

template <class S>
double si_snr(const BasicWaveform<S>& ref, const BasicWaveform<S>& est) {
    return si_snr(ref.samples, est.samples);
}

// d(si_snr)/d(est) scaled by upstream; zero in the clamped regime.
template <class S>
std::vector<S> si_snr_backward(const std::vector<S>& ref, const std::vector<S>& est,
                               double upstream) {
    double rr = 0.0, re = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        rr += static_cast<double>(ref[i]) * ref[i];
        re += static_cast<double>(ref[i]) * est[i];
    }
    const double a = re / rr;
    double pe = 0.0;
    std::vector<double> err(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        err[i] = static_cast<double>(est[i]) - a * ref[i];
        pe += err[i] * err[i];
    }
    const double ps = a * a * rr;
    std::vector<S> g(ref.size(), S(0));
    if (10.0 * std::log10(ps / (pe + kSiSnrEps)) >= kSiSnrClampDb) return g;
    const double c = 10.0 / std::log(10.0);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = c * (2.0 * a * ref[i] / ps - 2.0 * err[i] / (pe + kSiSnrEps));
        g[i] = static_cast<S>(upstream * d);
    }
    return g;
}

template <class S>
double snr(const std::vector<S>& ref, const std::vector<S>& est) {
    if (ref.size() != est.size()) throw ParamError("snr: length mismatch");
    double pr = 0.0, pe = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        pr += static_cast<double>(ref[i]) * ref[i];
        const double e = static_cast<double>(ref[i]) - est[i];
        pe += e * e;
    }
    if (pr <= 0.0) throw DegenerateInputError("snr: all-zero reference");
    return std::min(kSiSnrClampDb, 10.0 * std::log10(pr / (pe + kSiSnrEps)));
}

template <class S>
std::vector<S> snr_backward(const std::vector<S>& ref, const std::vector<S>& est, double upstream) {
    double pr = 0.0, pe = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        pr += static_cast<double>(ref[i]) * ref[i];
        const double e = static_cast<double>(ref[i]) - est[i];
        pe += e * e;
    }
    std::vector<S> g(ref.size(), S(0));
    if (10.0 * std::log10(pr / (pe + kSiSnrEps)) >= kSiSnrClampDb) return g;
    const double c = 10.0 / std::log(10.0);
    for (std::size_t i = 0; i < ref.size(); ++i)
        g[i] = static_cast<S>(upstream * c * 2.0 * (static_cast<double>(ref[i]) - est[i]) /
                              (pe + kSiSnrEps));
    return g;
}

// ---------------------------------------------------------------------------
// uPIT

template <class S>
LossReport upit_loss(const std::array<std::vector<S>, 2>& ests,
                     const std::array<std::vector<S>, 2>& refs) {
    const double id = -0.5 * (si_snr(refs[0], ests[0]) + si_snr(refs[1], ests[1]));
    const double sw = -0.5 * (si_snr(refs[1], ests[0]) + si_snr(refs[0], ests[1]));
    LossReport r;
    r.utterance_perm = sw < id ? 1 : 0;
    r.loss = std::min(id, sw);
    r.terms["perm_identity"] = id;
    r.terms["perm_swap"] = sw;
    return r;
}

// Gradients w.r.t. both estimates for the permutation chosen by the report.
template <class S>
std::array<std::vector<S>, 2> upit_loss_backward(const std::array<std::vector<S>, 2>& ests,
                                                 const std::array<std::vector<S>, 2>& refs,
                                                 const LossReport& report, double upstream = 1.0) {
    const int p = report.utterance_perm;
    std::array<std::vector<S>, 2> g;
    for (int c = 0; c < 2; ++c)
        g[c] = si_snr_backward(refs[p == 0 ? c : 1 - c], ests[c], -0.5 * upstream);
    return g;
}

// ---------------------------------------------------------------------------
// Frame-level permutation searches

template <class S>
std::vector<int> best_frame_perms_time(const std::array<FrameMatrix<S>, 2>& est_frames,
                                       const std::array<FrameMatrix<S>, 2>& ref_frames) {
    const Eigen::Index K = est_frames[0].frames.rows();
    const Eigen::Index L = est_frames[0].frames.cols();
    for (int c = 0; c < 2; ++c)
        if (ref_frames[c].frames.rows() != K || ref_frames[c].frames.cols() != L ||
            est_frames[c].frames.rows() != K || est_frames[c].frames.cols() != L)
            throw ParamError("best_frame_perms_time: frame shape mismatch");
    std::vector<int> labels(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        double id = 0.0, sw = 0.0;
        for (int c = 0; c < 2; ++c)
            for (Eigen::Index i = 0; i < L; ++i) {
                id += std::abs(static_cast<double>(est_frames[c].frames(k, i)) -
                               ref_frames[c].frames(k, i));
                sw += std::abs(static_cast<double>(est_frames[c].frames(k, i)) -
                               ref_frames[1 - c].frames(k, i));
            }
        labels[k] = sw < id ? 1 : 0;
    }
    return labels;
}

// Speaker-consistent frame reordering for C = 2: frames labeled "swap"
// exchange their source rows. Involution.
template <class S>
std::array<FrameMatrix<S>, 2> reorder_frames(const std::array<FrameMatrix<S>, 2>& frames,
                                             const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != frames[0].frames.rows())
        throw ParamError("reorder_frames: label count mismatch");
    std::array<FrameMatrix<S>, 2> out = frames;
    for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k] == 1) {
            out[0].frames.row(k) = frames[1].frames.row(k);
            out[1].frames.row(k) = frames[0].frames.row(k);
        }
    return out;
}

// tPIT in the time domain: reorder decoded frames by the per-frame L1 search,
// overlap-add, negative mean SI-SNR. Returns dŜ gradients via the callback
// path in the trainer; here the report plus the reconstructed estimates.
template <class S>
struct TpitTimeResult {
    LossReport report;
    std::array<std::vector<S>, 2> recon;
    std::array<FrameMatrix<S>, 2> est_frames;  // pre-reordering decoded frames
};

template <class S>
TpitTimeResult<S> tpit_time_loss(const std::array<Mat<S>, 2>& latents,
                                 const std::array<std::vector<S>, 2>& refs,
                                 BasicEncoderDecoder<S>& ed) {
    const Eigen::Index out_len = static_cast<Eigen::Index>(refs[0].size());
    TpitTimeResult<S> res;
    std::array<FrameMatrix<S>, 2> ref_frames;
    for (int c = 0; c < 2; ++c) {
        res.est_frames[c].frames = ed.decode_frames(latents[c]);
        res.est_frames[c].frame_length = ed.frame_length;
        res.est_frames[c].stride = ed.stride;
        ref_frames[c] = frame_signal(refs[c], ed.frame_length, ed.stride);
    }
    if (ref_frames[0].frames.rows() != res.est_frames[0].frames.rows())
        throw ParamError("tpit_time_loss: frame count mismatch between estimates and references");
    res.report.frame_perms = best_frame_perms_time(res.est_frames, ref_frames);
    auto reordered = reorder_frames(res.est_frames, res.report.frame_perms);
    double acc = 0.0;
    for (int c = 0; c < 2; ++c) {
        res.recon[c] = overlap_add(reordered[c], out_len);
        acc += si_snr(refs[c], res.recon[c]);
    }
    res.report.loss = -acc / 2.0;
    res.report.terms["neg_mean_si_snr"] = res.report.loss;
    return res;
}

// Backward: gradients w.r.t. the latent separator outputs (accumulates ed.dV).
template <class S>
std::array<Mat<S>, 2> tpit_time_loss_backward(const TpitTimeResult<S>& res,
                                              const std::array<std::vector<S>, 2>& refs,
                                              BasicEncoderDecoder<S>& ed,
                                              const std::array<Mat<S>, 2>& latents,
                                              double upstream = 1.0) {
    std::array<FrameMatrix<S>, 2> drecon_frames;
    for (int c = 0; c < 2; ++c) {
        std::vector<S> dwave = si_snr_backward(refs[c], res.recon[c], -0.5 * upstream);
        drecon_frames[c].frames = overlap_add_adjoint(dwave, res.est_frames[c].frames.rows(),
                                                      ed.frame_length, ed.stride);
        drecon_frames[c].frame_length = ed.frame_length;
        drecon_frames[c].stride = ed.stride;
    }
    // Reordering is an involution: route gradients back through the same swap.
    auto dest_frames = reorder_frames(drecon_frames, res.report.frame_perms);
    std::array<Mat<S>, 2> dlatents;
    for (int c = 0; c < 2; ++c)
        dlatents[c] = ed.decode_backward_frames(dest_frames[c].frames, latents[c]);
    return dlatents;
}

// ---------------------------------------------------------------------------
// tPIT in the latent space

template <class S>
LossReport tpit_latent_loss(const std::array<Mat<S>, 2>& est, const std::array<Mat<S>, 2>& tgt) {
    const Eigen::Index N = est[0].rows(), K = est[0].cols();
    for (int c = 0; c < 2; ++c)
        if (est[c].rows() != N || est[c].cols() != K || tgt[c].rows() != N || tgt[c].cols() != K)
            throw ParamError("tpit_latent_loss: shape mismatch");
    LossReport r;
    r.frame_perms.resize(K);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
        double id = 0.0, sw = 0.0;
        for (Eigen::Index n = 0; n < N; ++n) {
            id += std::abs(static_cast<double>(est[0](n, k)) - tgt[0](n, k)) +
                  std::abs(static_cast<double>(est[1](n, k)) - tgt[1](n, k));
            sw += std::abs(static_cast<double>(est[0](n, k)) - tgt[1](n, k)) +
                  std::abs(static_cast<double>(est[1](n, k)) - tgt[0](n, k));
        }
        r.frame_perms[k] = sw < id ? 1 : 0;
        acc += std::min(id, sw);
    }
    r.loss = acc / (static_cast<double>(K) * N * 2.0);
    return r;
}

template <class S>
std::array<Mat<S>, 2> tpit_latent_loss_backward(const std::array<Mat<S>, 2>& est,
                                                const std::array<Mat<S>, 2>& tgt,
                                                const LossReport& report, double upstream = 1.0) {
    const Eigen::Index N = est[0].rows(), K = est[0].cols();
    const double scale = upstream / (static_cast<double>(K) * N * 2.0);
    std::array<Mat<S>, 2> g;
    for (int c = 0; c < 2; ++c) g[c].setZero(N, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const int p = report.frame_perms[k];
        for (int c = 0; c < 2; ++c) {
            const int rc = p == 0 ? c : 1 - c;
            for (Eigen::Index n = 0; n < N; ++n) {
                const double d = static_cast<double>(est[c](n, k)) - tgt[rc](n, k);
                g[c](n, k) = static_cast<S>(scale * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)));
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Spectral L1 permutation search (per STFT frame, real+imaginary parts)

template <class S>
std::vector<int> tpit_stft_match(const std::array<BasicSpectrogram<S>, 2>& est,
                                 const std::array<BasicSpectrogram<S>, 2>& ref) {
    const Eigen::Index K = est[0].bins.rows(), F = est[0].bins.cols();
    for (int c = 0; c < 2; ++c)
        if (est[c].bins.rows() != K || est[c].bins.cols() != F || ref[c].bins.rows() != K ||
            ref[c].bins.cols() != F)
            throw ParamError("tpit_stft_match: spectrogram shape mismatch");
    std::vector<int> labels(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        double id = 0.0, sw = 0.0;
        for (int c = 0; c < 2; ++c)
            for (Eigen::Index f = 0; f < F; ++f) {
                const auto e = est[c].bins(k, f);
                const auto r0 = ref[c].bins(k, f);
                const auto r1 = ref[1 - c].bins(k, f);
                id += std::abs(static_cast<double>(e.real()) - r0.real()) +
                      std::abs(static_cast<double>(e.imag()) - r0.imag());
                sw += std::abs(static_cast<double>(e.real()) - r1.real()) +
                      std::abs(static_cast<double>(e.imag()) - r1.imag());
            }
        labels[k] = sw < id ? 1 : 0;
    }
    return labels;
}

// ---------------------------------------------------------------------------
// GE2E permutation-softmax loss

struct Ge2eParams {
    double w = 10.0;
    double b = -5.0;
    static constexpr double kMinW = 1e-6;
    void clamp() { w = std::max(w, kMinW); }
};

// Embeddings are D x K (one column per frame). Loss is the mean over frames;
// the raw sum is reported under "ge2e_sum".
template <class S>
LossReport ge2e_loss(const Mat<S>& emb, const std::vector<int>& labels, const Ge2eParams& p) {
    const Eigen::Index K = emb.cols();
    if (static_cast<Eigen::Index>(labels.size()) != K)
        throw ParamError("ge2e_loss: label count mismatch");
    if (K < 2) throw ParamError("ge2e_loss: need at least C! frames");
    constexpr int kClusters = 2;
    std::array<Vec<S>, kClusters> means;
    std::array<Eigen::Index, kClusters> counts = {0, 0};
    for (int i = 0; i < kClusters; ++i) means[i] = Vec<S>::Zero(emb.rows());
    for (Eigen::Index k = 0; k < K; ++k) {
        if (labels[k] < 0 || labels[k] >= kClusters) throw ParamError("ge2e_loss: label out of range");
        means[labels[k]] += emb.col(k);
        counts[labels[k]] += 1;
    }
    for (int i = 0; i < kClusters; ++i) {
        if (counts[i] == 0)
            throw TrainingError("ge2e_loss: cluster " + std::to_string(i) +
                                " is empty; rebalance the permutation labels");
        means[i] /= static_cast<S>(counts[i]);
    }
    double sum = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
        double d[kClusters];
        for (int i = 0; i < kClusters; ++i)
            d[i] = p.w * static_cast<double>((emb.col(k) - means[i]).squaredNorm()) + p.b;
        const double mx = -std::min(d[0], d[1]);
        double z = 0.0;
        for (int i = 0; i < kClusters; ++i) z += std::exp(-d[i] - mx);
        sum += d[labels[k]] + mx + std::log(z);
    }
    LossReport r;
    r.loss = sum / static_cast<double>(K);
    r.terms["ge2e_sum"] = sum;
    return r;
}

struct Ge2eGrads {
    double dw = 0.0;
    double db = 0.0;
};

template <class S>
Mat<S> ge2e_loss_backward(const Mat<S>& emb, const std::vector<int>& labels, const Ge2eParams& p,
                          Ge2eGrads& pg, double upstream = 1.0) {
    const Eigen::Index K = emb.cols();
    constexpr int kClusters = 2;
    std::array<Vec<S>, kClusters> means;
    std::array<Eigen::Index, kClusters> counts = {0, 0};
    for (int i = 0; i < kClusters; ++i) means[i] = Vec<S>::Zero(emb.rows());
    for (Eigen::Index k = 0; k < K; ++k) {
        means[labels[k]] += emb.col(k);
        counts[labels[k]] += 1;
    }
    for (int i = 0; i < kClusters; ++i) means[i] /= static_cast<S>(counts[i]);

    Mat<S> g = Mat<S>::Zero(emb.rows(), K);
    std::array<Vec<S>, kClusters> dmeans;
    for (int i = 0; i < kClusters; ++i) dmeans[i] = Vec<S>::Zero(emb.rows());
    const double inv_k = upstream / static_cast<double>(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        double d[kClusters];
        for (int i = 0; i < kClusters; ++i)
            d[i] = p.w * static_cast<double>((emb.col(k) - means[i]).squaredNorm()) + p.b;
        const double mx = -std::min(d[0], d[1]);
        double q[kClusters], z = 0.0;
        for (int i = 0; i < kClusters; ++i) z += std::exp(-d[i] - mx);
        for (int i = 0; i < kClusters; ++i) q[i] = std::exp(-d[i] - mx) / z;
        for (int i = 0; i < kClusters; ++i) {
            const double gd = inv_k * ((i == labels[k] ? 1.0 : 0.0) - q[i]);
            const Vec<S> diff = emb.col(k) - means[i];
            g.col(k) += static_cast<S>(gd * 2.0 * p.w) * diff;
            dmeans[i] -= static_cast<S>(gd * 2.0 * p.w) * diff;
            pg.dw += gd * static_cast<double>(diff.squaredNorm());
            pg.db += gd;
        }
    }
    for (Eigen::Index k = 0; k < K; ++k)
        g.col(k) += dmeans[labels[k]] / static_cast<S>(counts[labels[k]]);
    return g;
}

// ---------------------------------------------------------------------------
// Pairwise similarity baseline, O(K^2)

template <class S>
LossReport pairwise_similarity_loss(const Mat<S>& emb, const std::vector<int>& labels) {
    const Eigen::Index K = emb.cols();
    if (static_cast<Eigen::Index>(labels.size()) != K)
        throw ParamError("pairwise_similarity_loss: label count mismatch");
    if (K < 2) throw ParamError("pairwise_similarity_loss: need at least 2 frames");
    Vec<S> norms = emb.colwise().norm();
    for (Eigen::Index k = 0; k < K; ++k)
        if (!(norms(k) > S(0)))
            throw DegenerateInputError("pairwise_similarity_loss: zero-norm embedding at frame " +
                                       std::to_string(k));
    double sum = 0.0;
    for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = 0; j < K; ++j) {
            const double s =
                static_cast<double>(emb.col(i).dot(emb.col(j))) / (norms(i) * norms(j));
            const double t = labels[i] == labels[j] ? 1.0 : 0.0;
            sum += (s - t) * (s - t);
        }
    LossReport r;
    r.loss = sum / (static_cast<double>(K) * K);
    return r;
}

template <class S>
Mat<S> pairwise_similarity_loss_backward(const Mat<S>& emb, const std::vector<int>& labels,
                                         double upstream = 1.0) {
    const Eigen::Index K = emb.cols();
    Vec<S> norms = emb.colwise().norm();
    Mat<S> u = emb.array().rowwise() / norms.transpose().array();
    Mat<S> du = Mat<S>::Zero(emb.rows(), K);
    const double scale = upstream / (static_cast<double>(K) * K);
    for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = 0; j < K; ++j) {
            const double s = static_cast<double>(u.col(i).dot(u.col(j)));
            const double t = labels[i] == labels[j] ? 1.0 : 0.0;
            const double c = scale * 2.0 * (s - t);
            // Ordered pairs (i,j) and (j,i) both appear in the loop, so each
            // contributes only its own half here.
            du.col(i) += static_cast<S>(c) * u.col(j);
            du.col(j) += static_cast<S>(c) * u.col(i);
        }
    Mat<S> g(emb.rows(), K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const S dot = u.col(k).dot(du.col(k));
        g.col(k) = (du.col(k) - u.col(k) * dot) / norms(k);
    }
    return g;
}

// ---------------------------------------------------------------------------
// uPIT + deep-feature composite

template <class S>
LossReport upit_pase_loss(const std::array<std::vector<S>, 2>& ests,
                          const std::array<std::vector<S>, 2>& refs,
                          BasicFeatureEncoder<S>& featnet, double lambda, int sample_rate) {
    LossReport r = upit_loss(ests, refs);
    const double upit_value = r.loss;
    double feat = 0.0;
    if (lambda != 0.0) {
        const int p = r.utterance_perm;
        double sum = 0.0;
        long count = 0;
        for (int c = 0; c < 2; ++c) {
            BasicWaveform<S> e{ests[c], sample_rate};
            BasicWaveform<S> x{refs[p == 0 ? c : 1 - c], sample_rate};
            Mat<S> d = featnet.embed(e) - featnet.embed(x);
            sum += static_cast<double>(d.array().square().sum());
            count += d.size();
        }
        feat = sum / static_cast<double>(count);
    }
    r.loss = upit_value + lambda * feat;
    r.terms["upit"] = upit_value;
    r.terms["feature"] = feat;
    return r;
}

// Gradients w.r.t. both estimates; `finetune` also leaves parameter gradients
// in the feature encoder.
template <class S>
std::array<std::vector<S>, 2> upit_pase_loss_backward(const std::array<std::vector<S>, 2>& ests,
                                                      const std::array<std::vector<S>, 2>& refs,
                                                      BasicFeatureEncoder<S>& featnet,
                                                      double lambda, int sample_rate,
                                                      const LossReport& report,
                                                      double upstream = 1.0) {
    auto g = upit_loss_backward(ests, refs, report, upstream);
    if (lambda == 0.0) return g;
    const int p = report.utterance_perm;
    for (int c = 0; c < 2; ++c) {
        BasicWaveform<S> e{ests[c], sample_rate};
        BasicWaveform<S> x{refs[p == 0 ? c : 1 - c], sample_rate};
        Mat<S> emb_e = featnet.embed(e, true);
        Mat<S> d = emb_e - featnet.embed(x);
        const double scale = upstream * lambda / (2.0 * static_cast<double>(d.size()));
        // Re-run the estimate pass so the cached activations match it.
        featnet.embed(e, true);
        std::vector<S> dw = featnet.backward((S(2.0 * scale) * d.array()).matrix());
        for (std::size_t t = 0; t < dw.size(); ++t) g[c][t] += dw[t];
    }
    return g;
}

}  // namespace pitsep
