// End-to-end acceptance checks for the separation toolkit. Each numbered
// criterion prints one [PASS]/[FAIL] line; the binary exits non-zero if any
// criterion fails. The toy training runs use small synthetic catalogs and
// fixed seeds so every number below is reproducible bit-for-bit.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pitsep/checkpoint.hpp"
#include "pitsep/layers.hpp"
#include "pitsep/losses.hpp"
#include "pitsep/metrics.hpp"
#include "pitsep/models.hpp"
#include "pitsep/network.hpp"
#include "pitsep/signal.hpp"
#include "pitsep/synth.hpp"
#include "pitsep/train.hpp"
#include "pitsep/wav_io.hpp"

namespace fs = std::filesystem;
using namespace pitsep;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] C%02d %s: %s\n", ok ? "PASS" : "FAIL", idx, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Mat<double> random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> nd(0.0, sd);
    Mat<double> m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(rng);
    return m;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> nd(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

constexpr double kFdStep = 1e-5;

Mat<double> fd_mat(Mat<double>& m, const std::function<double()>& loss) {
    Mat<double> g(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double save = m(i, j);
            m(i, j) = save + kFdStep;
            const double up = loss();
            m(i, j) = save - kFdStep;
            const double dn = loss();
            m(i, j) = save;
            g(i, j) = (up - dn) / (2 * kFdStep);
        }
    return g;
}

std::vector<double> fd_vec(std::vector<double>& v, const std::function<double()>& loss) {
    std::vector<double> g(v.size());
    for (std::size_t t = 0; t < v.size(); ++t) {
        const double save = v[t];
        v[t] = save + kFdStep;
        const double up = loss();
        v[t] = save - kFdStep;
        const double dn = loss();
        v[t] = save;
        g[t] = (up - dn) / (2 * kFdStep);
    }
    return g;
}

double rel_err(const Mat<double>& a, const Mat<double>& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 && nb == 0.0) return 0.0;
    return (a - b).norm() / std::max(na, nb);
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 && nb == 0.0) return 0.0;
    return std::sqrt(num) / std::sqrt(std::max(na, nb));
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// C1: permutation-search exactness against exhaustive enumeration.

void criterion_permutation_search() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> usz(1, 8);
    long mismatches = 0;

    for (int it = 0; it < 1000; ++it) {
        const Eigen::Index K = usz(rng), L = usz(rng) + 1;
        std::array<FrameMatrix<double>, 2> est, ref;
        for (int c = 0; c < 2; ++c) {
            est[c].frames = random_mat(K, L, rng);
            ref[c].frames = random_mat(K, L, rng);
        }
        auto labels = best_frame_perms_time(est, ref);
        for (Eigen::Index k = 0; k < K; ++k) {
            // Exact L1 ties between the two pairings occur with positive
            // probability; accumulate element-by-element so tied costs round
            // the same way on both sides of the comparison.
            double cost[2] = {0.0, 0.0};
            for (int c = 0; c < 2; ++c)
                for (Eigen::Index i = 0; i < L; ++i) {
                    cost[0] += std::abs(est[c].frames(k, i) - ref[c].frames(k, i));
                    cost[1] += std::abs(est[c].frames(k, i) - ref[1 - c].frames(k, i));
                }
            const int want = cost[1] < cost[0] ? 1 : 0;
            if (labels[k] != want) ++mismatches;
        }
    }

    for (int it = 0; it < 1000; ++it) {
        const Eigen::Index K = usz(rng), F = usz(rng) + 1;
        std::array<BasicSpectrogram<double>, 2> est, ref;
        for (int c = 0; c < 2; ++c) {
            est[c].bins.resize(K, F);
            ref[c].bins.resize(K, F);
            for (Eigen::Index k = 0; k < K; ++k)
                for (Eigen::Index f = 0; f < F; ++f) {
                    std::normal_distribution<double> nd;
                    est[c].bins(k, f) = {nd(rng), nd(rng)};
                    ref[c].bins(k, f) = {nd(rng), nd(rng)};
                }
        }
        auto labels = tpit_stft_match(est, ref);
        for (Eigen::Index k = 0; k < K; ++k) {
            double cost[2] = {0.0, 0.0};
            for (int c = 0; c < 2; ++c)
                for (Eigen::Index f = 0; f < F; ++f)
                    for (int p = 0; p < 2; ++p) {
                        const auto d = est[c].bins(k, f) - ref[p == 0 ? c : 1 - c].bins(k, f);
                        cost[p] += std::abs(d.real()) + std::abs(d.imag());
                    }
            const int want = cost[1] < cost[0] ? 1 : 0;
            if (labels[k] != want) ++mismatches;
        }
    }

    for (int it = 0; it < 1000; ++it) {
        const std::size_t T = 16 + (it % 17);
        std::array<std::vector<double>, 2> ests = {random_vec(T, rng), random_vec(T, rng)};
        std::array<std::vector<double>, 2> refs = {random_vec(T, rng), random_vec(T, rng)};
        LossReport r = upit_loss(ests, refs);
        const double id = -0.5 * (si_snr(refs[0], ests[0]) + si_snr(refs[1], ests[1]));
        const double sw = -0.5 * (si_snr(refs[1], ests[0]) + si_snr(refs[0], ests[1]));
        const int want = sw < id ? 1 : 0;
        if (r.utterance_perm != want || std::abs(r.loss - std::min(id, sw)) > 1e-12) ++mismatches;
    }

    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%ld mismatches over 3x1000 instances, %.1f s (budget 10 s)",
                  mismatches, secs);
    report(1, "permutation-search exactness", mismatches == 0 && secs < 10.0, buf);
}

// ---------------------------------------------------------------------------
// C2: loss values against naive transcriptions of the formulas.

void criterion_loss_oracles() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> usz(2, 6);
    double worst = 0.0;

    for (int it = 0; it < 100; ++it) {
        const Eigen::Index N = usz(rng), K = usz(rng);
        std::array<Mat<double>, 2> est = {random_mat(N, K, rng), random_mat(N, K, rng)};
        std::array<Mat<double>, 2> tgt = {random_mat(N, K, rng), random_mat(N, K, rng)};
        double naive = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) {
            double id = 0.0, sw = 0.0;
            for (Eigen::Index n = 0; n < N; ++n) {
                id += std::abs(est[0](n, k) - tgt[0](n, k)) + std::abs(est[1](n, k) - tgt[1](n, k));
                sw += std::abs(est[0](n, k) - tgt[1](n, k)) + std::abs(est[1](n, k) - tgt[0](n, k));
            }
            naive += std::min(id, sw);
        }
        naive /= 2.0 * static_cast<double>(N) * static_cast<double>(K);
        worst = std::max(worst, std::abs(tpit_latent_loss(est, tgt).loss - naive));
    }

    for (int it = 0; it < 100; ++it) {
        const Eigen::Index D = usz(rng), K = usz(rng) + 2;
        Mat<double> emb = random_mat(D, K, rng);
        std::vector<int> labels(K);
        for (Eigen::Index k = 0; k < K; ++k) labels[k] = (k + it) % 2;
        Ge2eParams p;
        // Self-inclusive cluster means, softmax over d(x, mu_i) = w||x-mu_i||^2 + b.
        Vec<double> mu[2] = {Vec<double>::Zero(D), Vec<double>::Zero(D)};
        int cnt[2] = {0, 0};
        for (Eigen::Index k = 0; k < K; ++k) {
            mu[labels[k]] += emb.col(k);
            cnt[labels[k]] += 1;
        }
        for (int i = 0; i < 2; ++i) mu[i] /= cnt[i];
        double naive = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) {
            double d[2];
            for (int i = 0; i < 2; ++i) d[i] = p.w * (emb.col(k) - mu[i]).squaredNorm() + p.b;
            naive += -std::log(std::exp(-d[labels[k]]) / (std::exp(-d[0]) + std::exp(-d[1])));
        }
        naive /= static_cast<double>(K);
        worst = std::max(worst, std::abs(ge2e_loss(emb, labels, p).loss - naive));
    }

    for (int it = 0; it < 100; ++it) {
        const Eigen::Index D = usz(rng), K = usz(rng) + 1;
        Mat<double> emb = random_mat(D, K, rng);
        for (Eigen::Index k = 0; k < K; ++k) emb.col(k) += Vec<double>::Constant(D, 0.1);
        std::vector<int> labels(K);
        for (Eigen::Index k = 0; k < K; ++k) labels[k] = k % 2;
        double naive = 0.0;
        for (Eigen::Index i = 0; i < K; ++i)
            for (Eigen::Index j = 0; j < K; ++j) {
                const double cs =
                    emb.col(i).dot(emb.col(j)) / (emb.col(i).norm() * emb.col(j).norm());
                const double t = labels[i] == labels[j] ? 1.0 : 0.0;
                naive += (cs - t) * (cs - t);
            }
        naive /= static_cast<double>(K) * static_cast<double>(K);
        worst = std::max(worst, std::abs(pairwise_similarity_loss(emb, labels).loss - naive));
    }

    {
        FeatureEncoderConfig fc;
        fc.embed_dim = 6;
        fc.width = 8;
        BasicFeatureEncoder<double> feat(fc);
        const double lambda = 0.5;
        for (int it = 0; it < 100; ++it) {
            const std::size_t T = 320 + 160 * (it % 3);
            std::array<std::vector<double>, 2> ests = {random_vec(T, rng), random_vec(T, rng)};
            std::array<std::vector<double>, 2> refs = {random_vec(T, rng), random_vec(T, rng)};
            LossReport r = upit_pase_loss(ests, refs, feat, lambda, 16000);
            const double id = -0.5 * (si_snr(refs[0], ests[0]) + si_snr(refs[1], ests[1]));
            const double sw = -0.5 * (si_snr(refs[1], ests[0]) + si_snr(refs[0], ests[1]));
            const int p = sw < id ? 1 : 0;
            double sum = 0.0;
            long count = 0;
            for (int c = 0; c < 2; ++c) {
                Mat<double> de = feat.embed({ests[c], 16000}) -
                                 feat.embed({refs[p == 0 ? c : 1 - c], 16000});
                sum += de.array().square().sum();
                count += de.size();
            }
            const double naive_feat = sum / static_cast<double>(count);
            worst = std::max(worst, std::abs(r.terms.at("feature") - naive_feat));
            worst = std::max(worst,
                             std::abs(r.loss - (std::min(id, sw) + lambda * naive_feat)));
        }
    }

    char buf[120];
    std::snprintf(buf, sizeof(buf), "max |impl - naive| = %.3g (tolerance 1e-7)", worst);
    report(2, "loss-formula oracles", worst < 1e-7, buf);
}

// ---------------------------------------------------------------------------
// C3: finite-difference gradient checks for every layer and loss.

double check_layer(Layer<double>& layer, Mat<double> x, std::mt19937_64& rng,
                   bool training = true) {
    Mat<double> W;
    {
        Mat<double> probe = layer.forward(x, training);
        W = random_mat(probe.rows(), probe.cols(), rng);
    }
    auto loss = [&] { return (layer.forward(x, training).array() * W.array()).sum(); };
    std::vector<ParamRef<double>> params;
    layer.collect_params("p", params);
    zero_grads(params);
    layer.forward(x, training);
    Mat<double> dx = layer.backward(W);
    double worst = 0.0;
    for (auto& p : params) worst = std::max(worst, rel_err(*p.grad, fd_mat(*p.value, loss)));
    worst = std::max(worst, rel_err(dx, fd_mat(x, loss)));
    return worst;
}

void criterion_gradient_checks() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(303);
    double worst = 0.0;
    auto track = [&](double e) { worst = std::max(worst, e); };

    {
        Linear<double> l(5, 4, rng);
        track(check_layer(l, random_mat(5, 7, rng), rng));
    }
    for (long dil : {1L, 2L}) {
        Conv1d<double> l(3, 4, 3, dil, 1, rng);
        track(check_layer(l, random_mat(3, 12, rng), rng));
    }
    {
        Conv1d<double> l(2, 3, 4, 1, 2, rng);
        track(check_layer(l, random_mat(2, 20, rng), rng));
    }
    {
        DepthwiseConv1d<double> l(6, 3, 2, rng);
        track(check_layer(l, random_mat(6, 10, rng), rng));
    }
    {
        ReLU<double> l;
        track(check_layer(l, random_mat(4, 9, rng), rng));
    }
    {
        Sigmoid<double> l;
        track(check_layer(l, random_mat(4, 9, rng), rng));
    }
    {
        PReLU<double> l;
        track(check_layer(l, random_mat(4, 9, rng), rng));
    }
    {
        SoftmaxOverSources<double> l(2);
        track(check_layer(l, random_mat(6, 8, rng), rng));
    }
    {
        BatchNorm1d<double> l(3);
        track(check_layer(l, random_mat(3, 11, rng, 1.4), rng, true));
        track(check_layer(l, random_mat(3, 11, rng, 1.4), rng, false));
    }
    {
        GlobalLayerNorm<double> l(4);
        track(check_layer(l, random_mat(4, 9, rng, 1.3), rng));
    }
    {
        auto fp = std::make_shared<FilmParams<double>>(3, 5);
        fp->w_scale = random_mat(5, 3, rng, 0.3);
        fp->w_shift = random_mat(5, 3, rng, 0.3);
        Film<double> l(fp);
        Mat<double> cond = random_mat(3, 7, rng);
        l.set_condition(&cond);
        track(check_layer(l, random_mat(5, 7, rng), rng));
    }
    {
        ResidualTcnBlock<double> l(4, 6, 3, 2, rng);
        track(check_layer(l, random_mat(4, 9, rng), rng));
    }

    // Losses. Scalar objectives differentiated w.r.t. every input entry.
    {
        std::vector<double> ref = random_vec(24, rng), est = random_vec(24, rng);
        track(rel_err(si_snr_backward(ref, est, 1.0),
                      fd_vec(est, [&] { return si_snr(ref, est); })));
        track(rel_err(snr_backward(ref, est, 1.0), fd_vec(est, [&] { return snr(ref, est); })));
    }
    {
        std::array<std::vector<double>, 2> ests = {random_vec(24, rng), random_vec(24, rng)};
        std::array<std::vector<double>, 2> refs = {random_vec(24, rng), random_vec(24, rng)};
        LossReport r = upit_loss(ests, refs);
        auto g = upit_loss_backward(ests, refs, r);
        for (int c = 0; c < 2; ++c)
            track(rel_err(g[c], fd_vec(ests[c], [&] { return upit_loss(ests, refs).loss; })));
    }
    {
        std::array<Mat<double>, 2> est = {random_mat(4, 6, rng), random_mat(4, 6, rng)};
        std::array<Mat<double>, 2> tgt = {random_mat(4, 6, rng), random_mat(4, 6, rng)};
        LossReport r = tpit_latent_loss(est, tgt);
        auto g = tpit_latent_loss_backward(est, tgt, r);
        for (int c = 0; c < 2; ++c)
            track(rel_err(g[c], fd_mat(est[c], [&] { return tpit_latent_loss(est, tgt).loss; })));
    }
    {
        std::mt19937_64 mrng(7);
        BasicEncoderDecoder<double> ed(8, 4, 6, mrng);
        const Eigen::Index K = 9, T = 4 * (K - 1) + 8;
        std::array<Mat<double>, 2> latents = {random_mat(6, K, rng), random_mat(6, K, rng)};
        std::array<std::vector<double>, 2> refs = {random_vec(T, rng), random_vec(T, rng)};
        auto res = tpit_time_loss(latents, refs, ed);
        auto g = tpit_time_loss_backward(res, refs, ed, latents);
        for (int c = 0; c < 2; ++c)
            track(rel_err(g[c], fd_mat(latents[c], [&] {
                              return tpit_time_loss(latents, refs, ed).report.loss;
                          })));
    }
    {
        Mat<double> emb = random_mat(4, 8, rng);
        std::vector<int> labels = {0, 1, 0, 1, 1, 0, 0, 1};
        Ge2eParams p;
        Ge2eGrads pg;
        Mat<double> g = ge2e_loss_backward(emb, labels, p, pg);
        track(rel_err(g, fd_mat(emb, [&] { return ge2e_loss(emb, labels, p).loss; })));
        const double save = p.w;
        p.w = save + kFdStep;
        const double up = ge2e_loss(emb, labels, p).loss;
        p.w = save - kFdStep;
        const double dn = ge2e_loss(emb, labels, p).loss;
        p.w = save;
        track(std::abs(pg.dw - (up - dn) / (2 * kFdStep)) /
              std::max(1e-12, std::abs(pg.dw)));
        // The bias cancels in the softmax; its analytic gradient is zero.
        track(std::abs(pg.db));
    }
    {
        Mat<double> emb = random_mat(4, 7, rng);
        for (Eigen::Index k = 0; k < 7; ++k) emb.col(k) += Vec<double>::Constant(4, 0.2);
        std::vector<int> labels = {0, 1, 1, 0, 1, 0, 0};
        Mat<double> g = pairwise_similarity_loss_backward(emb, labels);
        track(rel_err(g, fd_mat(emb, [&] {
                          return pairwise_similarity_loss(emb, labels).loss;
                      })));
    }
    {
        FeatureEncoderConfig fc;
        fc.embed_dim = 4;
        fc.width = 8;
        BasicFeatureEncoder<double> feat(fc);
        std::array<std::vector<double>, 2> ests = {random_vec(480, rng), random_vec(480, rng)};
        std::array<std::vector<double>, 2> refs = {random_vec(480, rng), random_vec(480, rng)};
        LossReport r = upit_pase_loss(ests, refs, feat, 0.5, 16000);
        auto g = upit_pase_loss_backward(ests, refs, feat, 0.5, 16000, r);
        for (int c = 0; c < 2; ++c)
            track(rel_err(g[c], fd_vec(ests[c], [&] {
                              return upit_pase_loss(ests, refs, feat, 0.5, 16000).loss;
                          })));
    }

    const double secs = seconds_since(t0);
    char buf[120];
    std::snprintf(buf, sizeof(buf), "max relative error %.3g (tolerance 1e-4), %.1f s (budget 120 s)",
                  worst, secs);
    report(3, "gradient checks", worst < 1e-4 && secs < 120.0, buf);
}

// ---------------------------------------------------------------------------
// C4: signal round trips.

void criterion_signal_round_trips(const fs::path& dir) {
    std::mt19937_64 rng(404);
    std::normal_distribution<float> nd(0.0f, 0.3f);

    double ola_err = 0.0;
    {
        std::vector<float> x(1000);
        for (auto& v : x) v = nd(rng);
        auto fm = frame_signal(x, Eigen::Index(32), Eigen::Index(16));
        auto back = overlap_add(fm, Eigen::Index(x.size()));
        for (std::size_t t = 0; t < x.size(); ++t)
            ola_err = std::max(ola_err, std::abs(double(back[t]) - x[t]));
    }

    double stft_err = 0.0;
    {
        BasicWaveform<float> w;
        w.sample_rate = 8000;
        w.samples.resize(2048);
        for (auto& v : w.samples) v = nd(rng);
        auto spec = stft(w, 256, 64);
        auto back = istft(spec, w.sample_rate);
        for (std::size_t t = 0; t < w.samples.size(); ++t)
            stft_err = std::max(stft_err, std::abs(double(back.samples[t]) - w.samples[t]));
    }

    bool wav_ok = false;
    {
        Waveform w;
        w.sample_rate = 8000;
        w.samples.resize(777);
        for (auto& v : w.samples) v = nd(rng);
        const fs::path p = dir / "roundtrip.wav";
        save_wav(p.string(), w);
        Waveform r = load_wav(p.string());
        wav_ok = r.sample_rate == w.sample_rate && r.samples.size() == w.samples.size();
        if (wav_ok)
            for (std::size_t t = 0; t < w.samples.size(); ++t)
                if (std::memcmp(&r.samples[t], &w.samples[t], sizeof(float)) != 0) wav_ok = false;
    }

    char buf[140];
    std::snprintf(buf, sizeof(buf),
                  "OLA err %.2g (<=1e-6), iSTFT err %.2g (<=1e-5), wav float32 %s", ola_err,
                  stft_err, wav_ok ? "bit-exact" : "MISMATCH");
    report(4, "signal round trips", ola_err <= 1e-6 && stft_err <= 1e-5 && wav_ok, buf);
}

// ---------------------------------------------------------------------------
// C5: SI-SNR scale invariance.

void criterion_scale_invariance() {
    std::mt19937_64 rng(505);
    double worst = 0.0;
    for (int it = 0; it < 20; ++it) {
        std::vector<double> ref = random_vec(400, rng), est = random_vec(400, rng);
        const double base = si_snr(ref, est);
        for (double alpha : {0.1, 1.0, 7.3}) {
            std::vector<double> scaled(est.size());
            for (std::size_t t = 0; t < est.size(); ++t) scaled[t] = alpha * est[t];
            worst = std::max(worst, std::abs(si_snr(ref, scaled) - base));
        }
    }
    char buf[100];
    std::snprintf(buf, sizeof(buf), "max |delta| = %.3g dB (tolerance 1e-6)", worst);
    report(5, "SI-SNR scale invariance", worst <= 1e-6, buf);
}

// ---------------------------------------------------------------------------
// C6: metric oracles (FER on constructed outputs, HSR).

void criterion_metric_oracles() {
    std::mt19937_64 rng(606);
    const int sr = 8000;
    const std::size_t T = 32000;
    const FerStftConfig cfg = fer_stft_for_rate(sr);

    // Two spectrally distinct references.
    std::array<Waveform, 2> refs;
    for (int c = 0; c < 2; ++c) {
        refs[c].sample_rate = sr;
        refs[c].samples.resize(T);
        const double f = c == 0 ? 150.0 : 420.0;
        std::normal_distribution<float> nd(0.0f, 0.05f);
        for (std::size_t t = 0; t < T; ++t)
            refs[c].samples[t] =
                static_cast<float>(0.5 * std::sin(2.0 * M_PI * f * t / sr)) + nd(rng);
    }

    const double fer_perfect = fer({refs[0], refs[1]}, refs, cfg);
    const double fer_swapped = fer({refs[1], refs[0]}, refs, cfg);

    std::array<Waveform, 2> half;
    for (int c = 0; c < 2; ++c) {
        half[c].sample_rate = sr;
        half[c].samples.resize(T);
    }
    for (std::size_t t = 0; t < T; ++t) {
        const bool second = t >= T / 2;
        half[0].samples[t] = second ? refs[1].samples[t] : refs[0].samples[t];
        half[1].samples[t] = second ? refs[0].samples[t] : refs[1].samples[t];
    }
    const double fer_half = fer(half, refs, cfg);
    // STFT frames straddling the splice see both halves; allow that many
    // frames' worth of slack around the ideal 50%.
    const double frames = std::floor(double(T) / cfg.hop) + 1.0;
    const double slack = 100.0 * double(cfg.window_length / cfg.hop + 1) / frames;

    const double hsr_val = hsr({4.0, 6.0}, 5.0);

    char buf[180];
    std::snprintf(buf, sizeof(buf),
                  "FER perfect %.3g, swapped %.3g, half-swap %.2f%% (50 +/- %.2f), HSR %.1f%%",
                  fer_perfect, fer_swapped, fer_half, slack, hsr_val);
    report(6, "metric oracles",
           fer_perfect == 0.0 && fer_swapped == 0.0 && std::abs(fer_half - 50.0) <= slack &&
               hsr_val == 50.0,
           buf);
}

// ---------------------------------------------------------------------------
// C7: GE2E scales linearly, the pairwise baseline quadratically.

void criterion_complexity() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(707);
    const long D = 40;
    auto time_loss = [&](long K, bool pairwise) {
        Mat<double> emb = random_mat(D, K, rng);
        std::vector<int> labels(K);
        for (long k = 0; k < K; ++k) labels[k] = static_cast<int>(k & 1);
        Ge2eParams p;
        volatile double sink = 0.0;
        auto run = [&] {
            sink = pairwise ? pairwise_similarity_loss(emb, labels).loss
                            : ge2e_loss(emb, labels, p).loss;
        };
        run();  // warm-up
        double best = 1e300;
        for (int r = 0; r < 7; ++r) {
            const auto s = Clock::now();
            run();
            best = std::min(best, seconds_since(s));
        }
        (void)sink;
        return best;
    };

    const double g1 = time_loss(1000, false), g2 = time_loss(2000, false),
                 g4 = time_loss(4000, false);
    const double p1 = time_loss(1000, true), p2 = time_loss(2000, true), p4 = time_loss(4000, true);
    const double gr1 = g2 / g1, gr2 = g4 / g2, pr1 = p2 / p1, pr2 = p4 / p2;
    const double secs = seconds_since(t0);

    char buf[180];
    std::snprintf(buf, sizeof(buf),
                  "ge2e ratios %.2f, %.2f (<=2.5); pairwise ratios %.2f, %.2f (>=3.5); %.1f s",
                  gr1, gr2, pr1, pr2, secs);
    report(7, "complexity contract",
           gr1 <= 2.5 && gr2 <= 2.5 && pr1 >= 3.5 && pr2 >= 3.5 && secs < 60.0, buf);
}

// ---------------------------------------------------------------------------
// Toy training pipeline shared by C8-C11.

struct ToyRuns {
    fs::path dir;
    std::vector<ManifestEntry> train200, train50, eval30;
    fs::path upit200_ckpt, upit50_ckpt, encdec_ckpt, tpit_ckpt, cluster_ckpt;
};

StageConfig base_stage(const ToyRuns& toy) {
    StageConfig s;
    s.sample_rate = 8000;
    s.frame_length = 128;
    s.stride = 64;
    s.filters = 128;
    s.separator = {128, 16, 32, 3, 3, 1, 2, 0};
    return s;
}

ToyRuns prepare_toy_runs(const fs::path& dir) {
    ToyRuns toy;
    toy.dir = dir;
    SynthConfig sc;
    sc.catalog_seed = 100;
    sc.sample_rate = 8000;
    sc.duration_s = 4.0;
    sc.snr_lo_db = 0.0;
    sc.snr_hi_db = 5.0;
    sc.count = 200;
    toy.train200 = synth_dataset_to_dir(sc, (dir / "train200").string());
    sc.count = 50;
    toy.train50 = synth_dataset_to_dir(sc, (dir / "train50").string());
    sc.catalog_seed = 555;
    sc.count = 30;
    toy.eval30 = synth_dataset_to_dir(sc, (dir / "eval30").string());

    // Utterance-level PIT baseline at full catalog scale (C8).
    {
        StageConfig s = base_stage(toy);
        s.loss_mode = "upit";
        s.train_manifest = (dir / "train200" / "manifest.jsonl").string();
        s.epochs = 15;
        s.seed = 5;
        s.segment_seconds = 2.0;
        s.ckpt_out = (dir / "upit200.ckpt").string();
        run_stage(s);
        toy.upit200_ckpt = s.ckpt_out;
    }
    // Matched-data baseline for the FER comparison (C11): identical recipe,
    // trained on the same 50-utterance catalog as the clustering pipeline.
    {
        StageConfig s = base_stage(toy);
        s.loss_mode = "upit";
        s.train_manifest = (dir / "train50" / "manifest.jsonl").string();
        s.epochs = 15;
        s.seed = 5;
        s.segment_seconds = 2.0;
        s.ckpt_out = (dir / "upit50.ckpt").string();
        run_stage(s);
        toy.upit50_ckpt = s.ckpt_out;
    }
    // Encoder/decoder pretraining (C9).
    {
        StageConfig s = base_stage(toy);
        s.loss_mode = "encdec";
        s.train_manifest = (dir / "train50" / "manifest.jsonl").string();
        s.epochs = 40;
        s.seed = 4;
        s.lr = 0.01;
        s.segment_seconds = 1.0;
        s.ckpt_out = (dir / "encdec.ckpt").string();
        run_stage(s);
        toy.encdec_ckpt = s.ckpt_out;
    }
    // Frame-level PIT separator in the latent space on the frozen basis.
    {
        StageConfig s = base_stage(toy);
        s.loss_mode = "tpit-latent";
        s.train_manifest = (dir / "train50" / "manifest.jsonl").string();
        s.ckpt_in = toy.encdec_ckpt.string();
        s.epochs = 30;
        s.seed = 6;
        s.segment_seconds = 1.0;
        s.ckpt_out = (dir / "tpit.ckpt").string();
        run_stage(s);
        toy.tpit_ckpt = s.ckpt_out;
    }
    // Embedding network for permutation clustering.
    {
        StageConfig s = base_stage(toy);
        s.loss_mode = "clustering";
        s.train_manifest = (dir / "train50" / "manifest.jsonl").string();
        s.ckpt_in = toy.tpit_ckpt.string();
        s.epochs = 30;
        s.seed = 7;
        s.segment_seconds = 1.0;
        s.cluster = {128, 48, 16, 48, 3, 3, 1, 16};
        s.ckpt_out = (dir / "cluster.ckpt").string();
        run_stage(s);
        toy.cluster_ckpt = s.ckpt_out;
    }
    return toy;
}

struct EvalStats {
    double mean_si_snri = 0.0;
    double mean_fer = 0.0;
};

EvalStats eval_system(SeparationModel& model, const std::vector<ManifestEntry>& entries,
                      const SeparateOptions& opts) {
    EvalStats st;
    const FerStftConfig fcfg = fer_stft_for_rate(8000);
    for (const auto& e : entries) {
        MixtureExample ex = load_manifest_example(e);
        std::vector<Waveform> refs(ex.sources.begin(), ex.sources.end());
        auto est = separate_one(model, ex.mixture, opts, &refs);
        std::array<Waveform, 2> ra = {ex.sources[0], ex.sources[1]};
        st.mean_si_snri += si_snri(ex.mixture, est, ra);
        st.mean_fer += fer(est, ra, fcfg);
    }
    st.mean_si_snri /= static_cast<double>(entries.size());
    st.mean_fer /= static_cast<double>(entries.size());
    return st;
}

void criterion_toy_upit(const ToyRuns& toy, double train_minutes) {
    SeparationModel model = load_separation_model(toy.upit200_ckpt.string());
    EvalStats st = eval_system(model, toy.train200, SeparateOptions{});
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "training-set mean SI-SNRi %.2f dB (>=5), trained in %.1f min (budget 30)",
                  st.mean_si_snri, train_minutes);
    report(8, "toy uPIT end-to-end", st.mean_si_snri >= 5.0 && train_minutes <= 30.0, buf);
}

void criterion_toy_encdec(const ToyRuns& toy) {
    SeparationModel model = load_separation_model(toy.encdec_ckpt.string());
    double mean = 0.0;
    for (const auto& e : toy.train50) {
        MixtureExample ex = load_manifest_example(e);
        auto targets = ideal_latent_targets(*model.encdec, ex.mixture, ex.sources);
        double acc = 0.0;
        for (int c = 0; c < 2; ++c) {
            std::vector<float> recon =
                model.encdec->decode(targets[c], ex.mixture.size());
            acc += si_snr(ex.sources[c].samples, recon);
        }
        mean += acc / 2.0;
    }
    mean /= static_cast<double>(toy.train50.size());
    char buf[120];
    std::snprintf(buf, sizeof(buf), "ideal-latent-target reconstruction SI-SNR %.2f dB (>=10)",
                  mean);
    report(9, "toy encoder/decoder pretraining", mean >= 10.0, buf);
}

void criterion_toy_clustering(const ToyRuns& toy, EvalStats& kmeans_out) {
    SeparationModel model = load_separation_model(toy.cluster_ckpt.string());
    const FerStftConfig fcfg = fer_stft_for_rate(8000);
    SeparateOptions km;
    km.tracking = "kmeans";
    km.kmeans_seed = 3;
    SeparateOptions opt;
    opt.tracking = "optimal";

    double acc_sum = 0.0, si_km = 0.0, si_opt = 0.0, fer_km = 0.0;
    for (const auto& e : toy.eval30) {
        MixtureExample ex = load_manifest_example(e);
        std::vector<Waveform> refs(ex.sources.begin(), ex.sources.end());
        std::vector<int> lk, lo;
        auto est_k = separate_one(model, ex.mixture, km, &refs, &lk);
        auto est_o = separate_one(model, ex.mixture, opt, &refs, &lo);
        long agree = 0;
        for (std::size_t i = 0; i < lk.size(); ++i) agree += lk[i] == lo[i];
        // Output order is globally ambiguous; score the better global flip.
        acc_sum += double(std::max(agree, long(lk.size()) - agree)) / double(lk.size());
        std::array<Waveform, 2> ra = {ex.sources[0], ex.sources[1]};
        si_km += si_snri(ex.mixture, est_k, ra);
        si_opt += si_snri(ex.mixture, est_o, ra);
        fer_km += fer(est_k, ra, fcfg);
    }
    const double n = static_cast<double>(toy.eval30.size());
    const double acc = 100.0 * acc_sum / n;
    si_km /= n;
    si_opt /= n;
    kmeans_out.mean_si_snri = si_km;
    kmeans_out.mean_fer = fer_km / n;

    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "label accuracy %.2f%% (>=90), SI-SNRi kmeans %.2f / optimal %.2f dB "
                  "(optimal >= kmeans - 0.1)",
                  acc, si_km, si_opt);
    report(10, "toy tPIT-latent + clustering", acc >= 90.0 && si_opt >= si_km - 0.1, buf);
}

void criterion_fer_direction(const ToyRuns& toy, const EvalStats& cluster_stats) {
    SeparationModel up = load_separation_model(toy.upit50_ckpt.string());
    EvalStats st = eval_system(up, toy.eval30, SeparateOptions{});
    char buf[240];
    std::snprintf(buf, sizeof(buf),
                  "clustering FER %.3f%% <= uPIT FER %.3f%% on the shared eval set "
                  "(seeds: catalogs 100/555, upit 5, encdec 4, tpit 6, cluster 7, kmeans 3)",
                  cluster_stats.mean_fer, st.mean_fer);
    report(11, "FER direction, clustering vs uPIT", cluster_stats.mean_fer <= st.mean_fer, buf);
}

// ---------------------------------------------------------------------------
// C12: determinism and resume.

void criterion_determinism(const fs::path& dir) {
    SynthConfig sc;
    sc.catalog_seed = 77;
    sc.count = 4;
    sc.sample_rate = 8000;
    sc.duration_s = 0.5;
    auto entries = synth_dataset_to_dir(sc, (dir / "det").string());
    (void)entries;

    StageConfig s;
    s.loss_mode = "upit";
    s.train_manifest = (dir / "det" / "manifest.jsonl").string();
    s.epochs = 3;
    s.seed = 21;
    s.segment_seconds = 0.25;
    s.filters = 16;
    s.separator = {16, 8, 12, 3, 2, 1, 2, 0};

    StageConfig a = s, b = s;
    a.ckpt_out = (dir / "det_a.ckpt").string();
    b.ckpt_out = (dir / "det_b.ckpt").string();
    run_stage(a);
    run_stage(b);
    const bool twin_ok = read_file(a.ckpt_out) == read_file(b.ckpt_out);

    StageConfig part = s, rest = s;
    part.epochs = 1;
    part.ckpt_out = (dir / "det_part.ckpt").string();
    run_stage(part);
    rest.resume = part.ckpt_out;
    rest.ckpt_out = (dir / "det_resumed.ckpt").string();
    run_stage(rest);
    const bool resume_ok = read_file(a.ckpt_out) == read_file(rest.ckpt_out);

    char buf[140];
    std::snprintf(buf, sizeof(buf), "twin runs %s, resumed run %s",
                  twin_ok ? "bit-identical" : "DIFFER",
                  resume_ok ? "bit-identical" : "DIFFERS");
    report(12, "determinism and resume", twin_ok && resume_ok, buf);
}

}  // namespace

int main() {
    const fs::path dir = fs::temp_directory_path() / "pitsep_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);

    criterion_permutation_search();
    criterion_loss_oracles();
    criterion_gradient_checks();
    criterion_signal_round_trips(dir);
    criterion_scale_invariance();
    criterion_metric_oracles();
    criterion_complexity();

    const auto t0 = Clock::now();
    ToyRuns toy = prepare_toy_runs(dir);
    const double train_minutes = seconds_since(t0) / 60.0;

    criterion_toy_upit(toy, train_minutes);
    criterion_toy_encdec(toy);
    EvalStats cluster_stats;
    criterion_toy_clustering(toy, cluster_stats);
    criterion_fer_direction(toy, cluster_stats);
    criterion_determinism(dir);

    std::printf("%d of 12 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
