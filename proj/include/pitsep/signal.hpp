#pragma once

// Deterministic signal plumbing: framing, overlap-add, STFT/iSTFT and the
// variance normalization applied before SI-SNR training.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "pitsep/errors.hpp"

namespace pitsep {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Vector<S, Eigen::Dynamic>;

template <class S>
struct BasicWaveform {
    std::vector<S> samples;
    int sample_rate = 8000;

    Eigen::Index size() const { return static_cast<Eigen::Index>(samples.size()); }
};

using Waveform = BasicWaveform<float>;

// Frames stored row-major: row k holds samples [k*stride, k*stride + frame_length).
template <class S>
struct FrameMatrix {
    Mat<S> frames;             // K x L
    Eigen::Index frame_length = 0;
    Eigen::Index stride = 0;
};

// bins(k, f): frame k, frequency bin f; F = window_length/2 + 1.
// Produced with center padding of window_length/2 zeros on each side.
template <class S>
struct BasicSpectrogram {
    Mat<std::complex<S>> bins;  // K_f x F
    Eigen::Index window_length = 0;
    Eigen::Index hop = 0;
    Eigen::Index signal_length = 0;
};

using Spectrogram = BasicSpectrogram<float>;

template <class S>
struct BasicMixtureExample {
    BasicWaveform<S> mixture;
    std::vector<BasicWaveform<S>> sources;
    double mix_snr_db = 0.0;
    std::string id;
};

using MixtureExample = BasicMixtureExample<float>;

inline bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

// ---------------------------------------------------------------------------
// Framing / overlap-add

template <class S>
FrameMatrix<S> frame_signal(const std::vector<S>& wave, Eigen::Index L, Eigen::Index S_stride) {
    if (S_stride < 1 || L < S_stride)
        throw ParamError("frame_signal: need frame_length >= stride >= 1, got L=" +
                         std::to_string(L) + " S=" + std::to_string(S_stride));
    if (wave.empty()) throw ParamError("frame_signal: empty input signal");
    const Eigen::Index T = static_cast<Eigen::Index>(wave.size());
    // Smallest K with (K-1)*S + L >= T so the zero-padded tail covers every sample.
    const Eigen::Index K = (T <= L) ? 1 : 1 + (T - L + S_stride - 1) / S_stride;
    FrameMatrix<S> out;
    out.frames.setZero(K, L);
    out.frame_length = L;
    out.stride = S_stride;
    for (Eigen::Index k = 0; k < K; ++k) {
        const Eigen::Index start = k * S_stride;
        const Eigen::Index n = std::min(L, T - start);
        for (Eigen::Index i = 0; i < n; ++i) out.frames(k, i) = wave[start + i];
    }
    return out;
}

template <class S>
FrameMatrix<S> frame_signal(const BasicWaveform<S>& wave, Eigen::Index L, Eigen::Index stride) {
    return frame_signal(wave.samples, L, stride);
}

template <class S>
std::vector<S> overlap_add(const FrameMatrix<S>& fm, Eigen::Index out_len) {
    const Eigen::Index K = fm.frames.rows();
    const Eigen::Index L = fm.frame_length;
    const Eigen::Index St = fm.stride;
    if (K < 1 || L != fm.frames.cols() || St < 1)
        throw ParamError("overlap_add: inconsistent frame matrix");
    const Eigen::Index covered = (K - 1) * St + L;
    if (out_len < 1 || out_len > covered)
        throw ParamError("overlap_add: out_len " + std::to_string(out_len) +
                         " exceeds covered range " + std::to_string(covered));
    std::vector<double> acc(covered, 0.0);
    std::vector<int> cov(covered, 0);
    for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index i = 0; i < L; ++i) {
            acc[k * St + i] += static_cast<double>(fm.frames(k, i));
            cov[k * St + i] += 1;
        }
    std::vector<S> out(out_len);
    for (Eigen::Index t = 0; t < out_len; ++t)
        out[t] = static_cast<S>(acc[t] / cov[t]);
    return out;
}

// Adjoint of overlap_add w.r.t. the frame values; needed when a loss is taken
// on the reconstructed waveform.
template <class S>
Mat<S> overlap_add_adjoint(const std::vector<S>& grad_out, Eigen::Index K, Eigen::Index L,
                           Eigen::Index stride) {
    const Eigen::Index covered = (K - 1) * stride + L;
    const Eigen::Index out_len = static_cast<Eigen::Index>(grad_out.size());
    std::vector<int> cov(covered, 0);
    for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index i = 0; i < L; ++i) cov[k * stride + i] += 1;
    Mat<S> grad = Mat<S>::Zero(K, L);
    for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index i = 0; i < L; ++i) {
            const Eigen::Index t = k * stride + i;
            if (t < out_len) grad(k, i) = grad_out[t] / static_cast<S>(cov[t]);
        }
    return grad;
}

// ---------------------------------------------------------------------------
// FFT (iterative radix-2) and STFT

template <class S>
void fft_inplace(std::vector<std::complex<S>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1 : -1);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u(a[i + j]);
                const std::complex<double> v = std::complex<double>(a[i + j + len / 2]) * w;
                a[i + j] = std::complex<S>(u + v);
                a[i + j + len / 2] = std::complex<S>(u - v);
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<S>(n);
}

// Periodic Hann window.
template <class S>
std::vector<S> hann_window(Eigen::Index n) {
    std::vector<S> w(n);
    for (Eigen::Index i = 0; i < n; ++i)
        w[i] = static_cast<S>(0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / static_cast<double>(n))));
    return w;
}

template <class S>
BasicSpectrogram<S> stft(const BasicWaveform<S>& wave, Eigen::Index window_length, Eigen::Index hop) {
    if (!is_power_of_two(window_length))
        throw ParamError("stft: window_length must be a power of two, got " +
                         std::to_string(window_length));
    if (hop < 1 || hop > window_length) throw ParamError("stft: need 1 <= hop <= window_length");
    if (wave.samples.empty()) throw ParamError("stft: empty signal");
    const Eigen::Index T = wave.size();
    const Eigen::Index pad = window_length / 2;
    const Eigen::Index F = window_length / 2 + 1;
    const Eigen::Index Kf = 1 + T / hop;
    const auto win = hann_window<S>(window_length);
    BasicSpectrogram<S> spec;
    spec.bins.setZero(Kf, F);
    spec.window_length = window_length;
    spec.hop = hop;
    spec.signal_length = T;
    std::vector<std::complex<S>> buf(window_length);
    for (Eigen::Index k = 0; k < Kf; ++k) {
        const Eigen::Index start = k * hop - pad;
        for (Eigen::Index i = 0; i < window_length; ++i) {
            const Eigen::Index t = start + i;
            const S s = (t >= 0 && t < T) ? wave.samples[t] : S(0);
            buf[i] = std::complex<S>(s * win[i], S(0));
        }
        fft_inplace(buf, false);
        for (Eigen::Index f = 0; f < F; ++f) spec.bins(k, f) = buf[f];
    }
    return spec;
}

template <class S>
BasicWaveform<S> istft(const BasicSpectrogram<S>& spec, int sample_rate) {
    const Eigen::Index wl = spec.window_length;
    const Eigen::Index hop = spec.hop;
    const Eigen::Index T = spec.signal_length;
    const Eigen::Index F = wl / 2 + 1;
    if (spec.bins.cols() != F) throw ParamError("istft: bin count inconsistent with window_length");
    const Eigen::Index Kf = spec.bins.rows();
    const Eigen::Index pad = wl / 2;
    const auto win = hann_window<S>(wl);
    std::vector<double> acc(pad + T + wl, 0.0), wsum(pad + T + wl, 0.0);
    std::vector<std::complex<S>> buf(wl);
    for (Eigen::Index k = 0; k < Kf; ++k) {
        for (Eigen::Index f = 0; f < F; ++f) buf[f] = spec.bins(k, f);
        for (Eigen::Index f = F; f < wl; ++f) buf[f] = std::conj(spec.bins(k, wl - f));
        fft_inplace(buf, true);
        const Eigen::Index start = k * hop;  // in padded coordinates
        for (Eigen::Index i = 0; i < wl; ++i) {
            acc[start + i] += static_cast<double>(buf[i].real()) * win[i];
            wsum[start + i] += static_cast<double>(win[i]) * win[i];
        }
    }
    BasicWaveform<S> out;
    out.sample_rate = sample_rate;
    out.samples.resize(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        const double w = wsum[pad + t];
        out.samples[t] = static_cast<S>(w > 1e-12 ? acc[pad + t] / w : 0.0);
    }
    return out;
}

// Adjoint of istft w.r.t. the complex bins (real and imaginary parts treated
// as independent reals; DC and Nyquist carry weight 1, interior bins 2).
template <class S>
Mat<std::complex<S>> istft_adjoint(const std::vector<S>& grad_wave, Eigen::Index Kf,
                                   Eigen::Index window_length, Eigen::Index hop) {
    const Eigen::Index wl = window_length;
    const Eigen::Index F = wl / 2 + 1;
    const Eigen::Index T = static_cast<Eigen::Index>(grad_wave.size());
    const Eigen::Index pad = wl / 2;
    const auto win = hann_window<S>(wl);
    // Reproduce the forward normalization.
    std::vector<double> wsum(pad + T + wl, 0.0);
    for (Eigen::Index k = 0; k < Kf; ++k)
        for (Eigen::Index i = 0; i < wl; ++i)
            wsum[k * hop + i] += static_cast<double>(win[i]) * win[i];
    std::vector<double> g(pad + T + wl, 0.0);
    for (Eigen::Index t = 0; t < T; ++t) {
        const double w = wsum[pad + t];
        if (w > 1e-12) g[pad + t] = static_cast<double>(grad_wave[t]) / w;
    }
    Mat<std::complex<S>> grad = Mat<std::complex<S>>::Zero(Kf, F);
    std::vector<std::complex<S>> buf(wl);
    for (Eigen::Index k = 0; k < Kf; ++k) {
        const Eigen::Index start = k * hop;
        for (Eigen::Index i = 0; i < wl; ++i)
            buf[i] = std::complex<S>(static_cast<S>(g[start + i]) * win[i], S(0));
        fft_inplace(buf, false);
        for (Eigen::Index f = 0; f < F; ++f) {
            const double c = (f == 0 || f == wl / 2) ? 1.0 : 2.0;
            // d/dRe X = (c/N) Re fft(g), d/dIm X = (c/N) Im fft(g) under the
            // irfft convention used above (conjugate bins folded in).
            grad(k, f) = std::complex<S>(static_cast<S>(c / wl * buf[f].real()),
                                         static_cast<S>(c / wl * buf[f].imag()));
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Variance normalization (divide by the mixture's standard deviation)

template <class S>
S waveform_std(const BasicWaveform<S>& w) {
    double mean = 0.0;
    for (S v : w.samples) mean += v;
    mean /= static_cast<double>(w.samples.size());
    double var = 0.0;
    for (S v : w.samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.samples.size());
    return static_cast<S>(std::sqrt(var));
}

template <class S>
std::vector<BasicWaveform<S>> variance_normalize(const std::vector<BasicWaveform<S>>& targets,
                                                 const BasicWaveform<S>& mixture) {
    const S sd = waveform_std(mixture);
    if (!(sd > S(0))) throw DegenerateInputError("variance_normalize: mixture has zero variance");
    std::vector<BasicWaveform<S>> out = targets;
    for (auto& t : out)
        for (auto& v : t.samples) v /= sd;
    return out;
}

template <class S>
BasicWaveform<S> variance_normalize_one(const BasicWaveform<S>& x, const BasicWaveform<S>& mixture) {
    const S sd = waveform_std(mixture);
    if (!(sd > S(0))) throw DegenerateInputError("variance_normalize: mixture has zero variance");
    BasicWaveform<S> out = x;
    for (auto& v : out.samples) v /= sd;
    return out;
}

}  // namespace pitsep
