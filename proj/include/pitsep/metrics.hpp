#pragma once

// Evaluation metrics: SI-SNRi, frame error rate (FER), hard-sample rate (HSR)
// and histogram export, plus the report CSV writers.

#include <array>
#include <string>
#include <vector>

#include "pitsep/losses.hpp"
#include "pitsep/signal.hpp"

namespace pitsep {

struct UtteranceScore {
    std::string id;
    double si_snri_db = 0.0;
    double fer_pct = 0.0;
    int best_perm = 0;
};

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    long count = 0;
};

struct EvalReport {
    std::vector<UtteranceScore> scores;
    double mean_si_snri = 0.0;
    double mean_fer = 0.0;
    std::vector<std::pair<double, double>> hsr;  // (threshold dB, percent)
    std::vector<HistogramBin> histogram;
};

// STFT configuration used by FER; fixed in reports for comparability.
struct FerStftConfig {
    Eigen::Index window_length = 256;  // 32 ms at 8 kHz
    Eigen::Index hop = 64;             // 8 ms
};

inline FerStftConfig fer_stft_for_rate(int sample_rate) {
    FerStftConfig cfg;
    cfg.window_length = sample_rate == 16000 ? 512 : 256;
    cfg.hop = cfg.window_length / 4;
    return cfg;
}

// Max over output permutations of the mean SI-SNR, minus the mixture baseline.
double si_snri(const Waveform& mixture, const std::array<Waveform, 2>& ests,
               const std::array<Waveform, 2>& refs, int* best_perm = nullptr);

// Minimum percentage of frames whose best spectral-L1 permutation disagrees
// with a single utterance-level permutation. Tie frames count as consistent
// with either choice.
double fer(const std::array<Waveform, 2>& ests, const std::array<Waveform, 2>& refs,
           const FerStftConfig& cfg);

double hsr(const std::vector<double>& scores, double threshold_db);

std::vector<HistogramBin> histogram(const std::vector<double>& scores, double bin_width, double lo,
                                    double hi);

void write_report_csv(const std::string& path, const EvalReport& report,
                      const FerStftConfig& stft_cfg);
void write_histogram_csv(const std::string& path, const std::vector<HistogramBin>& bins);

}  // namespace pitsep
