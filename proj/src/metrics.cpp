#include "pitsep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pitsep {

double si_snri(const Waveform& mixture, const std::array<Waveform, 2>& ests,
               const std::array<Waveform, 2>& refs, int* best_perm) {
    const double id = 0.5 * (si_snr(refs[0], ests[0]) + si_snr(refs[1], ests[1]));
    const double sw = 0.5 * (si_snr(refs[1], ests[0]) + si_snr(refs[0], ests[1]));
    const double base = 0.5 * (si_snr(refs[0], mixture) + si_snr(refs[1], mixture));
    if (best_perm) *best_perm = sw > id ? 1 : 0;
    return std::max(id, sw) - base;
}

double fer(const std::array<Waveform, 2>& ests, const std::array<Waveform, 2>& refs,
           const FerStftConfig& cfg) {
    for (int c = 0; c < 2; ++c)
        if (ests[c].size() != refs[c].size())
            throw ParamError("fer: estimate/reference length mismatch");
    std::array<Spectrogram, 2> est_specs, ref_specs;
    for (int c = 0; c < 2; ++c) {
        est_specs[c] = stft(ests[c], cfg.window_length, cfg.hop);
        ref_specs[c] = stft(refs[c], cfg.window_length, cfg.hop);
    }
    // Per-frame best permutation plus tie detection: tie frames are counted
    // as consistent with either global permutation.
    const Eigen::Index K = est_specs[0].bins.rows();
    const Eigen::Index F = est_specs[0].bins.cols();
    long mismatch_id = 0, mismatch_sw = 0;
    for (Eigen::Index k = 0; k < K; ++k) {
        double id = 0.0, sw = 0.0;
        for (int c = 0; c < 2; ++c)
            for (Eigen::Index f = 0; f < F; ++f) {
                const auto e = est_specs[c].bins(k, f);
                const auto r0 = ref_specs[c].bins(k, f);
                const auto r1 = ref_specs[1 - c].bins(k, f);
                id += std::abs(double(e.real()) - r0.real()) + std::abs(double(e.imag()) - r0.imag());
                sw += std::abs(double(e.real()) - r1.real()) + std::abs(double(e.imag()) - r1.imag());
            }
        if (id == sw) continue;  // tie carries no permutation information
        const int label = sw < id ? 1 : 0;
        if (label != 0) ++mismatch_id;
        if (label != 1) ++mismatch_sw;
    }
    return 100.0 * static_cast<double>(std::min(mismatch_id, mismatch_sw)) /
           static_cast<double>(K);
}

double hsr(const std::vector<double>& scores, double threshold_db) {
    if (scores.empty()) throw ParamError("hsr: empty score list");
    long n = 0;
    for (double s : scores)
        if (s < threshold_db) ++n;
    return 100.0 * static_cast<double>(n) / static_cast<double>(scores.size());
}

std::vector<HistogramBin> histogram(const std::vector<double>& scores, double bin_width, double lo,
                                    double hi) {
    if (!(lo < hi) || !(bin_width > 0)) throw ParamError("histogram: need lo < hi, bin_width > 0");
    const long inner = static_cast<long>(std::ceil((hi - lo) / bin_width));
    std::vector<HistogramBin> bins(inner + 2);
    bins[0] = {-std::numeric_limits<double>::infinity(), lo, 0};
    for (long i = 0; i < inner; ++i) bins[i + 1] = {lo + i * bin_width, lo + (i + 1) * bin_width, 0};
    bins[inner + 1] = {lo + inner * bin_width, std::numeric_limits<double>::infinity(), 0};
    for (double s : scores) {
        if (s < lo) {
            ++bins[0].count;
        } else {
            long i = static_cast<long>(std::floor((s - lo) / bin_width));
            if (i >= inner)
                ++bins[inner + 1].count;
            else
                ++bins[i + 1].count;
        }
    }
    return bins;
}

void write_report_csv(const std::string& path, const EvalReport& report,
                      const FerStftConfig& stft_cfg) {
    std::ofstream out(path);
    if (!out) throw FormatError("report: cannot write " + path);
    out << "id,si_snri_db,fer_pct,best_perm\n";
    for (const auto& s : report.scores)
        out << s.id << "," << s.si_snri_db << "," << s.fer_pct << "," << s.best_perm << "\n";
    out << "# fer_stft window_length=" << stft_cfg.window_length << " hop=" << stft_cfg.hop
        << " window=hann tie_frames=consistent\n";
    out << "# mean_si_snri_db " << report.mean_si_snri << "\n";
    out << "# mean_fer_pct " << report.mean_fer << "\n";
    for (const auto& [thr, pct] : report.hsr) out << "# hsr_" << thr << "db_pct " << pct << "\n";
}

void write_histogram_csv(const std::string& path, const std::vector<HistogramBin>& bins) {
    std::ofstream out(path);
    if (!out) throw FormatError("histogram: cannot write " + path);
    out << "bin_left,bin_right,count\n";
    for (const auto& b : bins) out << b.left << "," << b.right << "," << b.count << "\n";
}

}  // namespace pitsep
