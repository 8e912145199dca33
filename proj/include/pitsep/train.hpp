#pragma once

// Stage orchestration: staged training, separation, evaluation and the
// loss-complexity benchmark, shared by the CLI and the test suites.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pitsep/config.hpp"
#include "pitsep/losses.hpp"
#include "pitsep/metrics.hpp"
#include "pitsep/models.hpp"
#include "pitsep/permtrack.hpp"
#include "pitsep/synth.hpp"

namespace pitsep {

struct StageConfig {
    std::string name = "stage";
    // encdec | upit | tpit-time | tpit-latent | tpit-stft | upit-pase |
    // clustering | cascade-stage2
    std::string loss_mode = "upit";
    std::string train_manifest, valid_manifest;
    std::string ckpt_in, ckpt_out, resume;
    std::string log_path;
    long epochs = 10;
    uint64_t seed = 1;
    double lr = 1e-3;
    double segment_seconds = 4.0;
    int sample_rate = 8000;

    long frame_length = 16;
    long stride = 8;
    long filters = 512;
    SeparatorConfig separator;
    ClusterNetConfig cluster;
    FeatureEncoderConfig features;
    StftSeparatorConfig stft_sep;
    double pase_lambda = 0.5;
    bool pairwise_baseline = false;
    bool finetune_features = false;

    static StageConfig from_config(const ConfigFile& cfg);
    ConfigFile resolved() const;
};

struct TrainResult {
    std::string ckpt_path;
    std::vector<std::string> log_lines;
    double final_valid_loss = 0.0;
};

TrainResult run_stage(const StageConfig& cfg);

// ---------------------------------------------------------------------------
// Inference

enum class ModelKind { EncDec = 1, Separator = 2, Clustering = 3, StftSep = 4 };

struct SeparationModel {
    ModelKind kind = ModelKind::Separator;
    int sample_rate = 8000;
    std::unique_ptr<EncoderDecoder> encdec;
    std::unique_ptr<Separator> separator;
    std::unique_ptr<ClusterNet> clusternet;
    std::unique_ptr<StftSeparator> stft_sep;
    std::unique_ptr<FeatureEncoder> features;  // cascade conditioning
    std::unique_ptr<EncoderDecoder> stage1_encdec;
    std::unique_ptr<Separator> stage1_separator;
};

SeparationModel load_separation_model(const std::string& ckpt_path);

struct SeparateOptions {
    std::string tracking = "none";  // none | kmeans | optimal
    uint64_t kmeans_seed = 0;
};

std::array<Waveform, 2> separate_one(SeparationModel& model, const Waveform& mixture,
                                     const SeparateOptions& opts,
                                     const std::vector<Waveform>* refs = nullptr,
                                     std::vector<int>* labels_out = nullptr);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
    std::vector<double> hsr_thresholds = {5.0, 10.0};
    double hist_bin_width = 1.0;
    double hist_lo = -5.0;
    double hist_hi = 25.0;
};

// Estimates are looked up as <dir>/<id>.spk1.wav, <dir>/<id>.spk2.wav.
EvalReport evaluate_manifest(const std::vector<ManifestEntry>& manifest,
                             const std::string& estimates_dir, const EvalOptions& opts);

// ---------------------------------------------------------------------------
// Complexity benchmark

struct BenchRow {
    std::string loss_name;
    long K = 0;
    double wall_micros = 0.0;
    long bytes_peak_estimate = 0;
};

std::vector<BenchRow> bench_cluster_loss(const std::vector<long>& k_values, long dim, int repeats,
                                         uint64_t seed = 7);
void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);

}  // namespace pitsep
