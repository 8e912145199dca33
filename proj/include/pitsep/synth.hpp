#pragma once

// Synthetic two-speaker mixture generation and the JSON-lines dataset manifest.

#include <string>
#include <vector>

#include "pitsep/signal.hpp"

namespace pitsep {

struct SynthConfig {
    uint64_t catalog_seed = 0;
    int count = 0;
    int sample_rate = 8000;
    double duration_s = 4.0;
    double snr_lo_db = 0.0;
    double snr_hi_db = 5.0;
};

// Each "speaker" is a harmonic tone with an amplitude-modulated envelope;
// the two speaker identities draw fundamentals from disjoint ranges so a
// small model can tell them apart.
std::vector<MixtureExample> synth_mixture(const SynthConfig& cfg);

// Deterministic single example, seed derived from (catalog_seed, index).
MixtureExample synth_example(const SynthConfig& cfg, int index);

struct ManifestEntry {
    std::string id;
    std::string mixture_path;
    std::vector<std::string> source_paths;
    int sample_rate = 8000;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Synthesizes a catalog, writes float32 wavs plus manifest.jsonl under dir.
std::vector<ManifestEntry> synth_dataset_to_dir(const SynthConfig& cfg, const std::string& dir);

MixtureExample load_manifest_example(const ManifestEntry& entry);

}  // namespace pitsep
