#include "pitsep/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "pitsep/errors.hpp"
#include "pitsep/wav_io.hpp"

namespace pitsep {

namespace {

uint64_t mix_seed(uint64_t catalog_seed, uint64_t index) {
    // splitmix64 over the pair
    uint64_t z = catalog_seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Harmonic tone with vibrato and AM envelope; fundamental drawn from the
// speaker identity's range.
std::vector<double> synth_speaker(std::mt19937_64& rng, int speaker, int sr, int n_samples) {
    const double f_lo = speaker == 0 ? 112.0 : 150.0;
    const double f_hi = speaker == 0 ? 146.0 : 184.0;
    std::uniform_real_distribution<double> uf(f_lo, f_hi);
    std::uniform_real_distribution<double> uphase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> udecay(0.6, 1.4);
    std::uniform_real_distribution<double> uam_rate(1.0, 4.0);
    std::uniform_real_distribution<double> uam_depth(0.3, 0.8);
    std::uniform_real_distribution<double> uvib_rate(3.0, 7.0);
    std::uniform_real_distribution<double> uvib_cents(0.0, 30.0);

    const double f0 = uf(rng);
    const double decay = udecay(rng);
    const int n_harm = 6;
    double amp[n_harm], phase[n_harm];
    for (int h = 0; h < n_harm; ++h) {
        amp[h] = std::pow(1.0 / (h + 1), decay);
        phase[h] = uphase(rng);
    }
    const double am_rate = uam_rate(rng), am_depth = uam_depth(rng), am_phase = uphase(rng);
    const double vib_rate = uvib_rate(rng), vib_phase = uphase(rng);
    const double vib_frac = std::pow(2.0, uvib_cents(rng) / 1200.0) - 1.0;

    std::vector<double> out(n_samples);
    double inst_phase[n_harm];
    for (int h = 0; h < n_harm; ++h) inst_phase[h] = phase[h];
    for (int t = 0; t < n_samples; ++t) {
        const double tt = static_cast<double>(t) / sr;
        const double f_inst =
            f0 * (1.0 + vib_frac * std::sin(2.0 * std::numbers::pi * vib_rate * tt + vib_phase));
        const double env =
            0.5 * (1.0 + am_depth * std::sin(2.0 * std::numbers::pi * am_rate * tt + am_phase));
        double s = 0.0;
        for (int h = 0; h < n_harm; ++h) {
            inst_phase[h] += 2.0 * std::numbers::pi * f_inst * (h + 1) / sr;
            s += amp[h] * std::sin(inst_phase[h]);
        }
        out[t] = env * s;
    }
    return out;
}

double rms(const std::vector<double>& x) {
    double e = 0.0;
    for (double v : x) e += v * v;
    return std::sqrt(e / static_cast<double>(x.size()));
}

}  // namespace

MixtureExample synth_example(const SynthConfig& cfg, int index) {
    const int n_samples = static_cast<int>(std::llround(cfg.duration_s * cfg.sample_rate));
    std::mt19937_64 rng(mix_seed(cfg.catalog_seed, static_cast<uint64_t>(index)));
    auto s0 = synth_speaker(rng, 0, cfg.sample_rate, n_samples);
    auto s1 = synth_speaker(rng, 1, cfg.sample_rate, n_samples);
    std::uniform_real_distribution<double> usnr(cfg.snr_lo_db, cfg.snr_hi_db);
    const double snr = usnr(rng);

    // Target RMS ratio s0/s1 = 10^(snr/20); then scale the pair for headroom.
    const double r0 = rms(s0), r1 = rms(s1);
    const double g1 = (r0 / r1) * std::pow(10.0, -snr / 20.0);
    for (auto& v : s1) v *= g1;
    double peak = 0.0;
    for (int t = 0; t < n_samples; ++t) peak = std::max(peak, std::abs(s0[t] + s1[t]));
    const double g = peak > 0.0 ? 0.9 / peak : 1.0;

    MixtureExample ex;
    ex.mix_snr_db = snr;
    ex.id = "ex" + std::to_string(index);
    ex.sources.resize(2);
    for (auto& s : ex.sources) s.sample_rate = cfg.sample_rate;
    ex.mixture.sample_rate = cfg.sample_rate;
    ex.sources[0].samples.resize(n_samples);
    ex.sources[1].samples.resize(n_samples);
    ex.mixture.samples.resize(n_samples);
    for (int t = 0; t < n_samples; ++t) {
        const float a = static_cast<float>(s0[t] * g);
        const float b = static_cast<float>(s1[t] * g);
        ex.sources[0].samples[t] = a;
        ex.sources[1].samples[t] = b;
        ex.mixture.samples[t] = a + b;
    }
    return ex;
}

std::vector<MixtureExample> synth_mixture(const SynthConfig& cfg) {
    if (cfg.snr_lo_db > cfg.snr_hi_db) throw ParamError("synth: snr_lo > snr_hi");
    if (cfg.count < 1) throw ParamError("synth: count must be >= 1");
    if (cfg.duration_s * cfg.sample_rate < 1) throw ParamError("synth: duration too short");
    std::vector<MixtureExample> out;
    out.reserve(cfg.count);
    for (int i = 0; i < cfg.count; ++i) out.push_back(synth_example(cfg, i));
    return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw FormatError("manifest: cannot write " + path);
    for (const auto& e : entries) {
        nlohmann::json j;
        j["id"] = e.id;
        j["mixture"] = e.mixture_path;
        j["sources"] = e.source_paths;
        j["sample_rate"] = e.sample_rate;
        out << j.dump() << "\n";
    }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("manifest: cannot open " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest: bad JSON at " + path + ":" + std::to_string(lineno) +
                              ": " + e.what());
        }
        ManifestEntry m;
        try {
            m.id = j.at("id").get<std::string>();
            m.mixture_path = j.at("mixture").get<std::string>();
            m.source_paths = j.at("sources").get<std::vector<std::string>>();
            m.sample_rate = j.at("sample_rate").get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest: missing field at " + path + ":" +
                              std::to_string(lineno) + ": " + e.what());
        }
        entries.push_back(std::move(m));
    }
    return entries;
}

std::vector<ManifestEntry> synth_dataset_to_dir(const SynthConfig& cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < cfg.count; ++i) {
        MixtureExample ex = synth_example(cfg, i);
        ManifestEntry m;
        m.id = ex.id;
        m.sample_rate = cfg.sample_rate;
        m.mixture_path = (fs::path(dir) / (ex.id + ".mix.wav")).string();
        m.source_paths = {(fs::path(dir) / (ex.id + ".s1.wav")).string(),
                          (fs::path(dir) / (ex.id + ".s2.wav")).string()};
        save_wav(m.mixture_path, ex.mixture);
        save_wav(m.source_paths[0], ex.sources[0]);
        save_wav(m.source_paths[1], ex.sources[1]);
        entries.push_back(std::move(m));
    }
    write_manifest((fs::path(dir) / "manifest.jsonl").string(), entries);
    return entries;
}

MixtureExample load_manifest_example(const ManifestEntry& entry) {
    MixtureExample ex;
    ex.id = entry.id;
    ex.mixture = load_wav(entry.mixture_path);
    for (const auto& p : entry.source_paths) ex.sources.push_back(load_wav(p));
    for (const auto& s : ex.sources)
        if (s.samples.size() != ex.mixture.samples.size() || s.sample_rate != ex.mixture.sample_rate)
            throw FormatError("manifest: source/mixture length or rate mismatch for id " + entry.id);
    return ex;
}

}  // namespace pitsep
