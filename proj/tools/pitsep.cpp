// pitsep: synthesize datasets, run staged training, separate mixtures,
// evaluate separations and benchmark the clustering losses.

#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pitsep/train.hpp"
#include "pitsep/wav_io.hpp"

namespace fs = std::filesystem;
using namespace pitsep;

namespace {

std::vector<long> parse_longs(const std::string& csv) {
    std::vector<long> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) if (!tok.empty()) out.push_back(std::stol(tok));
    return out;
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) if (!tok.empty()) out.push_back(std::stod(tok));
    return out;
}

int cmd_synth(const std::string& out_dir, int count, uint64_t seed, int rate, double duration,
              double snr_lo, double snr_hi) {
    SynthConfig cfg;
    cfg.catalog_seed = seed;
    cfg.count = count;
    cfg.sample_rate = rate;
    cfg.duration_s = duration;
    cfg.snr_lo_db = snr_lo;
    cfg.snr_hi_db = snr_hi;
    auto entries = synth_dataset_to_dir(cfg, out_dir);
    std::cout << "wrote " << entries.size() << " examples to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::map<std::string, std::string>& overrides) {
    ConfigFile cfg = ConfigFile::parse_file(config_path);
    for (const auto& [k, v] : overrides)
        if (!v.empty()) cfg.set(k, v);
    StageConfig stage = StageConfig::from_config(cfg);
    TrainResult res = run_stage(stage);
    for (const auto& line : res.log_lines) std::cout << line << "\n";
    std::cout << "checkpoint: " << res.ckpt_path << "\n";
    return 0;
}

int cmd_separate(const std::string& ckpt, const std::string& manifest_path,
                 const std::string& out_dir, const std::string& tracking, uint64_t kmeans_seed) {
    SeparationModel model = load_separation_model(ckpt);
    auto manifest = read_manifest(manifest_path);
    fs::create_directories(out_dir);
    SeparateOptions opts;
    opts.tracking = tracking;
    opts.kmeans_seed = kmeans_seed;
    for (const auto& e : manifest) {
        MixtureExample ex = load_manifest_example(e);
        const std::vector<Waveform>* refs = tracking == "optimal" ? &ex.sources : nullptr;
        auto out = separate_one(model, ex.mixture, opts, refs);
        save_wav((fs::path(out_dir) / (e.id + ".spk1.wav")).string(), out[0]);
        save_wav((fs::path(out_dir) / (e.id + ".spk2.wav")).string(), out[1]);
    }
    std::cout << "separated " << manifest.size() << " mixtures to " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& estimates_dir,
             const std::string& report_path, const std::string& hist_path,
             const std::string& thresholds, double bin_width, double hist_lo, double hist_hi) {
    auto manifest = read_manifest(manifest_path);
    if (manifest.empty()) throw ConfigError("eval: manifest is empty");
    EvalOptions opts;
    if (!thresholds.empty()) opts.hsr_thresholds = parse_doubles(thresholds);
    opts.hist_bin_width = bin_width;
    opts.hist_lo = hist_lo;
    opts.hist_hi = hist_hi;
    EvalReport report = evaluate_manifest(manifest, estimates_dir, opts);
    write_report_csv(report_path, report, fer_stft_for_rate(manifest.front().sample_rate));
    if (!hist_path.empty()) write_histogram_csv(hist_path, report.histogram);
    std::cout << "mean_si_snri_db=" << report.mean_si_snri << " mean_fer_pct=" << report.mean_fer
              << "\n";
    return 0;
}

int cmd_bench(const std::string& out_path, const std::string& k_csv, long dim, int repeats,
              uint64_t seed) {
    auto rows = bench_cluster_loss(parse_longs(k_csv), dim, repeats, seed);
    write_bench_csv(out_path, rows);
    for (const auto& r : rows)
        std::cout << r.loss_name << " K=" << r.K << " wall_micros=" << r.wall_micros << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-speaker separation toolkit"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "synthesize a mixture dataset");
    std::string synth_out = "data";
    int synth_count = 16, synth_rate = 8000;
    uint64_t synth_seed = 1;
    double synth_dur = 4.0, snr_lo = 0.0, snr_hi = 5.0;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--count", synth_count, "number of examples");
    synth->add_option("--seed", synth_seed, "catalog seed");
    synth->add_option("--sample-rate", synth_rate, "sample rate in Hz");
    synth->add_option("--duration", synth_dur, "seconds per example");
    synth->add_option("--snr-lo", snr_lo, "mixing SNR lower bound, dB");
    synth->add_option("--snr-hi", snr_hi, "mixing SNR upper bound, dB");

    auto* train = app.add_subcommand("train", "run one training stage from a config file");
    std::string train_config;
    std::map<std::string, std::string> ov;
    train->add_option("config", train_config, "stage config file")->required();
    train->add_option("--stage", ov["stage.name"], "override stage name");
    train->add_option("--loss", ov["stage.loss"], "override loss mode");
    train->add_option("--seed", ov["stage.seed"], "override seed");
    train->add_option("--epochs", ov["stage.epochs"], "override epoch count");
    train->add_option("--ckpt-in", ov["stage.ckpt_in"], "override input checkpoint");
    train->add_option("--ckpt-out", ov["stage.ckpt_out"], "override output checkpoint");
    train->add_option("--resume", ov["stage.resume"], "resume from checkpoint");
    train->add_option("--manifest", ov["stage.train_manifest"], "override training manifest");

    auto* sep = app.add_subcommand("separate", "separate every mixture in a manifest");
    std::string sep_ckpt, sep_manifest, sep_out = "estimates", sep_tracking = "none";
    uint64_t sep_kseed = 0;
    sep->add_option("--ckpt", sep_ckpt, "model checkpoint")->required();
    sep->add_option("--manifest", sep_manifest, "dataset manifest")->required();
    sep->add_option("--out", sep_out, "output directory");
    sep->add_option("--tracking", sep_tracking, "none | kmeans | optimal");
    sep->add_option("--kmeans-seed", sep_kseed, "k-means seed");

    auto* ev = app.add_subcommand("eval", "score estimates against a manifest");
    std::string ev_manifest, ev_est, ev_report = "report.csv", ev_hist, ev_thr;
    double ev_bin = 1.0, ev_lo = -5.0, ev_hi = 25.0;
    ev->add_option("--manifest", ev_manifest, "dataset manifest")->required();
    ev->add_option("--estimates", ev_est, "directory with <id>.spk1.wav / <id>.spk2.wav")
        ->required();
    ev->add_option("--out", ev_report, "report CSV path");
    ev->add_option("--hist", ev_hist, "histogram CSV path");
    ev->add_option("--hsr-thresholds", ev_thr, "comma-separated dB thresholds");
    ev->add_option("--hist-bin-width", ev_bin, "histogram bin width, dB");
    ev->add_option("--hist-lo", ev_lo, "histogram lower edge, dB");
    ev->add_option("--hist-hi", ev_hi, "histogram upper edge, dB");

    auto* bench = app.add_subcommand("bench-cluster-loss", "time the clustering losses");
    std::string b_out = "bench.csv", b_k = "1000,2000,4000";
    long b_dim = 40;
    int b_rep = 5;
    uint64_t b_seed = 7;
    bench->add_option("--out", b_out, "output CSV path");
    bench->add_option("--k", b_k, "comma-separated frame counts");
    bench->add_option("--dim", b_dim, "embedding dimension");
    bench->add_option("--repeats", b_rep, "repeats per measurement (median)");
    bench->add_option("--seed", b_seed, "rng seed");

    try {
        app.parse(argc, argv);
        if (*synth)
            return cmd_synth(synth_out, synth_count, synth_seed, synth_rate, synth_dur, snr_lo,
                             snr_hi);
        if (*train) return cmd_train(train_config, ov);
        if (*sep) return cmd_separate(sep_ckpt, sep_manifest, sep_out, sep_tracking, sep_kseed);
        if (*ev)
            return cmd_eval(ev_manifest, ev_est, ev_report, ev_hist, ev_thr, ev_bin, ev_lo, ev_hi);
        if (*bench) return cmd_bench(b_out, b_k, b_dim, b_rep, b_seed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParamError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const StructuralError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const DegenerateInputError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
