#include "pitsep/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "pitsep/checkpoint.hpp"
#include "pitsep/wav_io.hpp"

namespace pitsep {

namespace {

uint64_t epoch_seed(uint64_t seed, long epoch) {
    uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(epoch + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<MixtureExample> load_all(const std::string& manifest_path) {
    auto entries = read_manifest(manifest_path);
    std::vector<MixtureExample> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(load_manifest_example(e));
    if (out.empty()) throw ConfigError("train: manifest is empty: " + manifest_path);
    return out;
}

MixtureExample crop_segment(const MixtureExample& ex, Eigen::Index seg, std::mt19937_64& rng) {
    const Eigen::Index len = ex.mixture.size();
    if (len <= seg) return ex;
    std::uniform_int_distribution<Eigen::Index> u(0, len - seg);
    const Eigen::Index off = u(rng);
    MixtureExample out;
    out.id = ex.id;
    out.mix_snr_db = ex.mix_snr_db;
    out.mixture.sample_rate = ex.mixture.sample_rate;
    out.mixture.samples.assign(ex.mixture.samples.begin() + off,
                               ex.mixture.samples.begin() + off + seg);
    for (const auto& s : ex.sources) {
        Waveform w;
        w.sample_rate = s.sample_rate;
        w.samples.assign(s.samples.begin() + off, s.samples.begin() + off + seg);
        out.sources.push_back(std::move(w));
    }
    return out;
}

// Normalized views used everywhere SI-SNR training is involved.
struct NormalizedExample {
    Waveform mixture;
    std::vector<Waveform> sources;
    float std_dev = 1.0f;
};

NormalizedExample normalize_example(const MixtureExample& ex) {
    NormalizedExample out;
    out.std_dev = waveform_std(ex.mixture);
    if (!(out.std_dev > 0))
        throw DegenerateInputError("train: zero-variance mixture in example " + ex.id);
    out.mixture = ex.mixture;
    for (auto& v : out.mixture.samples) v /= out.std_dev;
    out.sources = variance_normalize(ex.sources, ex.mixture);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint metadata

void put_meta(Checkpoint& ck, const StageConfig& cfg, ModelKind kind) {
    ck.put_scalar("meta.kind", static_cast<double>(static_cast<int>(kind)));
    ck.put_scalar("meta.sample_rate", cfg.sample_rate);
    ck.put_scalar("meta.frame_length", cfg.frame_length);
    ck.put_scalar("meta.stride", cfg.stride);
    ck.put_scalar("meta.filters", cfg.filters);
    ck.put_scalar("meta.sep_bottleneck", cfg.separator.bottleneck);
    ck.put_scalar("meta.sep_hidden", cfg.separator.hidden);
    ck.put_scalar("meta.sep_kernel", cfg.separator.kernel);
    ck.put_scalar("meta.sep_dilations", cfg.separator.dilations_per_repeat);
    ck.put_scalar("meta.sep_repeats", cfg.separator.repeats);
    ck.put_scalar("meta.sep_film_cond", cfg.separator.film_cond_dim);
    ck.put_scalar("meta.cl_width", cfg.cluster.width);
    ck.put_scalar("meta.cl_bottleneck", cfg.cluster.bottleneck);
    ck.put_scalar("meta.cl_hidden", cfg.cluster.hidden);
    ck.put_scalar("meta.cl_dilations", cfg.cluster.dilations_per_repeat);
    ck.put_scalar("meta.cl_repeats", cfg.cluster.repeats);
    ck.put_scalar("meta.cl_embed", cfg.cluster.embed_dim);
    ck.put_scalar("meta.feat_embed", cfg.features.embed_dim);
    ck.put_scalar("meta.feat_width", cfg.features.width);
    ck.put_scalar("meta.feat_seed", static_cast<double>(cfg.features.seed));
    ck.put_scalar("meta.stft_window", cfg.stft_sep.window_length);
    ck.put_scalar("meta.stft_hop", cfg.stft_sep.hop);
    ck.put_scalar("meta.stft_hidden", cfg.stft_sep.hidden);
}

StageConfig meta_to_config(const Checkpoint& ck) {
    StageConfig cfg;
    cfg.sample_rate = static_cast<int>(ck.get_scalar("meta.sample_rate"));
    cfg.frame_length = static_cast<long>(ck.get_scalar("meta.frame_length"));
    cfg.stride = static_cast<long>(ck.get_scalar("meta.stride"));
    cfg.filters = static_cast<long>(ck.get_scalar("meta.filters"));
    cfg.separator.filters = cfg.filters;
    cfg.separator.bottleneck = static_cast<long>(ck.get_scalar("meta.sep_bottleneck"));
    cfg.separator.hidden = static_cast<long>(ck.get_scalar("meta.sep_hidden"));
    cfg.separator.kernel = static_cast<long>(ck.get_scalar("meta.sep_kernel"));
    cfg.separator.dilations_per_repeat = static_cast<long>(ck.get_scalar("meta.sep_dilations"));
    cfg.separator.repeats = static_cast<long>(ck.get_scalar("meta.sep_repeats"));
    cfg.separator.film_cond_dim = static_cast<long>(ck.get_scalar("meta.sep_film_cond"));
    cfg.cluster.filters = cfg.filters;
    cfg.cluster.width = static_cast<long>(ck.get_scalar("meta.cl_width"));
    cfg.cluster.bottleneck = static_cast<long>(ck.get_scalar("meta.cl_bottleneck"));
    cfg.cluster.hidden = static_cast<long>(ck.get_scalar("meta.cl_hidden"));
    cfg.cluster.dilations_per_repeat = static_cast<long>(ck.get_scalar("meta.cl_dilations"));
    cfg.cluster.repeats = static_cast<long>(ck.get_scalar("meta.cl_repeats"));
    cfg.cluster.embed_dim = static_cast<long>(ck.get_scalar("meta.cl_embed"));
    cfg.features.embed_dim = static_cast<long>(ck.get_scalar("meta.feat_embed"));
    cfg.features.width = static_cast<long>(ck.get_scalar("meta.feat_width"));
    cfg.features.seed = static_cast<uint64_t>(ck.get_scalar("meta.feat_seed"));
    cfg.stft_sep.window_length = static_cast<long>(ck.get_scalar("meta.stft_window"));
    cfg.stft_sep.hop = static_cast<long>(ck.get_scalar("meta.stft_hop"));
    cfg.stft_sep.hidden = static_cast<long>(ck.get_scalar("meta.stft_hidden"));
    return cfg;
}

struct SchedState {
    LrSchedule sched;
    long epoch = 0;
};

void put_sched(Checkpoint& ck, const SchedState& st) {
    ck.put_scalar("sched.lr", st.sched.lr);
    ck.put_scalar("sched.best_loss", st.sched.best_loss);
    ck.put_scalar("sched.bad_epochs", st.sched.epochs_without_improvement);
    ck.put_scalar("sched.patience", st.sched.patience);
    ck.put_scalar("train.epoch", static_cast<double>(st.epoch));
}

SchedState load_sched(const Checkpoint& ck) {
    SchedState st;
    st.sched.lr = ck.get_scalar("sched.lr");
    st.sched.best_loss = ck.get_scalar("sched.best_loss");
    st.sched.epochs_without_improvement = static_cast<int>(ck.get_scalar("sched.bad_epochs"));
    st.sched.patience = static_cast<int>(ck.get_scalar("sched.patience"));
    st.epoch = static_cast<long>(ck.get_scalar("train.epoch"));
    return st;
}

// Generic epoch loop shared by all stages. `train_step` runs forward/backward
// and the optimizer on one example; `valid_loss` evaluates one example.
template <class TrainStep, class ValidLoss, class SaveFn>
TrainResult run_epochs(const StageConfig& cfg, std::vector<MixtureExample>& train_set,
                       std::vector<MixtureExample>& valid_set, SchedState& st,
                       TrainStep&& train_step, ValidLoss&& valid_loss, SaveFn&& save) {
    TrainResult res;
    const Eigen::Index seg =
        static_cast<Eigen::Index>(std::llround(cfg.segment_seconds * cfg.sample_rate));
    long step = 0;
    std::ofstream log;
    if (!cfg.log_path.empty()) log.open(cfg.log_path, std::ios::app);
    auto emit = [&](const std::string& line) {
        res.log_lines.push_back(line);
        if (log) log << line << "\n";
    };
    for (long epoch = st.epoch; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 rng(epoch_seed(cfg.seed, epoch));
        std::vector<std::size_t> order(train_set.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        long counted = 0;
        for (std::size_t idx : order) {
            MixtureExample ex = crop_segment(train_set[idx], seg, rng);
            const double loss = train_step(ex, st.sched.lr, step);
            // NaN is the sentinel for "example skipped" (single-speaker labels).
            if (!std::isfinite(loss) && !std::isnan(loss))
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    " step " + std::to_string(step));
            if (!std::isnan(loss)) {
                epoch_loss += loss;
                ++counted;
            }
            ++step;
        }
        double vloss = 0.0;
        {
            std::mt19937_64 vrng(epoch_seed(cfg.seed ^ 0xabcdULL, 0));
            long vcount = 0;
            for (auto& ex : valid_set) {
                MixtureExample c = crop_segment(ex, seg, vrng);
                vloss += valid_loss(c);
                ++vcount;
            }
            vloss /= std::max(1L, vcount);
        }
        const double lr_after = st.sched.update(vloss);
        st.epoch = epoch + 1;
        char buf[256];
        std::snprintf(buf, sizeof(buf), "epoch=%ld step=%ld train_loss=%.6f valid_loss=%.6f lr=%g",
                      epoch, step, counted ? epoch_loss / counted : 0.0, vloss, lr_after);
        emit(buf);
        res.final_valid_loss = vloss;
    }
    save(st);
    res.ckpt_path = cfg.ckpt_out;
    return res;
}

void write_resolved_config(const StageConfig& cfg) {
    if (cfg.ckpt_out.empty()) return;
    std::ofstream out(cfg.ckpt_out + ".config");
    if (out) out << cfg.resolved().dump();
}

}  // namespace

// ---------------------------------------------------------------------------
// StageConfig <-> ConfigFile

StageConfig StageConfig::from_config(const ConfigFile& c) {
    StageConfig s;
    s.name = c.get_str("stage.name", "stage");
    s.loss_mode = c.get_str("stage.loss", "upit");
    s.train_manifest = c.get_str("stage.train_manifest", "");
    s.valid_manifest = c.get_str("stage.valid_manifest", "");
    s.ckpt_in = c.get_str("stage.ckpt_in", "");
    s.ckpt_out = c.get_str("stage.ckpt_out", "");
    s.resume = c.get_str("stage.resume", "");
    s.log_path = c.get_str("stage.log", "");
    s.epochs = c.get_long("stage.epochs", 10);
    s.seed = static_cast<uint64_t>(c.get_long("stage.seed", 1));
    s.lr = c.get_double("stage.lr", 1e-3);
    s.segment_seconds = c.get_double("stage.segment_seconds", 4.0);
    s.sample_rate = static_cast<int>(c.get_long("stage.sample_rate", 8000));
    s.frame_length = c.get_long("model.frame_length", s.sample_rate == 16000 ? 32 : 16);
    s.stride = c.get_long("model.stride", s.frame_length / 2);
    s.filters = c.get_long("model.filters", 512);
    s.separator.filters = s.filters;
    s.separator.bottleneck = c.get_long("model.bottleneck", 64);
    s.separator.hidden = c.get_long("model.hidden", 128);
    s.separator.kernel = c.get_long("model.kernel", 3);
    s.separator.dilations_per_repeat = c.get_long("model.dilations", 4);
    s.separator.repeats = c.get_long("model.repeats", 2);
    s.cluster.filters = s.filters;
    s.cluster.width = c.get_long("cluster.width", 512);
    s.cluster.bottleneck = c.get_long("cluster.bottleneck", 64);
    s.cluster.hidden = c.get_long("cluster.hidden", 128);
    s.cluster.dilations_per_repeat = c.get_long("cluster.dilations", 4);
    s.cluster.repeats = c.get_long("cluster.repeats", 1);
    s.cluster.embed_dim = c.get_long("cluster.embed_dim", 40);
    s.features.embed_dim = c.get_long("features.embed_dim", 256);
    s.features.width = c.get_long("features.width", 64);
    s.features.seed = static_cast<uint64_t>(c.get_long("features.seed", 1234));
    s.stft_sep.window_length = c.get_long("stft.window_length", s.sample_rate == 16000 ? 512 : 256);
    s.stft_sep.hop = c.get_long("stft.hop", s.stft_sep.window_length / 4);
    s.stft_sep.hidden = c.get_long("stft.hidden", 64);
    s.pase_lambda = c.get_double("stage.pase_lambda", 0.5);
    s.pairwise_baseline = c.get_long("stage.pairwise_baseline", 0) != 0;
    s.finetune_features = c.get_long("stage.finetune_features", 0) != 0;
    return s;
}

ConfigFile StageConfig::resolved() const {
    ConfigFile c;
    c.set("stage.name", name);
    c.set("stage.loss", loss_mode);
    c.set("stage.train_manifest", train_manifest);
    c.set("stage.valid_manifest", valid_manifest);
    c.set("stage.ckpt_in", ckpt_in);
    c.set("stage.ckpt_out", ckpt_out);
    c.set("stage.resume", resume);
    c.set("stage.epochs", std::to_string(epochs));
    c.set("stage.seed", std::to_string(seed));
    c.set("stage.lr", std::to_string(lr));
    c.set("stage.segment_seconds", std::to_string(segment_seconds));
    c.set("stage.sample_rate", std::to_string(sample_rate));
    c.set("stage.pase_lambda", std::to_string(pase_lambda));
    c.set("stage.pairwise_baseline", pairwise_baseline ? "1" : "0");
    c.set("stage.finetune_features", finetune_features ? "1" : "0");
    c.set("model.frame_length", std::to_string(frame_length));
    c.set("model.stride", std::to_string(stride));
    c.set("model.filters", std::to_string(filters));
    c.set("model.bottleneck", std::to_string(separator.bottleneck));
    c.set("model.hidden", std::to_string(separator.hidden));
    c.set("model.kernel", std::to_string(separator.kernel));
    c.set("model.dilations", std::to_string(separator.dilations_per_repeat));
    c.set("model.repeats", std::to_string(separator.repeats));
    c.set("cluster.width", std::to_string(cluster.width));
    c.set("cluster.bottleneck", std::to_string(cluster.bottleneck));
    c.set("cluster.hidden", std::to_string(cluster.hidden));
    c.set("cluster.dilations", std::to_string(cluster.dilations_per_repeat));
    c.set("cluster.repeats", std::to_string(cluster.repeats));
    c.set("cluster.embed_dim", std::to_string(cluster.embed_dim));
    c.set("features.embed_dim", std::to_string(features.embed_dim));
    c.set("features.width", std::to_string(features.width));
    c.set("features.seed", std::to_string(features.seed));
    c.set("stft.window_length", std::to_string(stft_sep.window_length));
    c.set("stft.hop", std::to_string(stft_sep.hop));
    c.set("stft.hidden", std::to_string(stft_sep.hidden));
    return c;
}

// ---------------------------------------------------------------------------
// Stage implementations

namespace {

TrainResult run_encdec_stage(const StageConfig& cfg) {
    auto train_set = load_all(cfg.train_manifest);
    auto valid_set =
        cfg.valid_manifest.empty() ? train_set : load_all(cfg.valid_manifest);
    std::mt19937_64 rng(cfg.seed);
    EncoderDecoder ed(cfg.frame_length, cfg.stride, cfg.filters, rng);
    std::vector<ParamRef<float>> params;
    ed.collect_params(params);
    AdamState<float> adam;
    adam.init(params);
    SchedState st;
    st.sched.lr = cfg.lr;
    if (!cfg.resume.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume);
        load_params(ck, params);
        load_adam(ck, params, adam);
        st = load_sched(ck);
    }
    auto loss_of = [&](const MixtureExample& ex, bool backprop, double lr) {
        NormalizedExample nx = normalize_example(ex);
        IdealTargetsCache<float> cache;
        auto targets = ideal_latent_targets(ed, nx.mixture, nx.sources, &cache);
        const Eigen::Index out_len = nx.mixture.size();
        double loss = 0.0;
        std::array<std::vector<float>, 2> ests;
        for (int c = 0; c < 2; ++c) {
            ests[c] = ed.decode(targets[c], out_len);
            loss -= 0.5 * si_snr(nx.sources[c].samples, ests[c]);
        }
        if (backprop) {
            zero_grads(params);
            std::array<Mat<float>, 2> dS;
            for (int c = 0; c < 2; ++c) {
                auto dwave = si_snr_backward(nx.sources[c].samples, ests[c], -0.5);
                dS[c] = ed.decode_backward(dwave, targets[c]);
            }
            ideal_latent_targets_backward(ed, cache, dS);
            adam_step(params, adam, lr);
        }
        return loss;
    };
    auto save = [&](const SchedState& s) {
        Checkpoint ck;
        ck.spec_hash = ed.spec().hash();
        put_meta(ck, cfg, ModelKind::EncDec);
        put_params(ck, params);
        put_adam(ck, params, adam);
        put_sched(ck, s);
        save_checkpoint(cfg.ckpt_out, ck);
    };
    return run_epochs(
        cfg, train_set, valid_set, st,
        [&](const MixtureExample& ex, double lr, long) { return loss_of(ex, true, lr); },
        [&](const MixtureExample& ex) { return loss_of(ex, false, 0.0); }, save);
}

// uPIT / tPIT-time / tPIT-latent / uPIT+PASE separator training.
TrainResult run_separator_stage(const StageConfig& cfg) {
    const bool latent_mode = cfg.loss_mode == "tpit-latent";
    const bool time_mode = cfg.loss_mode == "tpit-time";
    const bool pase_mode = cfg.loss_mode == "upit-pase";
    if (pase_mode && cfg.sample_rate != 16000)
        throw ConfigError("upit-pase requires sample_rate=16000");
    auto train_set = load_all(cfg.train_manifest);
    auto valid_set = cfg.valid_manifest.empty() ? train_set : load_all(cfg.valid_manifest);

    std::mt19937_64 rng(cfg.seed);
    StageConfig model_cfg = cfg;
    std::unique_ptr<Checkpoint> in_ck;
    if (latent_mode) {
        if (cfg.ckpt_in.empty())
            throw ConfigError(
                "tpit-latent requires ckpt_in: a frozen encoder/decoder checkpoint from the "
                "encdec stage");
        in_ck = std::make_unique<Checkpoint>(load_checkpoint(cfg.ckpt_in));
        if (static_cast<int>(in_ck->get_scalar("meta.kind")) != static_cast<int>(ModelKind::EncDec))
            throw ConfigError("tpit-latent: ckpt_in is not an encoder/decoder checkpoint");
        StageConfig ed_cfg = meta_to_config(*in_ck);
        model_cfg.frame_length = ed_cfg.frame_length;
        model_cfg.stride = ed_cfg.stride;
        model_cfg.filters = ed_cfg.filters;
        model_cfg.separator.filters = ed_cfg.filters;
    }
    EncoderDecoder ed(model_cfg.frame_length, model_cfg.stride, model_cfg.filters, rng);
    Separator sep(model_cfg.separator, rng);
    FeatureEncoder feat(cfg.features);

    std::vector<ParamRef<float>> enc_params;
    ed.collect_params(enc_params);
    if (latent_mode) {
        // Frozen encoder/decoder loaded from the pretraining stage.
        load_params(*in_ck, enc_params);
    }
    std::vector<ParamRef<float>> params;
    if (!latent_mode) ed.collect_params(params);
    sep.collect_params(params);
    AdamState<float> adam;
    adam.init(params);
    SchedState st;
    st.sched.lr = cfg.lr;
    if (!cfg.resume.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume);
        load_params(ck, params);
        if (latent_mode) load_params(ck, enc_params);
        load_adam(ck, params, adam);
        st = load_sched(ck);
    }

    auto loss_of = [&](const MixtureExample& ex, bool backprop, double lr) {
        NormalizedExample nx = normalize_example(ex);
        EncodeCache<float> ecache;
        Mat<float> E = ed.encode(nx.mixture, backprop ? &ecache : nullptr);
        auto shat = sep.separate(E, nullptr, backprop);
        const Eigen::Index out_len = nx.mixture.size();
        if (backprop) zero_grads(params);
        double loss = 0.0;
        if (latent_mode) {
            auto targets = ideal_latent_targets(ed, nx.mixture, nx.sources);
            LossReport r = tpit_latent_loss(shat, targets);
            loss = r.loss;
            if (backprop) {
                auto dshat = tpit_latent_loss_backward(shat, targets, r);
                sep.separate_backward(dshat);
                adam_step(params, adam, lr);
            }
        } else if (time_mode) {
            std::array<std::vector<float>, 2> refs = {nx.sources[0].samples, nx.sources[1].samples};
            auto res = tpit_time_loss(shat, refs, ed);
            loss = res.report.loss;
            if (backprop) {
                auto dshat = tpit_time_loss_backward(res, refs, ed, shat);
                Mat<float> dE = sep.separate_backward(dshat);
                ed.encode_backward(dE, ecache);
                adam_step(params, adam, lr);
            }
        } else {
            std::array<std::vector<float>, 2> ests, refs = {nx.sources[0].samples,
                                                            nx.sources[1].samples};
            for (int c = 0; c < 2; ++c) ests[c] = ed.decode(shat[c], out_len);
            LossReport r = pase_mode
                               ? upit_pase_loss(ests, refs, feat, cfg.pase_lambda, cfg.sample_rate)
                               : upit_loss(ests, refs);
            loss = r.loss;
            if (backprop) {
                auto dwaves =
                    pase_mode ? upit_pase_loss_backward(ests, refs, feat, cfg.pase_lambda,
                                                        cfg.sample_rate, r)
                              : upit_loss_backward(ests, refs, r);
                std::array<Mat<float>, 2> dshat;
                for (int c = 0; c < 2; ++c) dshat[c] = ed.decode_backward(dwaves[c], shat[c]);
                Mat<float> dE = sep.separate_backward(dshat);
                ed.encode_backward(dE, ecache);
                adam_step(params, adam, lr);
            }
        }
        return loss;
    };
    auto save = [&](const SchedState& s) {
        Checkpoint ck;
        ck.spec_hash = sep.spec().hash();
        put_meta(ck, model_cfg, ModelKind::Separator);
        ck.put_scalar("meta.latent_mode", latent_mode ? 1.0 : 0.0);
        std::vector<ParamRef<float>> all = params;
        if (latent_mode) {
            for (auto& p : enc_params) all.push_back(p);
        }
        put_params(ck, all);
        put_adam(ck, params, adam);
        put_sched(ck, s);
        save_checkpoint(cfg.ckpt_out, ck);
    };
    return run_epochs(
        cfg, train_set, valid_set, st,
        [&](const MixtureExample& ex, double lr, long) { return loss_of(ex, true, lr); },
        [&](const MixtureExample& ex) { return loss_of(ex, false, 0.0); }, save);
}

TrainResult run_stft_stage(const StageConfig& cfg) {
    auto train_set = load_all(cfg.train_manifest);
    auto valid_set = cfg.valid_manifest.empty() ? train_set : load_all(cfg.valid_manifest);
    std::mt19937_64 rng(cfg.seed);
    StftSeparator sep(cfg.stft_sep, rng);
    std::vector<ParamRef<float>> params;
    sep.collect_params(params);
    AdamState<float> adam;
    adam.init(params);
    SchedState st;
    st.sched.lr = cfg.lr;
    if (!cfg.resume.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume);
        load_params(ck, params);
        load_adam(ck, params, adam);
        st = load_sched(ck);
    }
    const Eigen::Index wl = cfg.stft_sep.window_length, hop = cfg.stft_sep.hop;
    auto loss_of = [&](const MixtureExample& ex, bool backprop, double lr) {
        NormalizedExample nx = normalize_example(ex);
        Spectrogram mix_spec = stft(nx.mixture, wl, hop);
        std::array<Spectrogram, 2> ref_specs;
        for (int c = 0; c < 2; ++c) ref_specs[c] = stft(nx.sources[c], wl, hop);
        auto masks = sep.predict_masks(mix_spec, backprop);
        auto est_specs = StftSeparator::apply_masks(mix_spec, masks);
        auto labels = tpit_stft_match(est_specs, ref_specs);
        // Reorder STFT frames into speaker-consistent streams.
        std::array<Spectrogram, 2> ordered = est_specs;
        for (std::size_t k = 0; k < labels.size(); ++k)
            if (labels[k] == 1) {
                ordered[0].bins.row(k) = est_specs[1].bins.row(k);
                ordered[1].bins.row(k) = est_specs[0].bins.row(k);
            }
        double loss = 0.0;
        std::array<Waveform, 2> recon;
        for (int c = 0; c < 2; ++c) {
            recon[c] = istft(ordered[c], cfg.sample_rate);
            loss -= 0.5 * snr(nx.sources[c].samples, recon[c].samples);
        }
        if (backprop) {
            zero_grads(params);
            std::array<Mat<std::complex<float>>, 2> dordered;
            for (int c = 0; c < 2; ++c) {
                auto dwave = snr_backward(nx.sources[c].samples, recon[c].samples, -0.5);
                dordered[c] = istft_adjoint(dwave, mix_spec.bins.rows(), wl, hop);
            }
            // Undo the reordering (involution), then d est -> d mask.
            std::array<Mat<std::complex<float>>, 2> dest = dordered;
            for (std::size_t k = 0; k < labels.size(); ++k)
                if (labels[k] == 1) {
                    dest[0].row(k) = dordered[1].row(k);
                    dest[1].row(k) = dordered[0].row(k);
                }
            std::array<Mat<float>, 2> dmasks;
            for (int c = 0; c < 2; ++c) {
                dmasks[c].resize(masks[c].rows(), masks[c].cols());
                for (Eigen::Index k = 0; k < mix_spec.bins.rows(); ++k)
                    for (Eigen::Index f = 0; f < mix_spec.bins.cols(); ++f)
                        dmasks[c](f, k) = dest[c](k, f).real() * mix_spec.bins(k, f).real() +
                                          dest[c](k, f).imag() * mix_spec.bins(k, f).imag();
            }
            sep.backward(dmasks);
            adam_step(params, adam, lr);
        }
        return loss;
    };
    auto save = [&](const SchedState& s) {
        Checkpoint ck;
        ck.spec_hash = sep.spec().hash();
        put_meta(ck, cfg, ModelKind::StftSep);
        put_params(ck, params);
        put_adam(ck, params, adam);
        put_sched(ck, s);
        save_checkpoint(cfg.ckpt_out, ck);
    };
    return run_epochs(
        cfg, train_set, valid_set, st,
        [&](const MixtureExample& ex, double lr, long) { return loss_of(ex, true, lr); },
        [&](const MixtureExample& ex) { return loss_of(ex, false, 0.0); }, save);
}

TrainResult run_clustering_stage(const StageConfig& cfg) {
    if (cfg.ckpt_in.empty())
        throw ConfigError("clustering requires ckpt_in: a trained separator checkpoint");
    Checkpoint in_ck = load_checkpoint(cfg.ckpt_in);
    if (static_cast<int>(in_ck.get_scalar("meta.kind")) != static_cast<int>(ModelKind::Separator))
        throw ConfigError("clustering: ckpt_in is not a separator checkpoint");
    StageConfig sep_cfg = meta_to_config(in_ck);

    auto train_set = load_all(cfg.train_manifest);
    auto valid_set = cfg.valid_manifest.empty() ? train_set : load_all(cfg.valid_manifest);

    std::mt19937_64 rng(cfg.seed);
    EncoderDecoder ed(sep_cfg.frame_length, sep_cfg.stride, sep_cfg.filters, rng);
    Separator sep(sep_cfg.separator, rng);
    StageConfig model_cfg = cfg;
    model_cfg.frame_length = sep_cfg.frame_length;
    model_cfg.stride = sep_cfg.stride;
    model_cfg.filters = sep_cfg.filters;
    model_cfg.separator = sep_cfg.separator;
    model_cfg.cluster.filters = sep_cfg.filters;
    ClusterNet cl(model_cfg.cluster, rng);

    std::vector<ParamRef<float>> frozen;
    ed.collect_params(frozen);
    sep.collect_params(frozen);
    load_params(in_ck, frozen);

    Mat<float> ge2e_w(1, 1), ge2e_b(1, 1), dge2e_w(1, 1), dge2e_b(1, 1);
    ge2e_w(0, 0) = 10.0f;
    ge2e_b(0, 0) = -5.0f;
    std::vector<ParamRef<float>> params;
    cl.collect_params(params);
    params.push_back({"ge2e.w", &ge2e_w, &dge2e_w});
    params.push_back({"ge2e.b", &ge2e_b, &dge2e_b});
    AdamState<float> adam;
    adam.init(params);
    SchedState st;
    st.sched.lr = cfg.lr;
    if (!cfg.resume.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume);
        load_params(ck, params);
        load_adam(ck, params, adam);
        cl.load_state(ck);
        st = load_sched(ck);
    }

    auto loss_of = [&](const MixtureExample& ex, bool backprop, double lr) {
        NormalizedExample nx = normalize_example(ex);
        Mat<float> E = ed.encode(nx.mixture);
        auto shat = sep.separate(E);
        auto targets = ideal_latent_targets(ed, nx.mixture, nx.sources);
        auto labels = tpit_latent_loss(shat, targets).frame_perms;
        bool has[2] = {false, false};
        for (int l : labels) has[l] = true;
        if (!has[0] || !has[1]) return std::numeric_limits<double>::quiet_NaN();  // skipped
        Mat<float> emb = cl.embed_frames(E, shat[0], shat[1], backprop);
        double loss;
        if (cfg.pairwise_baseline) {
            loss = pairwise_similarity_loss(emb, labels).loss;
            if (backprop) {
                zero_grads(params);
                cl.backward(pairwise_similarity_loss_backward(emb, labels));
                adam_step(params, adam, lr);
            }
        } else {
            Ge2eParams p{ge2e_w(0, 0), ge2e_b(0, 0)};
            loss = ge2e_loss(emb, labels, p).loss;
            if (backprop) {
                zero_grads(params);
                Ge2eGrads pg;
                Mat<float> demb = ge2e_loss_backward(emb, labels, p, pg);
                dge2e_w(0, 0) = static_cast<float>(pg.dw);
                dge2e_b(0, 0) = static_cast<float>(pg.db);
                cl.backward(demb);
                adam_step(params, adam, lr);
                ge2e_w(0, 0) = std::max(ge2e_w(0, 0), float(Ge2eParams::kMinW));
            }
        }
        return loss;
    };
    auto save = [&](const SchedState& s) {
        Checkpoint ck;
        ck.spec_hash = cl.spec().hash() ^ sep.spec().hash();
        put_meta(ck, model_cfg, ModelKind::Clustering);
        std::vector<ParamRef<float>> all = params;
        for (auto& p : frozen) all.push_back(p);
        put_params(ck, all);
        put_adam(ck, params, adam);
        cl.collect_state(ck);
        put_sched(ck, s);
        save_checkpoint(cfg.ckpt_out, ck);
    };
    auto train_step = [&](const MixtureExample& ex, double lr, long) { return loss_of(ex, true, lr); };
    auto valid_loss = [&](const MixtureExample& ex) {
        const double v = loss_of(ex, false, 0.0);
        return std::isnan(v) ? 0.0 : v;
    };
    return run_epochs(cfg, train_set, valid_set, st, train_step, valid_loss, save);
}

TrainResult run_cascade_stage(const StageConfig& cfg) {
    if (cfg.ckpt_in.empty())
        throw ConfigError("cascade-stage2 requires ckpt_in: the stage-one separator checkpoint");
    if (cfg.sample_rate != 16000) throw ConfigError("cascade-stage2 requires sample_rate=16000");
    Checkpoint in_ck = load_checkpoint(cfg.ckpt_in);
    if (static_cast<int>(in_ck.get_scalar("meta.kind")) != static_cast<int>(ModelKind::Separator))
        throw ConfigError("cascade-stage2: ckpt_in is not a separator checkpoint");
    StageConfig s1_cfg = meta_to_config(in_ck);

    auto train_set = load_all(cfg.train_manifest);
    auto valid_set = cfg.valid_manifest.empty() ? train_set : load_all(cfg.valid_manifest);

    std::mt19937_64 rng(cfg.seed);
    EncoderDecoder ed1(s1_cfg.frame_length, s1_cfg.stride, s1_cfg.filters, rng);
    Separator sep1(s1_cfg.separator, rng);
    std::vector<ParamRef<float>> s1_params;
    ed1.collect_params(s1_params);
    sep1.collect_params(s1_params);
    {
        // Stage-one tensors saved under their own names.
        std::vector<ParamRef<float>> tmp = s1_params;
        load_params(in_ck, tmp);
    }
    FeatureEncoder feat(cfg.features);
    StageConfig model_cfg = cfg;
    model_cfg.separator.film_cond_dim = 2 * cfg.features.embed_dim;
    EncoderDecoder ed2(cfg.frame_length, cfg.stride, cfg.filters, rng);
    Separator sep2(model_cfg.separator, rng);

    std::vector<ParamRef<float>> params;
    ed2.collect_params(params);
    sep2.collect_params(params);
    std::vector<ParamRef<float>> feat_params;
    feat.collect_params(feat_params);
    if (cfg.finetune_features)
        for (auto& p : feat_params) params.push_back(p);
    AdamState<float> adam;
    adam.init(params);
    SchedState st;
    st.sched.lr = cfg.lr;
    if (!cfg.resume.empty()) {
        Checkpoint ck = load_checkpoint(cfg.resume);
        load_params(ck, params);
        load_adam(ck, params, adam);
        st = load_sched(ck);
    }

    auto loss_of = [&](const MixtureExample& ex, bool backprop, double lr) {
        NormalizedExample nx = normalize_example(ex);
        const Eigen::Index out_len = nx.mixture.size();
        // Stage one: separate and find the best utterance permutation.
        Mat<float> E1 = ed1.encode(nx.mixture);
        auto s1 = sep1.separate(E1);
        std::array<std::vector<float>, 2> ests1, refs = {nx.sources[0].samples,
                                                         nx.sources[1].samples};
        for (int c = 0; c < 2; ++c) ests1[c] = ed1.decode(s1[c], out_len);
        LossReport upit = upit_loss(ests1, refs);
        const int p = upit.utterance_perm;
        // Conditioning from the stage-one separations.
        std::array<Mat<float>, 2> embs;
        for (int c = 0; c < 2; ++c)
            embs[c] = feat.embed(Waveform{ests1[c], cfg.sample_rate}, backprop && cfg.finetune_features);
        Mat<float> cond(2 * cfg.features.embed_dim, embs[0].cols());
        cond.topRows(cfg.features.embed_dim) = embs[0];
        cond.bottomRows(cfg.features.embed_dim) = embs[1];
        EncodeCache<float> ecache;
        Mat<float> E2 = ed2.encode(nx.mixture, backprop ? &ecache : nullptr);
        Mat<float> cond_up = upsample_nearest(cond, E2.cols());
        auto s2 = sep2.separate(E2, &cond_up, backprop);
        // Ground truth ordered by the stage-one permutation; no PIT here.
        double loss = 0.0;
        std::array<std::vector<float>, 2> ests2;
        for (int c = 0; c < 2; ++c) {
            ests2[c] = ed2.decode(s2[c], out_len);
            loss -= 0.5 * si_snr(refs[p == 0 ? c : 1 - c], ests2[c]);
        }
        if (backprop) {
            zero_grads(params);
            std::array<Mat<float>, 2> ds2;
            for (int c = 0; c < 2; ++c) {
                auto dwave = si_snr_backward(refs[p == 0 ? c : 1 - c], ests2[c], -0.5);
                ds2[c] = ed2.decode_backward(dwave, s2[c]);
            }
            Mat<float> dE2 = sep2.separate_backward(ds2);
            ed2.encode_backward(dE2, ecache);
            if (cfg.finetune_features) {
                Mat<float> dcond = upsample_nearest_adjoint(sep2.condition_grad(), cond.cols());
                for (int c = 0; c < 2; ++c) {
                    feat.embed(Waveform{ests1[c], cfg.sample_rate}, true);
                    feat.backward(c == 0 ? dcond.topRows(cfg.features.embed_dim)
                                         : dcond.bottomRows(cfg.features.embed_dim));
                }
            }
            adam_step(params, adam, lr);
        }
        return loss;
    };
    auto save = [&](const SchedState& s) {
        Checkpoint ck;
        ck.spec_hash = sep2.spec().hash();
        put_meta(ck, model_cfg, ModelKind::Separator);
        put_params(ck, params);
        if (!cfg.finetune_features) put_params(ck, feat_params);
        {
            std::vector<ParamRef<float>> prefixed;
            for (auto& p : s1_params) prefixed.push_back({"stage1." + p.name, p.value, p.grad});
            put_params(ck, prefixed);
        }
        // Stage-one geometry for inference-time rebuilding.
        ck.put_scalar("meta.s1_frame_length", s1_cfg.frame_length);
        ck.put_scalar("meta.s1_stride", s1_cfg.stride);
        ck.put_scalar("meta.s1_filters", s1_cfg.filters);
        ck.put_scalar("meta.s1_bottleneck", s1_cfg.separator.bottleneck);
        ck.put_scalar("meta.s1_hidden", s1_cfg.separator.hidden);
        ck.put_scalar("meta.s1_kernel", s1_cfg.separator.kernel);
        ck.put_scalar("meta.s1_dilations", s1_cfg.separator.dilations_per_repeat);
        ck.put_scalar("meta.s1_repeats", s1_cfg.separator.repeats);
        put_adam(ck, params, adam);
        put_sched(ck, s);
        save_checkpoint(cfg.ckpt_out, ck);
    };
    return run_epochs(
        cfg, train_set, valid_set, st,
        [&](const MixtureExample& ex, double lr, long) { return loss_of(ex, true, lr); },
        [&](const MixtureExample& ex) { return loss_of(ex, false, 0.0); }, save);
}

}  // namespace

TrainResult run_stage(const StageConfig& cfg) {
    if (cfg.ckpt_out.empty()) throw ConfigError("train: stage.ckpt_out is required");
    if (cfg.train_manifest.empty()) throw ConfigError("train: stage.train_manifest is required");
    write_resolved_config(cfg);
    if (cfg.loss_mode == "encdec") return run_encdec_stage(cfg);
    if (cfg.loss_mode == "upit" || cfg.loss_mode == "tpit-time" || cfg.loss_mode == "tpit-latent" ||
        cfg.loss_mode == "upit-pase")
        return run_separator_stage(cfg);
    if (cfg.loss_mode == "tpit-stft") return run_stft_stage(cfg);
    if (cfg.loss_mode == "clustering") return run_clustering_stage(cfg);
    if (cfg.loss_mode == "cascade-stage2") return run_cascade_stage(cfg);
    throw ConfigError("train: unknown loss mode '" + cfg.loss_mode + "'");
}

// ---------------------------------------------------------------------------
// Inference

SeparationModel load_separation_model(const std::string& ckpt_path) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    SeparationModel m;
    m.kind = static_cast<ModelKind>(static_cast<int>(ck.get_scalar("meta.kind")));
    StageConfig cfg = meta_to_config(ck);
    m.sample_rate = cfg.sample_rate;
    std::mt19937_64 rng(0);
    switch (m.kind) {
        case ModelKind::EncDec: {
            m.encdec = std::make_unique<EncoderDecoder>(cfg.frame_length, cfg.stride, cfg.filters,
                                                        rng);
            std::vector<ParamRef<float>> p;
            m.encdec->collect_params(p);
            load_params(ck, p);
            break;
        }
        case ModelKind::Separator: {
            m.encdec = std::make_unique<EncoderDecoder>(cfg.frame_length, cfg.stride, cfg.filters,
                                                        rng);
            m.separator = std::make_unique<Separator>(cfg.separator, rng);
            std::vector<ParamRef<float>> p;
            m.encdec->collect_params(p);
            m.separator->collect_params(p);
            load_params(ck, p);
            if (cfg.separator.film_cond_dim > 0) {
                // Cascaded model: stage-one separator plus feature encoder.
                m.features = std::make_unique<FeatureEncoder>(cfg.features);
                std::vector<ParamRef<float>> fp;
                m.features->collect_params(fp);
                load_params(ck, fp);
                StageConfig s1;
                s1.frame_length = static_cast<long>(ck.get_scalar("meta.s1_frame_length"));
                s1.stride = static_cast<long>(ck.get_scalar("meta.s1_stride"));
                s1.filters = static_cast<long>(ck.get_scalar("meta.s1_filters"));
                s1.separator.filters = s1.filters;
                s1.separator.bottleneck = static_cast<long>(ck.get_scalar("meta.s1_bottleneck"));
                s1.separator.hidden = static_cast<long>(ck.get_scalar("meta.s1_hidden"));
                s1.separator.kernel = static_cast<long>(ck.get_scalar("meta.s1_kernel"));
                s1.separator.dilations_per_repeat =
                    static_cast<long>(ck.get_scalar("meta.s1_dilations"));
                s1.separator.repeats = static_cast<long>(ck.get_scalar("meta.s1_repeats"));
                m.stage1_encdec =
                    std::make_unique<EncoderDecoder>(s1.frame_length, s1.stride, s1.filters, rng);
                m.stage1_separator = std::make_unique<Separator>(s1.separator, rng);
                std::vector<ParamRef<float>> sp, prefixed;
                m.stage1_encdec->collect_params(sp);
                m.stage1_separator->collect_params(sp);
                for (auto& pr : sp) prefixed.push_back({"stage1." + pr.name, pr.value, pr.grad});
                load_params(ck, prefixed);
            }
            break;
        }
        case ModelKind::Clustering: {
            m.encdec = std::make_unique<EncoderDecoder>(cfg.frame_length, cfg.stride, cfg.filters,
                                                        rng);
            m.separator = std::make_unique<Separator>(cfg.separator, rng);
            m.clusternet = std::make_unique<ClusterNet>(cfg.cluster, rng);
            std::vector<ParamRef<float>> p;
            m.encdec->collect_params(p);
            m.separator->collect_params(p);
            m.clusternet->collect_params(p);
            load_params(ck, p);
            m.clusternet->load_state(ck);
            break;
        }
        case ModelKind::StftSep: {
            m.stft_sep = std::make_unique<StftSeparator>(cfg.stft_sep, rng);
            std::vector<ParamRef<float>> p;
            m.stft_sep->collect_params(p);
            load_params(ck, p);
            break;
        }
        default:
            throw FormatError("checkpoint: unknown model kind");
    }
    return m;
}

std::array<Waveform, 2> separate_one(SeparationModel& m, const Waveform& mixture,
                                     const SeparateOptions& opts, const std::vector<Waveform>* refs,
                                     std::vector<int>* labels_out) {
    if (m.kind == ModelKind::EncDec)
        throw ConfigError("separate: an encoder/decoder checkpoint cannot separate on its own");
    const float sd = waveform_std(mixture);
    if (!(sd > 0)) throw DegenerateInputError("separate: zero-variance input");
    Waveform norm = mixture;
    for (auto& v : norm.samples) v /= sd;
    std::array<Waveform, 2> out;

    if (m.kind == ModelKind::StftSep) {
        if (opts.tracking != "none")
            throw ConfigError("separate: tracking is not available for STFT-mask checkpoints");
        Spectrogram spec = stft(norm, m.stft_sep->config().window_length, m.stft_sep->config().hop);
        auto est = m.stft_sep->separate(spec);
        for (int c = 0; c < 2; ++c) out[c] = istft(est[c], mixture.sample_rate);
    } else {
        EncoderDecoder& ed = *m.encdec;
        Mat<float> E = ed.encode(norm);
        std::array<Mat<float>, 2> shat;
        if (m.stage1_separator) {
            // Cascaded inference: stage one separates, features condition stage two.
            Mat<float> E1 = m.stage1_encdec->encode(norm);
            auto s1 = m.stage1_separator->separate(E1);
            const Eigen::Index len = norm.size();
            Mat<float> cond(2 * m.features->config().embed_dim, 0);
            std::array<Mat<float>, 2> embs;
            for (int c = 0; c < 2; ++c)
                embs[c] = m.features->embed(
                    Waveform{m.stage1_encdec->decode(s1[c], len), mixture.sample_rate});
            cond.resize(2 * m.features->config().embed_dim, embs[0].cols());
            cond.topRows(m.features->config().embed_dim) = embs[0];
            cond.bottomRows(m.features->config().embed_dim) = embs[1];
            Mat<float> cond_up = upsample_nearest(cond, E.cols());
            shat = m.separator->separate(E, &cond_up);
        } else {
            shat = m.separator->separate(E);
        }
        const Eigen::Index out_len = norm.size();
        if (opts.tracking == "none") {
            for (int c = 0; c < 2; ++c) {
                out[c].sample_rate = mixture.sample_rate;
                out[c].samples = ed.decode(shat[c], out_len);
            }
        } else if (opts.tracking == "optimal") {
            if (refs == nullptr || refs->size() != 2)
                throw ConfigError("separate: optimal tracking requires two reference signals");
            std::vector<Waveform> nrefs = variance_normalize(*refs, mixture);
            auto targets = ideal_latent_targets(ed, norm, nrefs);
            std::array<Mat<float>, 2> tgt = {targets[0], targets[1]};
            Mat<float> no_emb;
            out = track_and_reconstruct(ed, shat, no_emb, TrackingMode::Optimal, &tgt, out_len,
                                        mixture.sample_rate, opts.kmeans_seed, labels_out);
        } else if (opts.tracking == "kmeans") {
            if (!m.clusternet)
                throw ConfigError("separate: kmeans tracking requires a clustering checkpoint");
            Mat<float> emb = m.clusternet->embed_frames(E, shat[0], shat[1], false);
            out = track_and_reconstruct<float>(ed, shat, emb, TrackingMode::Kmeans, nullptr,
                                               out_len, mixture.sample_rate, opts.kmeans_seed,
                                               labels_out);
        } else {
            throw ConfigError("separate: unknown tracking mode '" + opts.tracking + "'");
        }
    }
    for (int c = 0; c < 2; ++c) {
        out[c].sample_rate = mixture.sample_rate;
        for (auto& v : out[c].samples) v *= sd;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate_manifest(const std::vector<ManifestEntry>& manifest,
                             const std::string& estimates_dir, const EvalOptions& opts) {
    namespace fs = std::filesystem;
    std::vector<std::string> missing;
    EvalReport report;
    std::vector<double> snri_scores;
    for (const auto& e : manifest) {
        const std::string p1 = (fs::path(estimates_dir) / (e.id + ".spk1.wav")).string();
        const std::string p2 = (fs::path(estimates_dir) / (e.id + ".spk2.wav")).string();
        if (!fs::exists(p1) || !fs::exists(p2)) {
            missing.push_back(e.id);
            continue;
        }
        if (!missing.empty()) continue;
        MixtureExample ex = load_manifest_example(e);
        std::array<Waveform, 2> ests = {load_wav(p1), load_wav(p2)};
        std::array<Waveform, 2> refs = {ex.sources[0], ex.sources[1]};
        UtteranceScore s;
        s.id = e.id;
        s.si_snri_db = si_snri(ex.mixture, ests, refs, &s.best_perm);
        s.fer_pct = fer(ests, refs, fer_stft_for_rate(e.sample_rate));
        report.scores.push_back(s);
        snri_scores.push_back(s.si_snri_db);
    }
    if (!missing.empty()) {
        std::string msg = "evaluate: missing estimates for ids:";
        for (const auto& id : missing) msg += " " + id;
        throw FormatError(msg);
    }
    std::sort(report.scores.begin(), report.scores.end(),
              [](const UtteranceScore& a, const UtteranceScore& b) { return a.id < b.id; });
    double ssum = 0.0, fsum = 0.0;
    for (const auto& s : report.scores) {
        ssum += s.si_snri_db;
        fsum += s.fer_pct;
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, report.scores.size()));
    report.mean_si_snri = ssum / n;
    report.mean_fer = fsum / n;
    for (double thr : opts.hsr_thresholds) report.hsr.push_back({thr, hsr(snri_scores, thr)});
    report.histogram = histogram(snri_scores, opts.hist_bin_width, opts.hist_lo, opts.hist_hi);
    return report;
}

// ---------------------------------------------------------------------------
// Complexity benchmark

std::vector<BenchRow> bench_cluster_loss(const std::vector<long>& k_values, long dim, int repeats,
                                         uint64_t seed) {
    for (long k : k_values)
        if (k < 4) throw ParamError("bench: K values must be >= 4");
    std::vector<BenchRow> rows;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (long K : k_values) {
        Mat<double> emb(dim, K);
        std::vector<int> labels(K);
        for (long k = 0; k < K; ++k) {
            for (long d = 0; d < dim; ++d) emb(d, k) = nd(rng);
            labels[k] = static_cast<int>(k & 1);
        }
        Ge2eParams p;
        auto time_of = [&](auto&& fn) {
            fn();  // untimed warm-up so cold caches don't skew the first row
            std::vector<double> times;
            for (int r = 0; r < repeats; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                fn();
                const auto t1 = std::chrono::steady_clock::now();
                times.push_back(
                    std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() / 1e3);
            }
            std::sort(times.begin(), times.end());
            return times[times.size() / 2];
        };
        volatile double sink = 0.0;
        BenchRow ge2e_row{"ge2e", K,
                          time_of([&] { sink = ge2e_loss(emb, labels, p).loss; }),
                          static_cast<long>((K * dim + 4 * dim) * 8)};
        BenchRow pw_row{"pairwise", K,
                        time_of([&] { sink = pairwise_similarity_loss(emb, labels).loss; }),
                        static_cast<long>((2 * K * dim + K) * 8)};
        (void)sink;
        rows.push_back(ge2e_row);
        rows.push_back(pw_row);
    }
    return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
    std::ofstream out(path);
    if (!out) throw FormatError("bench: cannot write " + path);
    out << "loss_name,K,wall_micros,bytes_peak_estimate\n";
    for (const auto& r : rows)
        out << r.loss_name << "," << r.K << "," << r.wall_micros << "," << r.bytes_peak_estimate
            << "\n";
}

}  // namespace pitsep
