#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajkit/errors.hpp"
#include "trajkit/evaluation.hpp"
#include "trajkit/features.hpp"
#include "trajkit/ingest.hpp"
#include "trajkit/model.hpp"
#include "trajkit/training.hpp"

// Declarative experiment runner: split construction with recording-level
// disjointness, vanilla/oriented comparison, frame-rate studies, seeded
// manifests that reproduce a run bitwise, and the cumulative results table.

namespace trajkit {

enum class SplitMode : std::uint8_t { leave_location_out, mixed, cross_dataset };

inline std::string_view to_string(SplitMode m) {
    switch (m) {
        case SplitMode::leave_location_out: return "leave_location_out";
        case SplitMode::mixed: return "mixed";
        case SplitMode::cross_dataset: return "cross_dataset";
    }
    return "?";
}

inline SplitMode split_mode_from_string(std::string_view s) {
    if (s == "leave_location_out") return SplitMode::leave_location_out;
    if (s == "mixed") return SplitMode::mixed;
    if (s == "cross_dataset") return SplitMode::cross_dataset;
    throw ConfigError("unknown split mode: " + std::string(s));
}

enum class ModelVariant : std::uint8_t { vanilla, oriented };

inline std::string_view to_string(ModelVariant v) { return v == ModelVariant::vanilla ? "vanilla" : "oriented"; }

inline ModelVariant variant_from_string(std::string_view s) {
    if (s == "vanilla") return ModelVariant::vanilla;
    if (s == "oriented") return ModelVariant::oriented;
    throw ConfigError("unknown model variant: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Selectors
//
// "dataset"            every recording of that store
// "dataset:LOC"        every recording at location LOC
// "dataset:rec:ID"     one recording

struct Selector {
    std::string dataset;
    std::string location;
    std::string recording;

    static Selector parse(const std::string& text) {
        Selector s;
        const std::size_t c1 = text.find(':');
        if (c1 == std::string::npos) {
            s.dataset = text;
            return s;
        }
        s.dataset = text.substr(0, c1);
        const std::string rest = text.substr(c1 + 1);
        if (rest.rfind("rec:", 0) == 0) {
            s.recording = rest.substr(4);
        } else {
            s.location = rest;
        }
        if (s.dataset.empty()) throw ConfigError("selector '" + text + "': empty dataset");
        return s;
    }

    std::string str() const {
        if (!s_empty(recording)) return dataset + ":rec:" + recording;
        if (!s_empty(location)) return dataset + ":" + location;
        return dataset;
    }

    bool matches(const std::string& ds, const RecordingInfo& rec) const {
        if (ds != dataset) return false;
        if (!location.empty() && rec.location_id != location) return false;
        if (!recording.empty() && rec.recording_id != recording) return false;
        return true;
    }

private:
    static bool s_empty(const std::string& s) { return s.empty(); }
};

struct SplitSpec {
    SplitMode mode = SplitMode::leave_location_out;
    std::vector<Selector> train_selectors;
    std::vector<Selector> test_selectors;
    double mixed_ratio = 0.8;
};

struct ExperimentSpec {
    std::string name = "experiment";
    std::vector<std::string> store_paths;
    SplitSpec split;
    WindowingConfig windowing;
    ModelConfig model;
    TrainConfig train;
    ModelVariant variant = ModelVariant::vanilla;
    std::set<AgentClass> allowed_classes = vehicle_classes();
    std::string out_dir = "runs/experiment";
    std::string results_path; // defaults to <out_dir>/results.tsv
};

// Fixes up the variant-dependent fields: the oriented variant carries the
// normalized heading as a third feature, vanilla carries increments only.
inline void apply_variant(ExperimentSpec& spec) {
    spec.windowing.oriented = (spec.variant == ModelVariant::oriented);
    spec.model.feature_dim = spec.windowing.feature_dim();
}

// ---------------------------------------------------------------------------
// JSON (config files and manifests)

inline nlohmann::json to_json(const WindowingConfig& w) {
    return {{"obs_len", w.obs_len}, {"pred_len", w.pred_len}, {"stride", w.stride},
            {"target_hz", w.target_hz}, {"oriented", w.oriented}};
}

inline WindowingConfig windowing_from_json(const nlohmann::json& j) {
    WindowingConfig w;
    w.obs_len = j.value("obs_len", w.obs_len);
    w.pred_len = j.value("pred_len", w.pred_len);
    w.stride = j.value("stride", w.stride);
    w.target_hz = j.value("target_hz", w.target_hz);
    w.oriented = j.value("oriented", w.oriented);
    return w;
}

inline nlohmann::json to_json(const ModelConfig& m) {
    return {{"d_model", m.d_model}, {"n_layers", m.n_layers}, {"n_heads", m.n_heads},
            {"d_ff", m.d_ff}, {"feature_dim", m.feature_dim},
            {"pe_mode", std::string(to_string(m.pe_mode))}, {"dropout", m.dropout},
            {"max_len", m.max_len}};
}

inline ModelConfig model_from_json(const nlohmann::json& j) {
    ModelConfig m;
    m.d_model = j.value("d_model", m.d_model);
    m.n_layers = j.value("n_layers", m.n_layers);
    m.n_heads = j.value("n_heads", m.n_heads);
    m.d_ff = j.value("d_ff", m.d_ff);
    m.feature_dim = j.value("feature_dim", m.feature_dim);
    if (j.contains("pe_mode")) m.pe_mode = pe_mode_from_string(j["pe_mode"].get<std::string>());
    m.dropout = j.value("dropout", m.dropout);
    m.max_len = j.value("max_len", m.max_len);
    return m;
}

inline nlohmann::json to_json(const TrainConfig& t) {
    return {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"warmup_epochs", t.warmup_epochs},
            {"base_scale", t.base_scale}, {"seed", t.seed}, {"clip_gradients", t.clip_gradients},
            {"clip_norm", t.clip_norm}, {"workers", t.workers}};
}

inline TrainConfig train_from_json(const nlohmann::json& j) {
    TrainConfig t;
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.warmup_epochs = j.value("warmup_epochs", t.warmup_epochs);
    t.base_scale = j.value("base_scale", t.base_scale);
    t.seed = j.value("seed", t.seed);
    t.clip_gradients = j.value("clip_gradients", t.clip_gradients);
    t.clip_norm = j.value("clip_norm", t.clip_norm);
    t.workers = j.value("workers", t.workers);
    return t;
}

inline nlohmann::json to_json(const ExperimentSpec& e) {
    nlohmann::json split;
    split["mode"] = std::string(to_string(e.split.mode));
    split["train"] = nlohmann::json::array();
    for (const Selector& s : e.split.train_selectors) split["train"].push_back(s.str());
    split["test"] = nlohmann::json::array();
    for (const Selector& s : e.split.test_selectors) split["test"].push_back(s.str());
    split["mixed_ratio"] = e.split.mixed_ratio;

    nlohmann::json classes = nlohmann::json::array();
    for (AgentClass c : e.allowed_classes) classes.push_back(std::string(to_string(c)));

    return {{"name", e.name},
            {"stores", e.store_paths},
            {"split", split},
            {"windowing", to_json(e.windowing)},
            {"model", to_json(e.model)},
            {"train", to_json(e.train)},
            {"variant", std::string(to_string(e.variant))},
            {"classes", classes},
            {"out_dir", e.out_dir},
            {"results_path", e.results_path}};
}

inline ExperimentSpec experiment_from_json(const nlohmann::json& j) {
    try {
        ExperimentSpec e;
        e.name = j.value("name", e.name);
        if (j.contains("stores")) e.store_paths = j["stores"].get<std::vector<std::string>>();
        if (j.contains("split")) {
            const auto& s = j["split"];
            if (s.contains("mode")) e.split.mode = split_mode_from_string(s["mode"].get<std::string>());
            if (s.contains("train"))
                for (const auto& item : s["train"]) e.split.train_selectors.push_back(Selector::parse(item.get<std::string>()));
            if (s.contains("test"))
                for (const auto& item : s["test"]) e.split.test_selectors.push_back(Selector::parse(item.get<std::string>()));
            e.split.mixed_ratio = s.value("mixed_ratio", e.split.mixed_ratio);
        }
        if (j.contains("windowing")) e.windowing = windowing_from_json(j["windowing"]);
        if (j.contains("model")) e.model = model_from_json(j["model"]);
        if (j.contains("train")) e.train = train_from_json(j["train"]);
        if (j.contains("variant")) e.variant = variant_from_string(j["variant"].get<std::string>());
        if (j.contains("classes")) {
            e.allowed_classes.clear();
            for (const auto& item : j["classes"]) {
                e.allowed_classes.insert(agent_class_from_label(item.get<std::string>()));
            }
        }
        e.out_dir = j.value("out_dir", e.out_dir);
        e.results_path = j.value("results_path", e.results_path);
        apply_variant(e);
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("bad experiment config: ") + ex.what());
    }
}

inline ExperimentSpec load_experiment_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("cannot parse config " + path + ": " + ex.what());
    }
    return experiment_from_json(j);
}

// FNV-1a over the canonical JSON dump; stable across runs and platforms.
inline std::string config_hash(const ExperimentSpec& spec) {
    const std::string dump = to_json(spec).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Split construction

struct SplitManifest {
    std::vector<std::string> train_recordings; // "dataset/recording"
    std::vector<std::string> test_recordings;
    std::uint64_t seed = 0;

    friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

namespace detail {

inline std::string recording_key(const std::string& dataset, const std::string& recording) {
    return dataset + "/" + recording;
}

// Expands selectors to the set of matching recording keys.
inline std::set<std::string> resolve_selectors(const std::vector<const CanonicalStore*>& stores,
                                               const std::vector<Selector>& selectors) {
    std::set<std::string> keys;
    for (const Selector& sel : selectors) {
        bool matched = false;
        for (const CanonicalStore* store : stores) {
            for (const RecordingInfo& rec : store->header.recordings) {
                if (sel.matches(store->header.dataset_name, rec)) {
                    keys.insert(recording_key(store->header.dataset_name, rec.recording_id));
                    matched = true;
                }
            }
        }
        if (!matched) throw DataError("selector '" + sel.str() + "' matches no recording");
    }
    return keys;
}

inline std::vector<WindowSample> windows_for_recordings(const std::vector<const CanonicalStore*>& stores,
                                                        const std::set<std::string>& keys,
                                                        const WindowingConfig& cfg,
                                                        const std::set<AgentClass>& classes) {
    std::vector<WindowSample> out;
    for (const CanonicalStore* store : stores) {
        for (const Track& t : store->tracks) {
            if (!classes.count(t.agent_class)) continue;
            if (!keys.count(recording_key(store->header.dataset_name, t.recording_id))) continue;
            std::vector<WindowSample> w = windows_for_track(t, cfg);
            out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
        }
    }
    return out;
}

} // namespace detail

// Builds train/test windows per the split spec and fits normalization stats
// on the training split only. Non-mixed modes enforce recording-level
// disjointness; mixed mode is a seeded window-level split over the pool
// named by the train selectors.
inline std::pair<WindowSet, SplitManifest> build_split(const std::vector<const CanonicalStore*>& stores,
                                                       const SplitSpec& split, const WindowingConfig& cfg,
                                                       const std::set<AgentClass>& classes,
                                                       std::uint64_t seed) {
    check_windowing(cfg);
    if (split.train_selectors.empty()) throw ConfigError("split: train selectors must not be empty");

    WindowSet ws;
    ws.cfg = cfg;
    SplitManifest manifest;
    manifest.seed = seed;

    if (split.mode == SplitMode::mixed) {
        if (!split.test_selectors.empty()) {
            throw ConfigError("split: mixed mode draws test windows from the train pool; no test selectors");
        }
        if (!(split.mixed_ratio > 0.0 && split.mixed_ratio < 1.0)) {
            throw ConfigError("split: mixed_ratio must be in (0,1)");
        }
        const std::set<std::string> pool = detail::resolve_selectors(stores, split.train_selectors);
        std::vector<WindowSample> windows = detail::windows_for_recordings(stores, pool, cfg, classes);
        if (windows.empty()) throw DataError("split: selectors produced no windows");

        std::vector<std::size_t> order(windows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(seed);
        rng.shuffle(order);
        const std::size_t n_train = static_cast<std::size_t>(
            std::llround(split.mixed_ratio * static_cast<double>(windows.size())));
        for (std::size_t i = 0; i < order.size(); ++i) {
            (i < n_train ? ws.train : ws.test).push_back(windows[order[i]]);
        }
        manifest.train_recordings.assign(pool.begin(), pool.end());
        manifest.test_recordings.assign(pool.begin(), pool.end());
    } else {
        if (split.test_selectors.empty()) throw ConfigError("split: test selectors must not be empty");
        const std::set<std::string> train_keys = detail::resolve_selectors(stores, split.train_selectors);
        const std::set<std::string> test_keys = detail::resolve_selectors(stores, split.test_selectors);
        for (const std::string& k : train_keys) {
            if (test_keys.count(k)) {
                throw ConfigError("split: recording " + k + " selected for both training and test");
            }
        }
        ws.train = detail::windows_for_recordings(stores, train_keys, cfg, classes);
        ws.test = detail::windows_for_recordings(stores, test_keys, cfg, classes);
        manifest.train_recordings.assign(train_keys.begin(), train_keys.end());
        manifest.test_recordings.assign(test_keys.begin(), test_keys.end());
    }

    if (ws.train.size() < 2) throw DataError("split: training split has fewer than 2 windows");
    ws.stats = fit_norm(ws.train, cfg.feature_dim());
    return {std::move(ws), std::move(manifest)};
}

// ---------------------------------------------------------------------------
// Results table

struct ResultRow {
    std::string experiment;
    std::string variant;
    double ade_m = 0.0;
    double fde_m = 0.0;
    std::size_t n_test = 0;
    std::string config_hash;
    std::uint64_t seed = 0;
};

// Appends to the cumulative delimited-text table, creating it (with header)
// on first use.
inline void append_result(const ResultRow& row, const std::string& path) {
    namespace fs = std::filesystem;
    const bool fresh = !fs::exists(path);
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw DataError("cannot open results table: " + path);
    if (fresh) out << "experiment\tvariant\tade_m\tfde_m\tn_test\tconfig_hash\tseed\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f\t%.6f", row.ade_m, row.fde_m);
    out << row.experiment << '\t' << row.variant << '\t' << buf << '\t' << row.n_test << '\t'
        << row.config_hash << '\t' << row.seed << '\n';
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentResult {
    ResultRow row;
    SplitManifest manifest;
    TrainReport train_report;
    MetricsReport metrics;
    std::string checkpoint_path;
};

namespace detail {

inline std::vector<const CanonicalStore*> store_pointers(const std::vector<CanonicalStore>& stores) {
    std::vector<const CanonicalStore*> out;
    out.reserve(stores.size());
    for (const CanonicalStore& s : stores) out.push_back(&s);
    return out;
}

inline void write_manifest(const ExperimentSpec& spec, const SplitManifest& manifest,
                           const std::string& path) {
    nlohmann::json j;
    j["spec"] = to_json(spec);
    j["train_recordings"] = manifest.train_recordings;
    j["test_recordings"] = manifest.test_recordings;
    j["seed"] = manifest.seed;
    j["config_hash"] = config_hash(spec);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << j.dump(2) << '\n';
}

} // namespace detail

// Runs one experiment end to end: split, train, evaluate, persist. The
// optional predictor override is a test hook (e.g. a ground-truth oracle);
// when set, training is skipped and the override scores the test split.
using PredictorOverride = std::function<std::vector<Point>(const WindowSample&)>;

inline ExperimentResult run_experiment(const std::vector<const CanonicalStore*>& stores,
                                       ExperimentSpec spec,
                                       const PredictorOverride& predictor_override = nullptr) {
    namespace fs = std::filesystem;
    apply_variant(spec);
    check_model_config(spec.model);
    check_train_config(spec.train);
    if (spec.allowed_classes.empty()) throw ConfigError("experiment: allowed class set must not be empty");

    ExperimentResult res;
    auto [ws, manifest] = build_split(stores, spec.split, spec.windowing, spec.allowed_classes,
                                      spec.train.seed);
    res.manifest = manifest;

    fs::create_directories(spec.out_dir);
    detail::write_manifest(spec, manifest, spec.out_dir + "/manifest.json");
    write_windows_file(ws, spec.out_dir + "/windows.winz");

    if (predictor_override) {
        res.metrics = evaluate_predictions(ws.test, predictor_override);
    } else {
        TrainResult trained = train(ws, spec.model, spec.train);
        res.train_report = std::move(trained.report);

        Checkpoint ck{spec.model, std::move(trained.params), ws.stats};
        res.checkpoint_path = spec.out_dir + "/model.ckpt";
        write_checkpoint_file(ck, res.checkpoint_path);
        res.metrics = evaluate(ck, ws);

        nlohmann::json report;
        report["epoch_loss"] = res.train_report.epoch_loss;
        report["wall_seconds"] = res.train_report.wall_seconds;
        std::ofstream rep(spec.out_dir + "/train_report.json");
        rep << report.dump(2) << '\n';
    }

    res.row = {spec.name, std::string(to_string(spec.variant)), res.metrics.ade, res.metrics.fde,
               res.metrics.n_samples, config_hash(spec), spec.train.seed};
    const std::string results_path =
        spec.results_path.empty() ? spec.out_dir + "/results.tsv" : spec.results_path;
    append_result(res.row, results_path);
    return res;
}

// Re-runs an experiment from its manifest. The manifest pins the resolved
// recording lists, so the reconstructed split (and with it every loss and
// metric) reproduces the original run bitwise.
inline ExperimentResult run_from_manifest(const std::vector<const CanonicalStore*>& stores,
                                          const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ConfigError("cannot open manifest: " + manifest_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("cannot parse manifest: " + std::string(ex.what()));
    }
    ExperimentSpec spec = experiment_from_json(j.at("spec"));

    // pin selectors to the recorded recording-level resolution
    auto to_selectors = [](const std::vector<std::string>& keys) {
        std::vector<Selector> out;
        for (const std::string& k : keys) {
            const std::size_t slash = k.find('/');
            if (slash == std::string::npos) throw ConfigError("manifest: bad recording key " + k);
            Selector s;
            s.dataset = k.substr(0, slash);
            s.recording = k.substr(slash + 1);
            out.push_back(std::move(s));
        }
        return out;
    };
    const auto train_recs = j.at("train_recordings").get<std::vector<std::string>>();
    const auto test_recs = j.at("test_recordings").get<std::vector<std::string>>();
    spec.split.train_selectors = to_selectors(train_recs);
    if (spec.split.mode != SplitMode::mixed) spec.split.test_selectors = to_selectors(test_recs);

    return run_experiment(stores, spec);
}

// Trains and evaluates both variants on the identical split and seed.
struct VariantComparison {
    ExperimentResult vanilla;
    ExperimentResult oriented;
    std::string ade_winner;
    std::string fde_winner;
};

inline VariantComparison compare_variants(const std::vector<const CanonicalStore*>& stores,
                                          ExperimentSpec spec) {
    VariantComparison cmp;
    ExperimentSpec v = spec;
    v.variant = ModelVariant::vanilla;
    v.out_dir = spec.out_dir + "/vanilla";
    v.results_path = spec.results_path.empty() ? spec.out_dir + "/results.tsv" : spec.results_path;
    cmp.vanilla = run_experiment(stores, v);

    ExperimentSpec o = spec;
    o.variant = ModelVariant::oriented;
    o.out_dir = spec.out_dir + "/oriented";
    o.results_path = v.results_path;
    cmp.oriented = run_experiment(stores, o);

    cmp.ade_winner = cmp.vanilla.metrics.ade <= cmp.oriented.metrics.ade ? "vanilla" : "oriented";
    cmp.fde_winner = cmp.vanilla.metrics.fde <= cmp.oriented.metrics.fde ? "vanilla" : "oriented";
    return cmp;
}

// Frame-rate study: re-runs the base experiment at each rate with obs/pred
// lengths rescaled so the covered time horizons stay fixed.
struct FramerateRow {
    double hz = 0.0;
    int obs_len = 0;
    int pred_len = 0;
    ExperimentResult result;
};

inline std::vector<FramerateRow> framerate_study(const std::vector<const CanonicalStore*>& stores,
                                                 const ExperimentSpec& base,
                                                 const std::vector<double>& rates) {
    if (rates.empty()) throw ConfigError("framerate_study: no rates given");
    const double obs_horizon = static_cast<double>(base.windowing.obs_len) / base.windowing.target_hz;
    const double pred_horizon = static_cast<double>(base.windowing.pred_len) / base.windowing.target_hz;

    std::vector<FramerateRow> out;
    for (double hz : rates) {
        ExperimentSpec spec = base;
        spec.windowing.target_hz = hz;
        spec.windowing.obs_len = static_cast<int>(std::llround(obs_horizon * hz));
        spec.windowing.pred_len = static_cast<int>(std::llround(pred_horizon * hz));
        char tag[32];
        std::snprintf(tag, sizeof(tag), "%g", hz);
        spec.name = base.name + "@" + tag + "hz";
        spec.out_dir = base.out_dir + "/" + tag + "hz";
        spec.results_path = base.results_path.empty() ? base.out_dir + "/results.tsv" : base.results_path;
        FramerateRow row;
        row.hz = hz;
        row.obs_len = spec.windowing.obs_len;
        row.pred_len = spec.windowing.pred_len;
        row.result = run_experiment(stores, spec);
        out.push_back(std::move(row));
    }
    return out;
}

} // namespace trajkit
