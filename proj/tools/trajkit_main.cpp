// trajkit command-line interface.
//
// Subcommands: ingest, prep, train, eval, predict, experiment, plot.
// Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trajkit/evaluation.hpp"
#include "trajkit/harness.hpp"
#include "trajkit/ingest.hpp"
#include "trajkit/model.hpp"
#include "trajkit/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace trajkit;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Collects the csv files of a dataset directory (or accepts explicit files).
std::vector<NamedSource> collect_sources(const std::vector<std::string>& inputs) {
    std::vector<std::string> paths;
    for (const std::string& input : inputs) {
        if (fs::is_directory(input)) {
            for (const auto& entry : fs::recursive_directory_iterator(input)) {
                if (entry.is_regular_file() && entry.path().extension() == ".csv") {
                    paths.push_back(entry.path().string());
                }
            }
        } else {
            paths.push_back(input);
        }
    }
    std::sort(paths.begin(), paths.end());
    std::vector<NamedSource> out;
    out.reserve(paths.size());
    for (const std::string& p : paths) out.push_back({p, read_file(p)});
    return out;
}

std::set<AgentClass> parse_class_list(const std::string& csv_list) {
    std::set<AgentClass> out;
    std::stringstream ss(csv_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "all") {
            for (AgentClass c : all_agent_classes) out.insert(c);
        } else if (item == "vehicles") {
            for (AgentClass c : vehicle_classes()) out.insert(c);
        } else if (!item.empty()) {
            out.insert(agent_class_from_label(item));
        }
    }
    if (out.empty()) throw ConfigError("empty class list");
    return out;
}

std::vector<CanonicalStore> load_stores(const std::vector<std::string>& paths) {
    std::vector<CanonicalStore> stores;
    stores.reserve(paths.size());
    for (const std::string& p : paths) stores.push_back(read_store_file(p));
    return stores;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& kind_str, const std::vector<std::string>& inputs,
               const std::string& out_path, const std::string& dataset_name, double min_displacement,
               const std::string& classes, bool strict, bool keep_static) {
    IngestOptions opt;
    opt.strict = strict;
    opt.dataset_name = dataset_name;
    const DatasetKind kind = dataset_kind_from_string(kind_str);

    IngestResult res = parse_dataset(kind, collect_sources(inputs), opt);
    const std::size_t parsed_tracks = res.store.tracks.size();
    if (!keep_static) res.store.tracks = filter_static(std::move(res.store.tracks), min_displacement);
    const std::size_t after_static = res.store.tracks.size();
    if (!classes.empty()) res.store.tracks = filter_class(std::move(res.store.tracks), parse_class_list(classes));

    write_store_file(res.store, out_path);
    std::cout << "ingested " << res.rows_seen << " rows into " << parsed_tracks << " tracks ("
              << res.malformed.size() << " malformed rows skipped)\n";
    if (!keep_static) {
        std::cout << "static filter (< " << min_displacement << " m): " << parsed_tracks - after_static
                  << " tracks removed\n";
    }
    std::cout << "wrote " << res.store.tracks.size() << " tracks to " << out_path << "\n";
    for (const MalformedRow& m : res.malformed) {
        std::cerr << "  malformed: " << m.file << ":" << m.line << ": " << m.reason << "\n";
    }
    return 0;
}

int cmd_prep(const std::vector<std::string>& store_paths, const std::string& out_path, int obs_len,
             int pred_len, double target_hz, bool oriented, const std::string& mode_str,
             const std::vector<std::string>& train_sel, const std::vector<std::string>& test_sel,
             double mixed_ratio, std::uint64_t seed, const std::string& classes) {
    SplitSpec split;
    split.mode = split_mode_from_string(mode_str);
    for (const std::string& s : train_sel) split.train_selectors.push_back(Selector::parse(s));
    for (const std::string& s : test_sel) split.test_selectors.push_back(Selector::parse(s));
    split.mixed_ratio = mixed_ratio;

    WindowingConfig cfg;
    cfg.obs_len = obs_len;
    cfg.pred_len = pred_len;
    cfg.target_hz = target_hz;
    cfg.oriented = oriented;

    const std::vector<CanonicalStore> stores = load_stores(store_paths);
    std::vector<const CanonicalStore*> ptrs;
    for (const CanonicalStore& s : stores) ptrs.push_back(&s);

    auto [ws, manifest] = build_split(ptrs, split, cfg, parse_class_list(classes), seed);
    write_windows_file(ws, out_path);
    std::cout << "wrote " << ws.train.size() << " train / " << ws.test.size() << " test windows to "
              << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& windows_path, const std::string& out_path,
              const std::string& config_path, int epochs, int batch_size, std::uint64_t seed,
              int d_model, int n_layers, int n_heads, double base_scale, int workers) {
    const WindowSet ws = read_windows_file(windows_path);

    ModelConfig mc;
    TrainConfig tc;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config: " + config_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& ex) {
            throw ConfigError("cannot parse config: " + std::string(ex.what()));
        }
        if (j.contains("model")) mc = model_from_json(j["model"]);
        if (j.contains("train")) tc = train_from_json(j["train"]);
    }
    if (epochs > 0) tc.epochs = epochs;
    if (batch_size > 0) tc.batch_size = batch_size;
    if (seed != 0) tc.seed = seed;
    if (d_model > 0) mc.d_model = d_model;
    if (n_layers > 0) mc.n_layers = n_layers;
    if (n_heads > 0) mc.n_heads = n_heads;
    if (base_scale > 0) tc.base_scale = base_scale;
    if (workers > 0) tc.workers = workers;
    mc.feature_dim = ws.cfg.feature_dim();
    mc.max_len = std::max(mc.max_len, std::max(ws.cfg.obs_len, ws.cfg.pred_len) + 1);

    TrainResult res = train(ws, mc, tc);
    write_checkpoint_file({mc, std::move(res.params), ws.stats}, out_path);
    std::cout << "trained " << tc.epochs << " epochs on " << ws.train.size() << " windows in "
              << res.report.wall_seconds << " s; final loss " << res.report.epoch_loss.back() << "\n";
    std::cout << "wrote checkpoint " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& windows_path, bool baseline,
             const std::string& report_path) {
    const WindowSet ws = read_windows_file(windows_path);
    MetricsReport report;
    if (baseline) {
        report = evaluate_predictions(ws.test, [&](const WindowSample& w) {
            return cv_baseline(w, ws.cfg.pred_len);
        });
        std::cout << "cv-baseline ADE / FDE [m]: " << report.display() << " over " << report.n_samples
                  << " windows\n";
    } else {
        const Checkpoint ck = read_checkpoint_file(checkpoint_path);
        report = evaluate(ck, ws);
        std::cout << "ADE / FDE [m]: " << report.display() << " over " << report.n_samples << " windows\n";
    }
    if (!report_path.empty()) {
        nlohmann::json j{{"ade_m", report.ade}, {"fde_m", report.fde}, {"n_samples", report.n_samples},
                         {"display", report.display()}};
        std::ofstream out(report_path);
        if (!out) throw DataError("cannot write report: " + report_path);
        out << j.dump(2) << '\n';
    }
    return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& windows_path, std::size_t index,
                const std::string& split) {
    const Checkpoint ck = read_checkpoint_file(checkpoint_path);
    const WindowSet ws = read_windows_file(windows_path);
    const std::vector<WindowSample>& pool = split == "train" ? ws.train : ws.test;
    if (index >= pool.size()) {
        throw ConfigError("window index " + std::to_string(index) + " out of range (" +
                          std::to_string(pool.size()) + " windows)");
    }
    const WindowSample& w = pool[index];
    const std::vector<Point> pred = predict(ck.cfg, ck.params, w, ck.stats, ws.cfg.pred_len);
    const std::vector<Point> gt = ground_truth_positions(w);
    std::cout << "step\tpred_x\tpred_y\tgt_x\tgt_y\n";
    for (std::size_t i = 0; i < pred.size(); ++i) {
        std::cout << i + 1 << '\t' << pred[i].x << '\t' << pred[i].y << '\t' << gt[i].x << '\t'
                  << gt[i].y << '\n';
    }
    std::cout << "# ADE / FDE [m]: " << ade(pred, gt) << " / " << fde(pred, gt) << "\n";
    return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& manifest_path, bool both_variants) {
    if (config_path.empty() == manifest_path.empty()) {
        throw ConfigError("experiment: give exactly one of --config or --manifest");
    }
    std::vector<CanonicalStore> stores;
    std::vector<const CanonicalStore*> ptrs;

    auto load = [&](const ExperimentSpec& spec) {
        stores = load_stores(spec.store_paths);
        ptrs.clear();
        for (const CanonicalStore& s : stores) ptrs.push_back(&s);
    };

    if (!manifest_path.empty()) {
        std::ifstream in(manifest_path);
        if (!in) throw ConfigError("cannot open manifest: " + manifest_path);
        nlohmann::json j;
        in >> j;
        const ExperimentSpec spec = experiment_from_json(j.at("spec"));
        load(spec);
        const ExperimentResult res = run_from_manifest(ptrs, manifest_path);
        std::cout << res.row.experiment << " [" << res.row.variant << "] ADE / FDE [m]: "
                  << res.metrics.display() << " (n=" << res.row.n_test << ")\n";
        return 0;
    }

    const ExperimentSpec spec = load_experiment_spec(config_path);
    load(spec);
    if (both_variants) {
        const VariantComparison cmp = compare_variants(ptrs, spec);
        auto line = [&](const ExperimentResult& r, const std::string& variant) {
            const bool ade_win = cmp.ade_winner == variant;
            const bool fde_win = cmp.fde_winner == variant;
            std::cout << r.row.experiment << " [" << variant << "] ADE / FDE [m]: "
                      << r.metrics.display() << (ade_win ? " *ade" : "") << (fde_win ? " *fde" : "")
                      << "\n";
        };
        line(cmp.vanilla, "vanilla");
        line(cmp.oriented, "oriented");
    } else {
        const ExperimentResult res = run_experiment(ptrs, spec);
        std::cout << res.row.experiment << " [" << res.row.variant << "] ADE / FDE [m]: "
                  << res.metrics.display() << " (n=" << res.row.n_test << ")\n";
    }
    return 0;
}

int cmd_plot(const std::string& checkpoint_path, const std::string& windows_path, std::size_t index,
             const std::string& out_base, const std::string& hist_path,
             const std::vector<int>& horizons, int bins, bool baseline) {
    const WindowSet ws = read_windows_file(windows_path);
    Checkpoint ck;
    if (!baseline) ck = read_checkpoint_file(checkpoint_path);
    auto predictor = [&](const WindowSample& w) {
        return baseline ? cv_baseline(w, ws.cfg.pred_len)
                        : predict(ck.cfg, ck.params, w, ck.stats, ws.cfg.pred_len);
    };

    if (!hist_path.empty()) {
        const auto lists = fde_at_horizons(ws.test, predictor, horizons);
        const auto hists = fde_histogram(lists, horizons, bins);
        std::ofstream out(hist_path);
        if (!out) throw DataError("cannot write: " + hist_path);
        write_histogram_table(hists, out);
        std::cout << "wrote FDE histogram table " << hist_path << "\n";
        return 0;
    }

    if (index >= ws.test.size()) {
        throw ConfigError("window index out of range (" + std::to_string(ws.test.size()) + " test windows)");
    }
    const WindowSample& w = ws.test[index];
    export_qualitative(w, predictor(w), out_base);
    std::cout << "wrote " << out_base << ".svg and " << out_base << ".txt\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"trajkit: transformer trajectory prediction on bird's-eye-view traffic recordings"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse dataset csv files into a canonical .trkz store");
    std::string kind, out_path = "tracks.trkz", dataset_name, classes;
    std::vector<std::string> inputs;
    double min_displacement = 1.0;
    bool strict = false, keep_static = false;
    ingest->add_option("--kind", kind, "dataset family: ind_family|highd|interaction")->required();
    ingest->add_option("--input,-i", inputs, "csv files or directories")->required();
    ingest->add_option("--out,-o", out_path, "output store path");
    ingest->add_option("--name", dataset_name, "dataset name used by split selectors");
    ingest->add_option("--min-displacement", min_displacement, "static-track threshold in meters");
    ingest->add_option("--classes", classes, "comma list (car,truck,...), 'vehicles' or 'all'");
    ingest->add_flag("--strict", strict, "abort on the first malformed row");
    ingest->add_flag("--keep-static", keep_static, "skip the static-track filter");

    // prep
    auto* prep = app.add_subcommand("prep", "build train/test windows (.winz) from stores");
    std::vector<std::string> store_paths, train_sel, test_sel;
    std::string winz_path = "windows.winz", mode = "leave_location_out", prep_classes = "vehicles";
    int obs_len = 8, pred_len = 12;
    double target_hz = 2.5, mixed_ratio = 0.8;
    bool oriented = false;
    std::uint64_t seed = 1;
    prep->add_option("--store,-s", store_paths, ".trkz stores")->required();
    prep->add_option("--out,-o", winz_path, "output windows path");
    prep->add_option("--obs", obs_len, "observed steps");
    prep->add_option("--pred", pred_len, "predicted steps");
    prep->add_option("--hz", target_hz, "target sample rate");
    prep->add_flag("--oriented", oriented, "include the normalized heading feature");
    prep->add_option("--mode", mode, "leave_location_out|mixed|cross_dataset");
    prep->add_option("--train", train_sel, "train selectors (dataset[:loc|:rec:ID])");
    prep->add_option("--test", test_sel, "test selectors");
    prep->add_option("--mixed-ratio", mixed_ratio, "train fraction in mixed mode");
    prep->add_option("--seed", seed, "split seed (mixed mode)");
    prep->add_option("--classes", prep_classes, "allowed agent classes");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on a windows file");
    std::string train_windows, ckpt_out = "model.ckpt", train_config;
    int epochs = 0, batch_size = 0, d_model = 0, n_layers = 0, n_heads = 0, workers = 0;
    double base_scale = 0.0;
    std::uint64_t train_seed = 0;
    train_cmd->add_option("--windows,-w", train_windows, ".winz file")->required();
    train_cmd->add_option("--out,-o", ckpt_out, "checkpoint output path");
    train_cmd->add_option("--config,-c", train_config, "json with model/train sections");
    train_cmd->add_option("--epochs", epochs, "override: training epochs");
    train_cmd->add_option("--batch", batch_size, "override: batch size");
    train_cmd->add_option("--seed", train_seed, "override: seed");
    train_cmd->add_option("--d-model", d_model, "override: model width");
    train_cmd->add_option("--layers", n_layers, "override: encoder/decoder layers");
    train_cmd->add_option("--heads", n_heads, "override: attention heads");
    train_cmd->add_option("--base-scale", base_scale, "override: lr schedule scale");
    train_cmd->add_option("--workers", workers, "override: batch workers");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate ADE/FDE on the test split");
    std::string eval_ckpt, eval_windows, eval_report;
    bool eval_baseline = false;
    eval_cmd->add_option("--checkpoint,-k", eval_ckpt, "trained .ckpt");
    eval_cmd->add_option("--windows,-w", eval_windows, ".winz file")->required();
    eval_cmd->add_flag("--baseline", eval_baseline, "score the constant-velocity baseline instead");
    eval_cmd->add_option("--report", eval_report, "also write a json report");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "print one window's predicted positions");
    std::string pred_ckpt, pred_windows, pred_split = "test";
    std::size_t pred_index = 0;
    predict_cmd->add_option("--checkpoint,-k", pred_ckpt, "trained .ckpt")->required();
    predict_cmd->add_option("--windows,-w", pred_windows, ".winz file")->required();
    predict_cmd->add_option("--index", pred_index, "window index");
    predict_cmd->add_option("--split", pred_split, "train|test");

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "run a declarative experiment config");
    std::string exp_config, exp_manifest;
    bool both_variants = false;
    exp_cmd->add_option("--config,-c", exp_config, "experiment json");
    exp_cmd->add_option("--manifest,-m", exp_manifest, "re-run bitwise from a manifest.json");
    exp_cmd->add_flag("--compare-variants", both_variants, "run vanilla and oriented on the same split");

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "qualitative svg/table export or FDE histogram");
    std::string plot_ckpt, plot_windows, plot_out = "trajectory", plot_hist;
    std::size_t plot_index = 0;
    std::vector<int> plot_horizons = {4, 8, 12};
    int plot_bins = 20;
    bool plot_baseline = false;
    plot_cmd->add_option("--checkpoint,-k", plot_ckpt, "trained .ckpt");
    plot_cmd->add_option("--windows,-w", plot_windows, ".winz file")->required();
    plot_cmd->add_option("--index", plot_index, "test window index");
    plot_cmd->add_option("--out,-o", plot_out, "output base path (writes .svg and .txt)");
    plot_cmd->add_option("--fde-hist", plot_hist, "write an FDE histogram table instead");
    plot_cmd->add_option("--horizons", plot_horizons, "histogram horizons in steps");
    plot_cmd->add_option("--bins", plot_bins, "histogram bins");
    plot_cmd->add_flag("--baseline", plot_baseline, "use the constant-velocity baseline");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) {
            return cmd_ingest(kind, inputs, out_path, dataset_name, min_displacement, classes, strict,
                              keep_static);
        }
        if (prep->parsed()) {
            return cmd_prep(store_paths, winz_path, obs_len, pred_len, target_hz, oriented, mode,
                            train_sel, test_sel, mixed_ratio, seed, prep_classes);
        }
        if (train_cmd->parsed()) {
            return cmd_train(train_windows, ckpt_out, train_config, epochs, batch_size, train_seed,
                             d_model, n_layers, n_heads, base_scale, workers);
        }
        if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_windows, eval_baseline, eval_report);
        if (predict_cmd->parsed()) return cmd_predict(pred_ckpt, pred_windows, pred_index, pred_split);
        if (exp_cmd->parsed()) return cmd_experiment(exp_config, exp_manifest, both_variants);
        if (plot_cmd->parsed()) {
            return cmd_plot(plot_ckpt, plot_windows, plot_index, plot_out, plot_hist, plot_horizons,
                            plot_bins, plot_baseline);
        }
    } catch (const trajkit::TrainDivergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const trajkit::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const trajkit::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
