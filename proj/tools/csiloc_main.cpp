// SPDX-License-Identifier: Apache-2.0

// csiloc: command-line driver for simulation, training and evaluation runs.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data/parse error, 3 training divergence.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "csiloc/augment.hpp"
#include "csiloc/binary_io.hpp"
#include "csiloc/calibration.hpp"
#include "csiloc/channel_sim.hpp"
#include "csiloc/csi_data.hpp"
#include "csiloc/errors.hpp"
#include "csiloc/eval.hpp"
#include "csiloc/kv_config.hpp"
#include "csiloc/localizers.hpp"

namespace fs = std::filesystem;
using namespace csiloc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDiverged = 3;

/// Error tied to a command-line flag or file; the flag is prefixed to the message.
struct FlagError : std::runtime_error {
    FlagError(const std::string& flag, const std::string& what, int code)
        : std::runtime_error(flag + ": " + what), exit_code(code)
    {
    }
    int exit_code;
};

template <typename F>
auto with_flag(const std::string& flag, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const ConfigError& e) {
        throw FlagError(flag, e.what(), kExitUsage);
    } catch (const TrainingError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw FlagError(flag, e.what(), kExitData);
    } catch (const std::runtime_error& e) {
        throw FlagError(flag, e.what(), kExitData);
    }
}

std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// --- manifests -------------------------------------------------------------------------------

struct RunContext {
    std::string subcommand;
    std::vector<std::string> argv;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

fs::path manifest_path_for(const fs::path& output, bool is_dir)
{
    if (is_dir) {
        return output / "manifest.json";
    }
    return fs::path(output.string() + ".manifest.json");
}

void write_manifest(const RunContext& ctx, const KeyValueConfig& config, const nlohmann::json& inputs,
                    const nlohmann::json& outputs, std::optional<std::uint64_t> seed, const fs::path& output, bool is_dir)
{
    nlohmann::json j;
    j["subcommand"] = ctx.subcommand;
    j["command_line"] = ctx.argv;
    j["config"] = config.values();
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    if (seed) {
        j["seed"] = *seed;
    } else {
        j["seed"] = nullptr;
    }
    j["tool_version"] = CSILOC_VERSION;
    j["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
    write_file_atomic(manifest_path_for(output, is_dir), j.dump(2) + "\n");
}

// --- shared option helpers ----------------------------------------------------------------------

/// Applies `key=value` overrides from --set.
void apply_overrides(KeyValueConfig& cfg, const std::vector<std::string>& sets)
{
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw FlagError("--set", "expected key=value, got '" + s + "'", kExitUsage);
        }
        auto trim = [](std::string v) {
            v.erase(0, v.find_first_not_of(" \t"));
            v.erase(v.find_last_not_of(" \t") + 1);
            return v;
        };
        cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
}

std::vector<Point2> read_points(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FlagError("--points", "cannot open " + path.string(), kExitData);
    }
    std::vector<Point2> pts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto cfg = KeyValueConfig::parse("p = " + line, path.string() + ":" + std::to_string(line_no));
        pts.push_back(with_flag("--points " + path.string() + ":" + std::to_string(line_no),
                                [&] { return cfg.get_point("p", {}); }));
    }
    if (pts.empty()) {
        throw FlagError("--points", path.string() + " contains no points", kExitData);
    }
    return pts;
}

std::vector<FingerprintRecord> load_data(const std::string& path)
{
    return with_flag("--data", [&] { return read_dataset(path); });
}

std::vector<std::uint64_t> parse_seeds(const std::string& text)
{
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto cfg = KeyValueConfig::parse("seed = " + item, "--seeds");
        seeds.push_back(with_flag("--seeds", [&] { return cfg.get_u64("seed", 0); }));
    }
    if (seeds.empty()) {
        throw FlagError("--seeds", "no seeds given", kExitUsage);
    }
    return seeds;
}

std::vector<LocalizerKind> parse_methods(const std::string& text)
{
    std::vector<LocalizerKind> methods;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        methods.push_back(with_flag("--methods", [&] { return parse_localizer_kind(item); }));
    }
    return methods;
}

// --- subcommands -----------------------------------------------------------------------------

struct SimulateArgs {
    std::string scene;
    std::size_t packets = 100;
    std::string points;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
};

int run_simulate(const SimulateArgs& a, const RunContext& ctx)
{
    KeyValueConfig cfg = a.scene.empty() ? KeyValueConfig{} : with_flag("--scene", [&] { return KeyValueConfig::load(a.scene); });
    apply_overrides(cfg, a.sets);
    if (a.seed) {
        cfg.set("seed", std::to_string(*a.seed));
    }
    const auto scene = with_flag("--scene", [&] {
        std::set<std::string> known(scene_keys().begin(), scene_keys().end());
        cfg.reject_unknown(known);
        auto s = scene_from_config(cfg);
        s.validate();
        return s;
    });
    const auto points = a.points.empty() ? scene.rp_locations() : read_points(a.points);
    const auto records = with_flag("--points", [&] { return generate_dataset(scene, a.packets, points); });
    write_dataset(records, a.out);

    auto resolved = scene_to_config(scene);
    resolved.set("packets", std::to_string(a.packets));
    write_manifest(ctx, resolved, {{"scene", a.scene}, {"points", a.points}}, {{"dataset", a.out}}, scene.seed, a.out,
                   false);
    std::printf("wrote %zu records x %zu packets to %s\n", records.size(), a.packets, a.out.c_str());
    return kExitOk;
}

int run_calibrate(const std::string& data, const std::string& out, const RunContext& ctx)
{
    const auto records = load_data(data);
    const auto calibrated = with_flag("--data", [&] { return calibrate_dataset(records); });
    write_dataset(calibrated, out);
    write_manifest(ctx, {}, {{"dataset", data}}, {{"dataset", out}}, std::nullopt, out, false);
    std::printf("calibrated %zu records into %s\n", calibrated.size(), out.c_str());
    return kExitOk;
}

struct AugmentArgs {
    std::string scene;
    std::string data;
    std::string out;
    std::size_t samples_per_rp = 10;
    double radius = 0.10;
    std::size_t packets = 30;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
};

int run_augment(const AugmentArgs& a, const RunContext& ctx)
{
    KeyValueConfig cfg = with_flag("--scene", [&] { return KeyValueConfig::load(a.scene); });
    apply_overrides(cfg, a.sets);
    const auto scene = with_flag("--scene", [&] {
        std::set<std::string> known(scene_keys().begin(), scene_keys().end());
        cfg.reject_unknown(known);
        auto s = scene_from_config(cfg);
        s.validate();
        return s;
    });
    const auto base = load_data(a.data);
    AugmentConfig aug;
    aug.samples_per_rp = a.samples_per_rp;
    aug.perturbation_radius = a.radius;
    aug.packets_per_sample = a.packets;
    aug.alpha = a.alpha;
    aug.seed = a.seed;
    const auto out = with_flag("--radius", [&] { return augment_dataset(scene, base, aug); });
    write_dataset(out, a.out);

    auto resolved = scene_to_config(scene);
    resolved.set("augment_samples_per_rp", std::to_string(a.samples_per_rp));
    resolved.set("augment_radius", fmt17(a.radius));
    resolved.set("augment_packets", std::to_string(a.packets));
    resolved.set("alpha", fmt17(a.alpha));
    write_manifest(ctx, resolved, {{"scene", a.scene}, {"dataset", a.data}}, {{"dataset", a.out}}, a.seed, a.out, false);
    std::printf("wrote %zu records (%zu augmented) to %s\n", out.size(), out.size() - base.size(), a.out.c_str());
    return kExitOk;
}

const std::set<std::string>& train_keys()
{
    static const std::set<std::string> keys{"method",   "epochs",  "batch_size",     "learning_rate",
                                            "optimizer", "seed",    "dropout_active", "momentum",
                                            "alpha",    "knn_k",   "classifier_trunk", "use_phase",
                                            "window_averaging"};
    return keys;
}

LocalizerOptions options_from_config(const KeyValueConfig& cfg)
{
    cfg.reject_unknown(train_keys());
    LocalizerOptions o;
    o.kind = parse_localizer_kind(cfg.get_string("method", "cnn_regression"));
    auto& t = o.train;
    t.epochs = static_cast<std::size_t>(cfg.get_int("epochs", static_cast<long long>(t.epochs)));
    t.batch_size = static_cast<std::size_t>(cfg.get_int("batch_size", static_cast<long long>(t.batch_size)));
    t.learning_rate = cfg.get_double("learning_rate", t.learning_rate);
    t.optimizer = nn::parse_optimizer(cfg.get_string("optimizer", nn::to_string(t.optimizer)));
    t.seed = cfg.get_u64("seed", t.seed);
    t.dropout_active = cfg.get_bool("dropout_active", t.dropout_active);
    t.momentum = cfg.get_double("momentum", t.momentum);
    t.alpha = cfg.get_double("alpha", t.alpha);
    t.validate();
    o.knn_k = static_cast<std::size_t>(cfg.get_int("knn_k", static_cast<long long>(o.knn_k)));
    const auto trunk = cfg.get_string("classifier_trunk", "cnn");
    if (trunk != "cnn" && trunk != "mlp") {
        throw ConfigError("classifier_trunk must be cnn or mlp, got '" + trunk + "'");
    }
    o.classifier_trunk = trunk == "mlp" ? Trunk::mlp : Trunk::cnn;
    o.use_phase = cfg.get_bool("use_phase", o.use_phase);
    o.window_averaging = cfg.get_bool("window_averaging", o.window_averaging);
    return o;
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::vector<std::string> sets;
    std::optional<std::string> method;
    std::optional<long long> epochs;
    std::optional<long long> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::string> optimizer;
    std::optional<std::uint64_t> seed;
    std::optional<long long> knn_k;
    std::optional<std::string> trunk;
    bool use_phase = false;
    bool no_window_averaging = false;
    bool no_dropout = false;
};

int run_train(const TrainArgs& a, const RunContext& ctx)
{
    KeyValueConfig cfg = a.config.empty() ? KeyValueConfig{} : with_flag("--config", [&] { return KeyValueConfig::load(a.config); });
    apply_overrides(cfg, a.sets);
    if (a.method) cfg.set("method", *a.method);
    if (a.epochs) cfg.set("epochs", std::to_string(*a.epochs));
    if (a.batch_size) cfg.set("batch_size", std::to_string(*a.batch_size));
    if (a.learning_rate) cfg.set("learning_rate", fmt17(*a.learning_rate));
    if (a.optimizer) cfg.set("optimizer", *a.optimizer);
    if (a.seed) cfg.set("seed", std::to_string(*a.seed));
    if (a.knn_k) cfg.set("knn_k", std::to_string(*a.knn_k));
    if (a.trunk) cfg.set("classifier_trunk", *a.trunk);
    if (a.use_phase) cfg.set("use_phase", "true");
    if (a.no_window_averaging) cfg.set("window_averaging", "false");
    if (a.no_dropout) cfg.set("dropout_active", "false");

    const auto options = with_flag(a.config.empty() ? "train options" : "--config " + a.config,
                                   [&] { return options_from_config(cfg); });
    const auto records = load_data(a.data);
    Localizer model(options);
    const auto result = with_flag("--data", [&] { return model.fit(records); });
    model.save(a.out);

    nlohmann::json outputs{{"checkpoint", a.out}, {"epoch_loss", result.epoch_loss}};
    write_manifest(ctx, cfg, {{"config", a.config}, {"dataset", a.data}}, outputs, options.train.seed, a.out, false);
    std::printf("trained %s on %zu records", to_string(options.kind).c_str(), records.size());
    if (!result.epoch_loss.empty()) {
        std::printf(", final epoch loss %.6g", result.epoch_loss.back());
    }
    std::printf("; checkpoint %s\n", a.out.c_str());
    return kExitOk;
}

Localizer load_model(const std::string& path)
{
    return with_flag("--model " + path, [&] { return Localizer::load(path); });
}

int run_predict(const std::string& model_path, const std::string& data, const std::string& out, const RunContext& ctx)
{
    const auto model = load_model(model_path);
    const auto records = load_data(data);
    std::string csv = "index,true_x,true_y,label_x,label_y,pred_x,pred_y\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const auto p = with_flag("--data", [&] { return model.predict_record(r); });
        csv += std::to_string(i) + "," + fmt17(r.location.x) + "," + fmt17(r.location.y) + "," +
               fmt17(r.label_location.x) + "," + fmt17(r.label_location.y) + "," + fmt17(p.x) + "," + fmt17(p.y) + "\n";
    }
    write_file_atomic(out, csv);
    write_manifest(ctx, {}, {{"model", model_path}, {"dataset", data}}, {{"predictions", out}}, std::nullopt, out, false);
    std::printf("wrote %zu predictions to %s\n", records.size(), out.c_str());
    return kExitOk;
}

int run_evaluate(const std::string& model_path, const std::string& data, const std::string& out, const std::string& tag,
                 std::uint64_t seed, const RunContext& ctx)
{
    const auto model = load_model(model_path);
    const auto records = load_data(data);
    const auto report = with_flag("--data", [&] { return evaluate(model, records, tag, seed); });
    write_report_files(report, out);
    KeyValueConfig cfg;
    cfg.set("tag", tag);
    write_manifest(ctx, cfg, {{"model", model_path}, {"dataset", data}},
                   {{"predictions", (fs::path(out) / "predictions.csv").string()},
                    {"summary", (fs::path(out) / "summary.json").string()},
                    {"cdf", (fs::path(out) / "cdf.csv").string()}},
                   seed, out, true);
    std::printf("%s: %zu test points, mean error %.4f m, median error %.4f m\n", to_string(report.method).c_str(),
                report.per_point_errors.size(), report.mean_error, report.median_error);
    return kExitOk;
}

struct ExperimentArgs {
    std::string scenario;
    std::string out;
    std::string methods;
    std::string seeds;
    std::string method = "cnn_regression";
    std::optional<std::size_t> threads;
    std::vector<std::string> sets;
};

Scenario load_experiment(const ExperimentArgs& a, KeyValueConfig& cfg)
{
    cfg = with_flag("--scenario", [&] { return KeyValueConfig::load(a.scenario); });
    apply_overrides(cfg, a.sets);
    if (!a.methods.empty()) cfg.set("methods", a.methods);
    if (!a.seeds.empty()) cfg.set("seeds", a.seeds);
    return with_flag("--scenario " + a.scenario, [&] { return scenario_from_config(cfg); });
}

int run_compare(const ExperimentArgs& a, const RunContext& ctx)
{
    KeyValueConfig cfg;
    const auto sc = load_experiment(a, cfg);
    const std::size_t threads = a.threads.value_or(worker_threads_from_env());
    const auto table = with_flag("--scenario", [&] { return compare_methods(sc, sc.methods, sc.seeds, threads); });

    fs::create_directories(a.out);
    const fs::path dir(a.out);
    write_file_atomic(dir / "comparison.csv", comparison_csv(table));
    write_file_atomic(dir / "comparison.json", comparison_json(table));
    std::vector<EvalReport> off, at;
    bool diverged = false;
    for (const auto& c : table.cells) {
        if (c.ok) {
            off.push_back(c.off_rp);
            at.push_back(c.at_rp);
        } else {
            diverged = true;
            std::fprintf(stderr, "seed %llu, %s: %s\n", static_cast<unsigned long long>(c.seed),
                         to_string(c.method).c_str(), c.error.c_str());
        }
    }
    write_file_atomic(dir / "predictions_off_rp.csv", report_csv(off));
    write_file_atomic(dir / "predictions_at_rp.csv", report_csv(at));
    write_manifest(ctx, cfg, {{"scenario", a.scenario}},
                   {{"files", {"comparison.csv", "comparison.json", "predictions_off_rp.csv", "predictions_at_rp.csv"}},
                    {"threads", threads}},
                   std::nullopt, dir, true);

    for (const auto& s : table.summary) {
        if (s.runs == 0) {
            std::printf("%-16s runs 0  (every run diverged)\n", to_string(s.method).c_str());
            continue;
        }
        std::printf("%-16s runs %zu  off-RP median %.4f m (sd %.4f)  mean %.4f m\n", to_string(s.method).c_str(), s.runs,
                    s.mean_of_medians, s.std_of_medians, s.mean_of_means);
    }
    return diverged ? kExitDiverged : kExitOk;
}

int run_ablate(const ExperimentArgs& a, const RunContext& ctx)
{
    KeyValueConfig cfg;
    const auto sc = load_experiment(a, cfg);
    const auto method = with_flag("--method", [&] { return parse_localizer_kind(a.method); });
    cfg.set("ablation_method", a.method);
    const std::size_t threads = a.threads.value_or(worker_threads_from_env());
    const auto table = with_flag("--method", [&] { return ablate_augmentation(sc, method, sc.seeds, threads); });

    fs::create_directories(a.out);
    const fs::path dir(a.out);
    write_file_atomic(dir / "ablation.csv", ablation_csv(table));
    write_file_atomic(dir / "ablation.json", ablation_json(table));
    std::vector<EvalReport> plain, boosted;
    bool diverged = false;
    for (const auto& r : table.rows) {
        if (r.ok) {
            plain.push_back(r.unaugmented);
            boosted.push_back(r.augmented);
            std::printf("seed %llu  median %.4f m -> %.4f m  (ratio %.4f)\n", static_cast<unsigned long long>(r.seed),
                        r.unaugmented_median, r.augmented_median, r.ratio);
        } else {
            diverged = true;
            std::fprintf(stderr, "seed %llu: %s\n", static_cast<unsigned long long>(r.seed), r.error.c_str());
        }
    }
    write_file_atomic(dir / "predictions_unaugmented.csv", report_csv(plain));
    write_file_atomic(dir / "predictions_augmented.csv", report_csv(boosted));
    write_manifest(ctx, cfg, {{"scenario", a.scenario}},
                   {{"files", {"ablation.csv", "ablation.json", "predictions_unaugmented.csv", "predictions_augmented.csv"}},
                    {"threads", threads}},
                   std::nullopt, dir, true);
    return diverged ? kExitDiverged : kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Wi-Fi CSI fingerprint localization: simulation, training and evaluation"};
    app.set_version_flag("--version", std::string(CSILOC_VERSION));
    app.require_subcommand(1);

    RunContext ctx;
    ctx.argv.assign(argv, argv + argc);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Scene config -> dataset file");
    simulate->add_option("--scene", sim.scene, "Scene config file (key = value)")->check(CLI::ExistingFile);
    simulate->add_option("--packets", sim.packets, "Packets per location")->check(CLI::PositiveNumber);
    simulate->add_option("--points", sim.points, "Locations file, one 'x, y' per line (default: RP grid)");
    simulate->add_option("--seed", sim.seed, "Scene seed (overrides the config file)");
    simulate->add_option("--set", sim.sets, "Override a scene key: key=value");
    simulate->add_option("--out", sim.out, "Output dataset")->required();

    std::string cal_data, cal_out;
    auto* calibrate = app.add_subcommand("calibrate", "Dataset -> dataset with calibrated phases");
    calibrate->add_option("--data", cal_data, "Input dataset")->required();
    calibrate->add_option("--out", cal_out, "Output dataset")->required();

    AugmentArgs aug;
    auto* augment = app.add_subcommand("augment", "Scene + dataset -> augmented dataset");
    augment->add_option("--scene", aug.scene, "Scene config the dataset was simulated with")->required()->check(CLI::ExistingFile);
    augment->add_option("--data", aug.data, "Input dataset")->required();
    augment->add_option("--out", aug.out, "Output dataset")->required();
    augment->add_option("--samples-per-rp", aug.samples_per_rp, "Perturbed samples per RP");
    augment->add_option("--radius", aug.radius, "Perturbation radius, meters");
    augment->add_option("--packets", aug.packets, "Packets per perturbed sample");
    augment->add_option("--alpha", aug.alpha, "Fine-tuning coefficient in [-1, 1]");
    augment->add_option("--seed", aug.seed, "Augmentation seed");
    augment->add_option("--set", aug.sets, "Override a scene key: key=value");

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Dataset + method + train config -> checkpoint");
    train->add_option("--data", tr.data, "Training dataset")->required();
    train->add_option("--out", tr.out, "Output checkpoint")->required();
    train->add_option("--config", tr.config, "Training config file (key = value)")->check(CLI::ExistingFile);
    train->add_option("--method", tr.method, "mlp_regression | cnn_regression | classification | knn");
    train->add_option("--epochs", tr.epochs, "Training epochs");
    train->add_option("--batch-size", tr.batch_size, "Mini-batch size");
    train->add_option("--lr", tr.learning_rate, "Learning rate");
    train->add_option("--optimizer", tr.optimizer, "adam | sgd_momentum");
    train->add_option("--seed", tr.seed, "Training seed");
    train->add_option("--knn-k", tr.knn_k, "Neighbours for knn");
    train->add_option("--trunk", tr.trunk, "Classifier trunk: cnn | mlp");
    train->add_flag("--use-phase", tr.use_phase, "Append calibrated phase to MLP features");
    train->add_flag("--no-window-averaging", tr.no_window_averaging, "Predict from the first window only");
    train->add_flag("--no-dropout", tr.no_dropout, "Disable dropout during training");
    train->add_option("--set", tr.sets, "Override a training key: key=value");

    std::string pr_model, pr_data, pr_out;
    auto* predict = app.add_subcommand("predict", "Checkpoint + dataset -> predictions CSV");
    predict->add_option("--model", pr_model, "Checkpoint")->required();
    predict->add_option("--data", pr_data, "Dataset")->required();
    predict->add_option("--out", pr_out, "Output CSV")->required();

    std::string ev_model, ev_data, ev_out, ev_tag = "evaluation";
    std::uint64_t ev_seed = 0;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Checkpoint + dataset -> report files");
    evaluate_cmd->add_option("--model", ev_model, "Checkpoint")->required();
    evaluate_cmd->add_option("--data", ev_data, "Test dataset")->required();
    evaluate_cmd->add_option("--out", ev_out, "Output directory")->required();
    evaluate_cmd->add_option("--tag", ev_tag, "Scenario tag written into the report");
    evaluate_cmd->add_option("--seed", ev_seed, "Seed recorded in the report");

    ExperimentArgs cmp;
    auto* compare = app.add_subcommand("compare", "Scenario file -> comparison table");
    compare->add_option("--scenario", cmp.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    compare->add_option("--out", cmp.out, "Output directory")->required();
    compare->add_option("--methods", cmp.methods, "Comma-separated methods (overrides the scenario)");
    compare->add_option("--seeds", cmp.seeds, "Comma-separated seeds (overrides the scenario)");
    compare->add_option("--threads", cmp.threads, "Worker threads (default: CSI_LOC_THREADS or 1)")->check(CLI::PositiveNumber);
    compare->add_option("--set", cmp.sets, "Override a scenario key: key=value");

    ExperimentArgs abl;
    auto* ablate = app.add_subcommand("ablate-augment", "Scenario file -> augmentation ablation table");
    ablate->add_option("--scenario", abl.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    ablate->add_option("--out", abl.out, "Output directory")->required();
    ablate->add_option("--method", abl.method, "Regression method to ablate");
    ablate->add_option("--seeds", abl.seeds, "Comma-separated seeds (overrides the scenario)");
    ablate->add_option("--threads", abl.threads, "Worker threads (default: CSI_LOC_THREADS or 1)")->check(CLI::PositiveNumber);
    ablate->add_option("--set", abl.sets, "Override a scenario key: key=value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (simulate->parsed()) {
            ctx.subcommand = "simulate";
            return run_simulate(sim, ctx);
        }
        if (calibrate->parsed()) {
            ctx.subcommand = "calibrate";
            return run_calibrate(cal_data, cal_out, ctx);
        }
        if (augment->parsed()) {
            ctx.subcommand = "augment";
            return run_augment(aug, ctx);
        }
        if (train->parsed()) {
            ctx.subcommand = "train";
            return run_train(tr, ctx);
        }
        if (predict->parsed()) {
            ctx.subcommand = "predict";
            return run_predict(pr_model, pr_data, pr_out, ctx);
        }
        if (evaluate_cmd->parsed()) {
            ctx.subcommand = "evaluate";
            return run_evaluate(ev_model, ev_data, ev_out, ev_tag, ev_seed, ctx);
        }
        if (compare->parsed()) {
            ctx.subcommand = "compare";
            return run_compare(cmp, ctx);
        }
        if (ablate->parsed()) {
            ctx.subcommand = "ablate-augment";
            return run_ablate(abl, ctx);
        }
    } catch (const FlagError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code;
    } catch (const TrainingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDiverged;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
