// SPDX-License-Identifier: Apache-2.0

#include "csiloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "csiloc/binary_io.hpp"
#include "csiloc/errors.hpp"
#include "csiloc/rng.hpp"

namespace csiloc {

namespace {

std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) {
            out.push_back(item.substr(b, e - b + 1));
        }
    }
    return out;
}

// Runs job(i) for i in [0, n) on up to `threads` workers.
template <typename Job>
void run_indexed(std::size_t n, std::size_t threads, Job job)
{
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            job(i);
        }
        return;
    }
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i;
                {
                    std::lock_guard lock(m);
                    if (next >= n) {
                        return;
                    }
                    i = next++;
                }
                job(i);
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
}

} // namespace

ErrorSummary summarize_errors(std::span<const double> errors)
{
    if (errors.empty()) {
        throw DomainError("summarize_errors: no errors");
    }
    std::vector<double> sorted(errors.begin(), errors.end());
    for (double e : sorted) {
        if (!(e >= 0.0)) {
            throw DomainError("summarize_errors: errors must be non-negative");
        }
    }
    std::sort(sorted.begin(), sorted.end());
    ErrorSummary s;
    double sum = 0.0;
    for (double e : errors) {
        sum += e;
    }
    s.mean = sum / static_cast<double>(errors.size());
    s.median = sorted[(sorted.size() - 1) / 2];
    const double n = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 == sorted.size() || sorted[i + 1] != sorted[i]) {
            s.cdf.emplace_back(sorted[i], static_cast<double>(i + 1) / n);
        }
    }
    return s;
}

EvalReport evaluate(const Localizer& model, std::span<const FingerprintRecord> test_records,
                    const std::string& scenario_tag, std::uint64_t seed)
{
    if (test_records.empty()) {
        throw DomainError("evaluate: no test records");
    }
    EvalReport report;
    report.method = model.kind();
    report.scenario_tag = scenario_tag;
    report.seed = seed;
    for (const auto& rec : test_records) {
        const Point2 pred = model.predict_record(rec);
        report.true_locations.push_back(rec.location);
        report.predictions.push_back(pred);
        report.per_point_errors.push_back(distance(pred, rec.location));
    }
    auto s = summarize_errors(report.per_point_errors);
    report.mean_error = s.mean;
    report.median_error = s.median;
    report.cdf = std::move(s.cdf);
    return report;
}

std::string report_csv(std::span<const EvalReport> reports)
{
    std::string out = "seed,method,true_x,true_y,pred_x,pred_y,error\n";
    for (const auto& r : reports) {
        for (std::size_t i = 0; i < r.per_point_errors.size(); ++i) {
            out += std::to_string(r.seed) + "," + to_string(r.method) + "," + fmt17(r.true_locations[i].x) + "," +
                   fmt17(r.true_locations[i].y) + "," + fmt17(r.predictions[i].x) + "," + fmt17(r.predictions[i].y) +
                   "," + fmt17(r.per_point_errors[i]) + "\n";
        }
    }
    return out;
}

namespace {

nlohmann::json report_summary(const EvalReport& r)
{
    return {
        {"method", to_string(r.method)},
        {"scenario_tag", r.scenario_tag},
        {"seed", r.seed},
        {"points", r.per_point_errors.size()},
        {"mean_error", r.mean_error},
        {"median_error", r.median_error},
    };
}

} // namespace

std::string report_json(const EvalReport& report)
{
    auto j = report_summary(report);
    j["per_point_errors"] = report.per_point_errors;
    auto cdf = nlohmann::json::array();
    for (const auto& [e, f] : report.cdf) {
        cdf.push_back({e, f});
    }
    j["cdf"] = std::move(cdf);
    return j.dump(2) + "\n";
}

std::string cdf_csv(const EvalReport& report)
{
    std::string out = "error,fraction\n";
    for (const auto& [e, f] : report.cdf) {
        out += fmt17(e) + "," + fmt17(f) + "\n";
    }
    return out;
}

void write_report_files(const EvalReport& report, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "predictions.csv", report_csv(std::span(&report, 1)));
    write_file_atomic(dir / "summary.json", report_json(report));
    write_file_atomic(dir / "cdf.csv", cdf_csv(report));
}

// --- scenarios -------------------------------------------------------------------------------

Scenario scenario_from_config(const KeyValueConfig& cfg)
{
    std::set<std::string> known(scene_keys().begin(), scene_keys().end());
    known.insert({"tag", "methods", "seeds", "train_packets", "test_packets", "test_midpoints",
                  "test_random_points", "test_outside_points", "outside_margin", "vary_environment", "epochs",
                  "batch_size", "learning_rate", "optimizer", "dropout_active", "knn_k", "classifier_trunk",
                  "augment_samples_per_rp", "augment_radius", "augment_packets", "alpha"});
    cfg.reject_unknown(known);

    Scenario s;
    s.tag = cfg.get_string("tag", s.tag);
    s.scene = scene_from_config(cfg);
    auto& p = s.protocol;
    p.train_packets = static_cast<std::size_t>(cfg.get_int("train_packets", static_cast<long long>(p.train_packets)));
    p.test_packets = static_cast<std::size_t>(cfg.get_int("test_packets", static_cast<long long>(p.test_packets)));
    p.test_midpoints = cfg.get_bool("test_midpoints", p.test_midpoints);
    p.test_random_points =
        static_cast<std::size_t>(cfg.get_int("test_random_points", static_cast<long long>(p.test_random_points)));
    p.test_outside_points =
        static_cast<std::size_t>(cfg.get_int("test_outside_points", static_cast<long long>(p.test_outside_points)));
    p.outside_margin = cfg.get_double("outside_margin", p.outside_margin);
    p.vary_environment = cfg.get_bool("vary_environment", p.vary_environment);
    p.train.epochs = static_cast<std::size_t>(cfg.get_int("epochs", static_cast<long long>(p.train.epochs)));
    p.train.batch_size = static_cast<std::size_t>(cfg.get_int("batch_size", static_cast<long long>(p.train.batch_size)));
    p.train.learning_rate = cfg.get_double("learning_rate", p.train.learning_rate);
    p.train.optimizer = nn::parse_optimizer(cfg.get_string("optimizer", nn::to_string(p.train.optimizer)));
    p.train.dropout_active = cfg.get_bool("dropout_active", p.train.dropout_active);
    p.train.alpha = cfg.get_double("alpha", p.train.alpha);
    p.knn_k = static_cast<std::size_t>(cfg.get_int("knn_k", static_cast<long long>(p.knn_k)));
    const auto trunk = cfg.get_string("classifier_trunk", "cnn");
    if (trunk != "cnn" && trunk != "mlp") {
        throw ConfigError(cfg.source() + ": classifier_trunk must be 'cnn' or 'mlp'");
    }
    p.classifier_trunk = trunk == "cnn" ? Trunk::cnn : Trunk::mlp;
    p.augment.samples_per_rp =
        static_cast<std::size_t>(cfg.get_int("augment_samples_per_rp", static_cast<long long>(p.augment.samples_per_rp)));
    p.augment.perturbation_radius = cfg.get_double("augment_radius", p.augment.perturbation_radius);
    p.augment.packets_per_sample =
        static_cast<std::size_t>(cfg.get_int("augment_packets", static_cast<long long>(p.augment.packets_per_sample)));
    p.augment.alpha = p.train.alpha;
    p.train.validate();
    p.augment.validate(s.scene.rp_spacing);
    if (p.train_packets < 1 || p.test_packets < 1) {
        throw ConfigError(cfg.source() + ": train_packets and test_packets must be >= 1");
    }

    for (const auto& m : split_list(cfg.get_string("methods", "cnn_regression, classification"))) {
        s.methods.push_back(parse_localizer_kind(m));
    }
    for (const auto& v : split_list(cfg.get_string("seeds", "1, 2, 3, 4, 5"))) {
        KeyValueConfig one;
        one.set("seed", v);
        s.seeds.push_back(one.get_u64("seed", 0));
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    return scenario_from_config(KeyValueConfig::load(path));
}

SceneConfig scene_for_seed(const Scenario& scenario, std::uint64_t seed)
{
    SceneConfig scene = scenario.scene;
    if (scenario.protocol.vary_environment) {
        scene.seed = derive_seed(scenario.scene.seed, seed);
    }
    return scene;
}

std::vector<Point2> off_rp_test_points(const Scenario& scenario, std::uint64_t seed)
{
    const auto& sc = scenario.scene;
    const auto& p = scenario.protocol;
    std::vector<Point2> pts;
    if (p.test_midpoints) {
        for (int r = 0; r < sc.rp_rows; ++r) {
            for (int c = 0; c + 1 < sc.rp_cols; ++c) {
                pts.push_back({sc.rp_grid_origin.x + (c + 0.5) * sc.rp_spacing, sc.rp_grid_origin.y + r * sc.rp_spacing});
            }
        }
        for (int r = 0; r + 1 < sc.rp_rows; ++r) {
            for (int c = 0; c < sc.rp_cols; ++c) {
                pts.push_back({sc.rp_grid_origin.x + c * sc.rp_spacing, sc.rp_grid_origin.y + (r + 0.5) * sc.rp_spacing});
            }
        }
    }
    const double x0 = sc.rp_grid_origin.x;
    const double y0 = sc.rp_grid_origin.y;
    const double x1 = x0 + (sc.rp_cols - 1) * sc.rp_spacing;
    const double y1 = y0 + (sc.rp_rows - 1) * sc.rp_spacing;
    Rng rng(derive_seed(seed, std::uint64_t{0x74657374}));
    for (std::size_t i = 0; i < p.test_random_points; ++i) {
        pts.push_back({rng.uniform(x0, x1), rng.uniform(y0, y1)});
    }
    // Outside points: rejection-sample the margin band around the grid, kept inside the room.
    const double m = p.outside_margin;
    std::size_t added = 0;
    for (std::size_t attempt = 0; added < p.test_outside_points && attempt < 100000; ++attempt) {
        const Point2 q{rng.uniform(x0 - m, x1 + m), rng.uniform(y0 - m, y1 + m)};
        const bool outside_grid = q.x < x0 || q.x > x1 || q.y < y0 || q.y > y1;
        if (outside_grid && sc.contains(q)) {
            pts.push_back(q);
            ++added;
        }
    }
    return pts;
}

std::vector<FingerprintRecord> training_records(const Scenario& scenario, std::uint64_t seed)
{
    const auto scene = scene_for_seed(scenario, seed);
    const auto rps = scene.rp_locations();
    return generate_dataset(scene, scenario.protocol.train_packets, rps);
}

std::vector<FingerprintRecord> test_records(const Scenario& scenario, std::uint64_t seed, std::span<const Point2> points)
{
    const auto scene = scene_for_seed(scenario, seed);
    const auto first = static_cast<std::uint32_t>(scenario.protocol.train_packets);
    std::vector<FingerprintRecord> out;
    out.reserve(points.size());
    for (const auto& loc : points) {
        FingerprintRecord rec;
        rec.location = loc;
        rec.label_location = loc;
        for (std::size_t k = 0; k < scenario.protocol.test_packets; ++k) {
            rec.symbols.push_back(sample_csi(scene, loc, first + static_cast<std::uint32_t>(k)).first);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

LocalizerOptions method_options(const Scenario& scenario, LocalizerKind method, std::uint64_t seed)
{
    LocalizerOptions o;
    o.kind = method;
    o.classifier_trunk = scenario.protocol.classifier_trunk;
    o.train = scenario.protocol.train;
    o.train.seed = derive_seed(seed, std::uint64_t{0x747261696e});
    o.knn_k = scenario.protocol.knn_k;
    return o;
}

const MethodCell* ComparisonTable::find(LocalizerKind method, std::uint64_t seed) const
{
    for (const auto& c : cells) {
        if (c.method == method && c.seed == seed) {
            return &c;
        }
    }
    return nullptr;
}

ComparisonTable compare_methods(const Scenario& scenario, std::span<const LocalizerKind> methods,
                                std::span<const std::uint64_t> seeds, std::size_t threads)
{
    if (methods.size() < 2) {
        throw DomainError("compare_methods needs at least 2 methods");
    }
    if (seeds.empty()) {
        throw DomainError("compare_methods needs at least 1 seed");
    }
    ComparisonTable table;
    table.scenario_tag = scenario.tag;
    table.cells.resize(seeds.size() * methods.size());

    run_indexed(seeds.size(), threads, [&](std::size_t si) {
        const std::uint64_t seed = seeds[si];
        const auto train = training_records(scenario, seed);
        const auto off_points = off_rp_test_points(scenario, seed);
        const auto off = test_records(scenario, seed, off_points);
        const auto at_points = scene_for_seed(scenario, seed).rp_locations();
        const auto at = test_records(scenario, seed, at_points);
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            MethodCell& cell = table.cells[si * methods.size() + mi];
            cell.method = methods[mi];
            cell.seed = seed;
            try {
                Localizer model(method_options(scenario, methods[mi], seed));
                model.fit(train);
                cell.off_rp = evaluate(model, off, scenario.tag, seed);
                cell.at_rp = evaluate(model, at, scenario.tag, seed);
                cell.ok = true;
            } catch (const TrainingError& e) {
                cell.error = e.what();
            }
        }
    });

    for (const auto method : methods) {
        if (std::any_of(table.summary.begin(), table.summary.end(), [&](const auto& s) { return s.method == method; })) {
            continue;
        }
        MethodSummary s;
        s.method = method;
        std::vector<double> medians;
        double means = 0.0;
        for (const auto& c : table.cells) {
            if (c.method == method && c.ok) {
                medians.push_back(c.off_rp.median_error);
                means += c.off_rp.mean_error;
            }
        }
        s.runs = medians.size();
        if (!medians.empty()) {
            double sum = 0.0;
            for (double m : medians) {
                sum += m;
            }
            s.mean_of_medians = sum / static_cast<double>(medians.size());
            s.mean_of_means = means / static_cast<double>(medians.size());
            double var = 0.0;
            for (double m : medians) {
                var += (m - s.mean_of_medians) * (m - s.mean_of_medians);
            }
            s.std_of_medians = medians.size() > 1 ? std::sqrt(var / static_cast<double>(medians.size() - 1)) : 0.0;
        }
        table.summary.push_back(s);
    }
    return table;
}

AblationTable ablate_augmentation(const Scenario& scenario, LocalizerKind method, std::span<const std::uint64_t> seeds,
                                  std::size_t threads)
{
    if (method != LocalizerKind::mlp_regression && method != LocalizerKind::cnn_regression) {
        throw DomainError("augmentation ablation needs a regression method, got " + to_string(method));
    }
    AblationTable table;
    table.scenario_tag = scenario.tag;
    table.method = method;
    table.rows.resize(seeds.size());

    run_indexed(seeds.size(), threads, [&](std::size_t si) {
        const std::uint64_t seed = seeds[si];
        AblationRow& row = table.rows[si];
        row.seed = seed;
        const auto scene = scene_for_seed(scenario, seed);
        const auto base = training_records(scenario, seed);
        AugmentConfig aug = scenario.protocol.augment;
        aug.seed = derive_seed(seed, std::uint64_t{0x6175676d});
        const auto augmented = augment_dataset(scene, base, aug);
        const auto points = off_rp_test_points(scenario, seed);
        const auto test = test_records(scenario, seed, points);
        try {
            Localizer plain(method_options(scenario, method, seed));
            plain.fit(base);
            row.unaugmented = evaluate(plain, test, scenario.tag, seed);

            Localizer boosted(method_options(scenario, method, seed));
            boosted.fit(augmented);
            row.augmented = evaluate(boosted, test, scenario.tag, seed);

            row.unaugmented_median = row.unaugmented.median_error;
            row.augmented_median = row.augmented.median_error;
            row.ratio = row.augmented_median / row.unaugmented_median;
            row.ok = true;
        } catch (const TrainingError& e) {
            row.error = e.what();
        }
    });
    return table;
}

std::string comparison_csv(const ComparisonTable& table)
{
    std::string out = "seed,method,ok,off_rp_mean,off_rp_median,at_rp_mean,at_rp_median,error\n";
    for (const auto& c : table.cells) {
        out += std::to_string(c.seed) + "," + to_string(c.method) + "," + (c.ok ? "1" : "0") + "," +
               (c.ok ? fmt17(c.off_rp.mean_error) + "," + fmt17(c.off_rp.median_error) + "," + fmt17(c.at_rp.mean_error) +
                           "," + fmt17(c.at_rp.median_error)
                     : std::string(",,,")) +
               ",\"" + c.error + "\"\n";
    }
    return out;
}

std::string comparison_json(const ComparisonTable& table)
{
    nlohmann::json j;
    j["scenario_tag"] = table.scenario_tag;
    auto& cells = j["cells"] = nlohmann::json::array();
    for (const auto& c : table.cells) {
        nlohmann::json cell = {{"seed", c.seed}, {"method", to_string(c.method)}, {"ok", c.ok}};
        if (c.ok) {
            cell["off_rp"] = report_summary(c.off_rp);
            cell["at_rp"] = report_summary(c.at_rp);
        } else {
            cell["error"] = c.error;
        }
        cells.push_back(std::move(cell));
    }
    auto& summary = j["summary"] = nlohmann::json::array();
    for (const auto& s : table.summary) {
        summary.push_back({{"method", to_string(s.method)},
                           {"runs", s.runs},
                           {"mean_of_off_rp_medians", s.mean_of_medians},
                           {"std_of_off_rp_medians", s.std_of_medians},
                           {"mean_of_off_rp_means", s.mean_of_means}});
    }
    return j.dump(2) + "\n";
}

std::string ablation_csv(const AblationTable& table)
{
    std::string out = "seed,method,ok,unaugmented_median,augmented_median,ratio,error\n";
    for (const auto& r : table.rows) {
        out += std::to_string(r.seed) + "," + to_string(table.method) + "," + (r.ok ? "1" : "0") + "," +
               (r.ok ? fmt17(r.unaugmented_median) + "," + fmt17(r.augmented_median) + "," + fmt17(r.ratio)
                     : std::string(",,")) +
               ",\"" + r.error + "\"\n";
    }
    return out;
}

std::string ablation_json(const AblationTable& table)
{
    nlohmann::json j;
    j["scenario_tag"] = table.scenario_tag;
    j["method"] = to_string(table.method);
    auto& rows = j["rows"] = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json row = {{"seed", r.seed}, {"ok", r.ok}};
        if (r.ok) {
            row["unaugmented_median"] = r.unaugmented_median;
            row["augmented_median"] = r.augmented_median;
            row["ratio"] = r.ratio;
        } else {
            row["error"] = r.error;
        }
        rows.push_back(std::move(row));
    }
    return j.dump(2) + "\n";
}

std::size_t worker_threads_from_env()
{
    const char* v = std::getenv("CSI_LOC_THREADS");
    if (!v || !*v) {
        return 1;
    }
    const long n = std::strtol(v, nullptr, 10);
    return n < 1 ? 1 : static_cast<std::size_t>(n);
}

} // namespace csiloc
