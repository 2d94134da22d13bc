// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csiloc/augment.hpp"
#include "csiloc/channel_sim.hpp"
#include "csiloc/localizers.hpp"

namespace csiloc {

struct ErrorSummary {
    double mean = 0.0;
    double median = 0.0;                        // lower-middle element for even counts
    std::vector<std::pair<double, double>> cdf; // (error threshold, fraction <= threshold) at each distinct error
};

/// Throws DomainError on an empty or negative error list.
ErrorSummary summarize_errors(std::span<const double> errors);

struct EvalReport {
    std::vector<Point2> true_locations;
    std::vector<Point2> predictions;
    std::vector<double> per_point_errors;
    double mean_error = 0.0;
    double median_error = 0.0;
    std::vector<std::pair<double, double>> cdf;
    LocalizerKind method = LocalizerKind::cnn_regression;
    std::string scenario_tag;
    std::uint64_t seed = 0;
};

/// Errors are measured against each record's true location, never its label.
EvalReport evaluate(const Localizer& model, std::span<const FingerprintRecord> test_records,
                    const std::string& scenario_tag = "", std::uint64_t seed = 0);

/// One row per test point: seed,method,true_x,true_y,pred_x,pred_y,error (17 significant digits).
std::string report_csv(std::span<const EvalReport> reports);
std::string report_json(const EvalReport& report);
/// Two columns: error,fraction.
std::string cdf_csv(const EvalReport& report);
/// Writes predictions.csv, summary.json and cdf.csv into `dir` (created if needed).
void write_report_files(const EvalReport& report, const std::filesystem::path& dir);

// --- experiment protocol ---------------------------------------------------------------------

struct Protocol {
    std::size_t train_packets = 240;
    std::size_t test_packets = 60;
    bool test_midpoints = true;        // midpoints between horizontally/vertically adjacent RPs
    std::size_t test_random_points = 10; // uniform inside the RP grid rectangle
    std::size_t test_outside_points = 0; // uniform in a band outside the RP grid, inside the room
    double outside_margin = 0.6;
    bool vary_environment = true;      // derive the scene seed from the run seed
    nn::TrainConfig train;
    std::size_t knn_k = 3;
    Trunk classifier_trunk = Trunk::cnn;
    AugmentConfig augment;
};

struct Scenario {
    std::string tag = "scenario";
    SceneConfig scene;
    Protocol protocol;
    std::vector<LocalizerKind> methods;
    std::vector<std::uint64_t> seeds;
};

Scenario scenario_from_config(const KeyValueConfig& cfg);
Scenario load_scenario(const std::filesystem::path& path);

/// Scene used for run `seed`.
SceneConfig scene_for_seed(const Scenario& scenario, std::uint64_t seed);
/// Off-RP test locations for run `seed`: midpoints, random interior points, outside points.
std::vector<Point2> off_rp_test_points(const Scenario& scenario, std::uint64_t seed);

/// Training data for run `seed`: one record per RP with `train_packets` packets.
std::vector<FingerprintRecord> training_records(const Scenario& scenario, std::uint64_t seed);
/// Test records for run `seed`. Their packet indices start after the training packets so test
/// bursts never replay training noise.
std::vector<FingerprintRecord> test_records(const Scenario& scenario, std::uint64_t seed, std::span<const Point2> points);

LocalizerOptions method_options(const Scenario& scenario, LocalizerKind method, std::uint64_t seed);

struct MethodCell {
    LocalizerKind method = LocalizerKind::cnn_regression;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    EvalReport off_rp;
    EvalReport at_rp;
};

struct MethodSummary {
    LocalizerKind method = LocalizerKind::cnn_regression;
    std::size_t runs = 0;
    double mean_of_medians = 0.0;
    double std_of_medians = 0.0;
    double mean_of_means = 0.0;
};

struct ComparisonTable {
    std::string scenario_tag;
    std::vector<MethodCell> cells; // ordered by seed, then method list order
    std::vector<MethodSummary> summary;

    const MethodCell* find(LocalizerKind method, std::uint64_t seed) const;
};

/// Trains every method on identical data per seed and evaluates on held-out points. Training
/// failures are recorded per cell. Seeds run on up to `threads` workers; results do not depend
/// on the worker count.
ComparisonTable compare_methods(const Scenario& scenario, std::span<const LocalizerKind> methods,
                                std::span<const std::uint64_t> seeds, std::size_t threads = 1);

struct AblationRow {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double unaugmented_median = 0.0;
    double augmented_median = 0.0;
    double ratio = 0.0; // augmented / unaugmented
    EvalReport unaugmented;
    EvalReport augmented;
};

struct AblationTable {
    std::string scenario_tag;
    LocalizerKind method = LocalizerKind::cnn_regression;
    std::vector<AblationRow> rows; // ordered by seed
};

/// Trains `method` with and without augmentation on otherwise identical data.
AblationTable ablate_augmentation(const Scenario& scenario, LocalizerKind method, std::span<const std::uint64_t> seeds,
                                  std::size_t threads = 1);

std::string comparison_csv(const ComparisonTable& table);
std::string comparison_json(const ComparisonTable& table);
std::string ablation_csv(const AblationTable& table);
std::string ablation_json(const AblationTable& table);

/// Worker count from CSI_LOC_THREADS (default 1, minimum 1).
std::size_t worker_threads_from_env();

} // namespace csiloc
