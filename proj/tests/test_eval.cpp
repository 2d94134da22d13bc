// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "csiloc/errors.hpp"
#include "csiloc/eval.hpp"
#include "csiloc/geometry.hpp"
#include "eval_oracle.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace csiloc;

namespace {

Scenario quick_scenario()
{
    Scenario sc;
    sc.tag = "quick";
    sc.scene.noise_std = 2e-4;
    sc.protocol.train_packets = 4;
    sc.protocol.test_packets = 2;
    sc.protocol.test_random_points = 3;
    sc.protocol.train.epochs = 2;
    sc.protocol.classifier_trunk = Trunk::mlp;
    sc.protocol.augment.packets_per_sample = 2;
    sc.methods = {LocalizerKind::mlp_regression, LocalizerKind::knn};
    sc.seeds = {1, 2};
    return sc;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(Summaries, MeanLowerMedianAndCdf)
{
    const std::vector<double> e{4.0, 1.0, 3.0, 2.0};
    const auto s = summarize_errors(e);
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.median, 2.0);
    ASSERT_EQ(s.cdf.size(), 4u);
    EXPECT_EQ(s.cdf.front(), (std::pair<double, double>{1.0, 0.25}));
    EXPECT_EQ(s.cdf.back(), (std::pair<double, double>{4.0, 1.0}));

    const std::vector<double> zeros(5, 0.0);
    const auto z = summarize_errors(zeros);
    EXPECT_EQ(z.mean, 0.0);
    EXPECT_EQ(z.median, 0.0);
    ASSERT_EQ(z.cdf.size(), 1u);
    EXPECT_EQ(z.cdf[0], (std::pair<double, double>{0.0, 1.0}));
    EXPECT_THROW(summarize_errors(std::vector<double>{}), DomainError);
    EXPECT_THROW(summarize_errors(std::vector<double>{1.0, -1.0}), DomainError);
}

TEST(Summaries, CdfIsADistributionFunction)
{
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> e(1 + rng.below(40));
        for (auto& v : e) {
            v = std::round(rng.uniform(0.0, 5.0) * 4.0) / 4.0; // repeated values
        }
        const auto s = summarize_errors(e);
        for (std::size_t i = 1; i < s.cdf.size(); ++i) {
            EXPECT_GT(s.cdf[i].first, s.cdf[i - 1].first);
            EXPECT_GT(s.cdf[i].second, s.cdf[i - 1].second);
        }
        EXPECT_EQ(s.cdf.back().second, 1.0);
        for (const auto& [x, f] : s.cdf) {
            const auto below = std::count_if(e.begin(), e.end(), [&](double v) { return v <= x; });
            EXPECT_DOUBLE_EQ(f, static_cast<double>(below) / e.size());
        }
    }
}

TEST(Evaluate, UsesTrueLocationsAndMatchesRecomputation)
{
    const auto sc = quick_scenario();
    const auto train = training_records(sc, 1);
    Localizer model(method_options(sc, LocalizerKind::knn, 1));
    model.fit(train);

    // an augmented-style record whose label differs from where it was measured
    auto rec = train[0];
    rec.label_location = train[5].location;
    const std::vector<FingerprintRecord> test{rec};
    const auto r = evaluate(model, test);
    EXPECT_EQ(r.per_point_errors[0], distance(model.predict_record(rec), rec.location));

    const auto points = off_rp_test_points(sc, 1);
    const auto off = test_records(sc, 1, points);
    const auto report = evaluate(model, off, sc.tag, 1);
    const auto oracle = csiloc::testkit::recompute_from_csv(report_csv(std::span(&report, 1)));
    ASSERT_EQ(oracle.errors.size(), report.per_point_errors.size());
    for (std::size_t i = 0; i < oracle.errors.size(); ++i) {
        EXPECT_NEAR(oracle.errors[i], report.per_point_errors[i], 1e-12);
        EXPECT_EQ(oracle.dumped_errors[i], report.per_point_errors[i]);
    }
    EXPECT_NEAR(oracle.mean, report.mean_error, 1e-12);
    EXPECT_NEAR(oracle.median, report.median_error, 1e-12);
}

TEST(Evaluate, ReportFilesAgreeWithReport)
{
    const auto sc = quick_scenario();
    Localizer model(method_options(sc, LocalizerKind::knn, 2));
    model.fit(training_records(sc, 2));
    const auto points = off_rp_test_points(sc, 2);
    const auto report = evaluate(model, test_records(sc, 2, points), sc.tag, 2);
    csiloc::testkit::TempDir dir("eval");
    write_report_files(report, dir.path() / "out");
    const auto summary = nlohmann::json::parse(slurp(dir.path() / "out" / "summary.json"));
    EXPECT_EQ(summary["median_error"].get<double>(), report.median_error);
    EXPECT_EQ(summary["method"].get<std::string>(), "knn");
    const auto oracle = csiloc::testkit::recompute_from_csv(slurp(dir.path() / "out" / "predictions.csv"));
    EXPECT_NEAR(oracle.median, report.median_error, 1e-12);
    const auto cdf = slurp(dir.path() / "out" / "cdf.csv");
    EXPECT_EQ(cdf.rfind("error,fraction\n", 0), 0u);
}

TEST(Protocol, OffRpPointsAvoidRpsAndStayInRoom)
{
    auto sc = quick_scenario();
    sc.protocol.test_outside_points = 6;
    const auto pts = off_rp_test_points(sc, 3);
    ASSERT_EQ(pts.size(), 22u + 3u + 6u);
    const auto rps = sc.scene.rp_locations();
    const auto hull = convex_hull(rps);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_TRUE(sc.scene.contains(pts[i]));
        EXPECT_EQ(std::find(rps.begin(), rps.end(), pts[i]), rps.end());
        if (i < 22) {
            double nearest = INFINITY;
            for (const auto& r : rps) {
                nearest = std::min(nearest, distance(r, pts[i]));
            }
            EXPECT_NEAR(nearest, 0.6, 1e-12);
        }
        if (i >= 25) {
            EXPECT_GT(signed_distance_to_hull(hull, pts[i]), 0.0);
        }
    }
    EXPECT_EQ(off_rp_test_points(sc, 3), pts);
}

TEST(Protocol, TestBurstsDoNotReuseTrainingPackets)
{
    const auto sc = quick_scenario();
    const auto rps = sc.scene.rp_locations();
    const auto train = training_records(sc, 1);
    const auto test = test_records(sc, 1, std::span(rps).first(1));
    EXPECT_EQ(test[0].symbols.front().packet_index, sc.protocol.train_packets);
    EXPECT_NE(test[0].symbols.front().entries, train[0].symbols.front().entries);
}

TEST(Scenario, FileKeysAndErrors)
{
    const auto cfg = KeyValueConfig::parse("tag = t\nmethods = knn, classification\nseeds = 3, 9\nnoise_std = 0.5\n"
                                           "epochs = 7\noptimizer = sgd_momentum\naugment_samples_per_rp = 4\n");
    const auto sc = scenario_from_config(cfg);
    EXPECT_EQ(sc.tag, "t");
    EXPECT_EQ(sc.methods, (std::vector<LocalizerKind>{LocalizerKind::knn, LocalizerKind::classification}));
    EXPECT_EQ(sc.seeds, (std::vector<std::uint64_t>{3, 9}));
    EXPECT_EQ(sc.scene.noise_std, 0.5);
    EXPECT_EQ(sc.protocol.train.epochs, 7u);
    EXPECT_EQ(sc.protocol.train.optimizer, nn::Optimizer::sgd_momentum);
    EXPECT_EQ(sc.protocol.augment.samples_per_rp, 4u);
    EXPECT_THROW(scenario_from_config(KeyValueConfig::parse("epoch = 3\n")), ConfigError);
    EXPECT_THROW(scenario_from_config(KeyValueConfig::parse("methods = svm, knn\n")), ConfigError);
}

TEST(CompareMethods, DuplicateMethodsAndThreadCountGiveIdenticalCells)
{
    const auto sc = quick_scenario();
    const std::vector<LocalizerKind> methods{LocalizerKind::mlp_regression, LocalizerKind::mlp_regression,
                                             LocalizerKind::knn};
    const auto one = compare_methods(sc, methods, sc.seeds, 1);
    const auto two = compare_methods(sc, methods, sc.seeds, 2);
    ASSERT_EQ(one.cells.size(), 6u);
    for (std::size_t i = 0; i < one.cells.size(); ++i) {
        EXPECT_TRUE(one.cells[i].ok);
        EXPECT_EQ(one.cells[i].off_rp.per_point_errors, two.cells[i].off_rp.per_point_errors);
    }
    EXPECT_EQ(one.cells[0].off_rp.predictions, one.cells[1].off_rp.predictions);
    EXPECT_EQ(comparison_csv(one), comparison_csv(two));
    EXPECT_EQ(one.summary.size(), 2u);
    EXPECT_NE(one.find(LocalizerKind::knn, 2), nullptr);
    const auto j = nlohmann::json::parse(comparison_json(one));
    EXPECT_EQ(j["cells"].size(), 6u);
    EXPECT_THROW(compare_methods(sc, std::span(methods).first(1), sc.seeds), DomainError);
}

TEST(CompareMethods, ClassificationErrorBoundedByHullDistance)
{
    auto sc = quick_scenario();
    sc.protocol.test_outside_points = 5;
    sc.protocol.test_random_points = 0;
    sc.protocol.test_midpoints = false;
    const std::vector<LocalizerKind> methods{LocalizerKind::classification, LocalizerKind::knn};
    const std::vector<std::uint64_t> seeds{4};
    const auto t = compare_methods(sc, methods, seeds);
    const auto* cell = t.find(LocalizerKind::classification, 4);
    ASSERT_TRUE(cell && cell->ok);
    const auto hull = convex_hull(sc.scene.rp_locations());
    for (std::size_t i = 0; i < cell->off_rp.per_point_errors.size(); ++i) {
        const double gap = signed_distance_to_hull(hull, cell->off_rp.true_locations[i]);
        ASSERT_GT(gap, 0.0);
        EXPECT_GE(cell->off_rp.per_point_errors[i], gap - 1e-9);
    }
}

TEST(Ablation, ZeroSamplesGivesIdenticalArmsAndRatioContract)
{
    auto sc = quick_scenario();
    sc.protocol.augment.samples_per_rp = 0;
    const std::vector<std::uint64_t> seeds{1};
    const auto t = ablate_augmentation(sc, LocalizerKind::mlp_regression, seeds);
    ASSERT_TRUE(t.rows[0].ok);
    EXPECT_EQ(t.rows[0].augmented.per_point_errors, t.rows[0].unaugmented.per_point_errors);
    EXPECT_EQ(t.rows[0].ratio, 1.0);

    sc.protocol.augment.samples_per_rp = 2;
    const auto u = ablate_augmentation(sc, LocalizerKind::mlp_regression, seeds);
    ASSERT_TRUE(u.rows[0].ok);
    EXPECT_NEAR(u.rows[0].ratio, u.rows[0].augmented_median / u.rows[0].unaugmented_median, 1e-12);
    EXPECT_NE(ablation_csv(u).find("mlp_regression"), std::string::npos);
    EXPECT_EQ(nlohmann::json::parse(ablation_json(u))["rows"].size(), 1u);
    EXPECT_THROW(ablate_augmentation(sc, LocalizerKind::knn, seeds), DomainError);
}
