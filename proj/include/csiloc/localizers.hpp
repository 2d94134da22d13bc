// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csiloc/csi_data.hpp"
#include "csiloc/geometry.hpp"
#include "csiloc/nn.hpp"

namespace csiloc {

enum class LocalizerKind : std::uint8_t { mlp_regression = 0, cnn_regression = 1, classification = 2, knn = 3 };

std::string to_string(LocalizerKind kind);
LocalizerKind parse_localizer_kind(const std::string& text);

/// Network trunk shared by the regressors and the classification baseline.
enum class Trunk : std::uint8_t { mlp = 0, cnn = 1 };

/// Ordered reference-point coordinates; the class index of an RP is its position here.
struct RpCodebook {
    std::vector<Point2> rp_locations;

    /// Distinct label locations of `records`, in order of first appearance.
    static RpCodebook from_labels(std::span<const FingerprintRecord> records);

    std::size_t size() const { return rp_locations.size(); }
    /// Throws DomainError when `p` is not a codebook entry.
    std::size_t index_of(Point2 p) const;
    /// Throws DomainError on an empty codebook or duplicate points.
    void validate() const;
};

/// 90 -> FC256+ReLU (x3) -> FC256+ReLU+Dropout(0.3) -> FC2 linear.
nn::Network build_mlp_regressor();
/// 3x30x30 -> Conv16 3x3+ReLU (x2) -> Conv16 3x3+ReLU+MaxPool -> FC64+ReLU+Dropout(0.3) -> FC2 linear.
nn::Network build_cnn_regressor();
/// Regressor trunk with the head replaced by FC -> N_RP + softmax. Needs at least 2 RPs.
nn::Network build_classifier(const RpCodebook& codebook, Trunk trunk = Trunk::cnn);

/// Probability-weighted mean of the RP coordinates, p^T L_RP.
Point2 fuse_class_probabilities(std::span<const double> p, const RpCodebook& codebook);

/// Per-RP mean flat amplitude fingerprints.
struct KnnIndex {
    RpCodebook codebook;
    std::vector<std::vector<double>> fingerprints; // one per codebook entry
};

KnnIndex knn_fit(std::span<const FingerprintRecord> records);
/// Codebook indices of the k nearest fingerprints (Euclidean); ties go to the lower index.
std::vector<std::size_t> knn_neighbors(const KnnIndex& index, std::span<const double> features, std::size_t k);
/// Unweighted mean of the k nearest RP coordinates.
Point2 knn_query(const KnnIndex& index, std::span<const double> features, std::size_t k);

/// Affine standardization of model inputs, one (mean, scale) pair per (antenna, subcarrier)
/// slot, or per flat index for the flat180 layout.
struct FeatureTransform {
    std::vector<double> mean;
    std::vector<double> scale;

    static FeatureTransform fit(FeatureLayout layout, std::span<const FeatureTensor> samples);
    void apply(FeatureLayout layout, std::span<double> values) const;
};

struct LocalizerOptions {
    LocalizerKind kind = LocalizerKind::cnn_regression;
    Trunk classifier_trunk = Trunk::cnn;
    nn::TrainConfig train;
    std::size_t knn_k = 3;
    bool window_averaging = true; // average predictions over all windows of a burst
    bool use_phase = false;       // flat layouts only: append calibrated phase (flat180)
};

/// One interface over the four localization methods.
class Localizer {
public:
    explicit Localizer(LocalizerOptions options = {});

    /// Trains on `records`. Regression targets are the records' label locations; the classifier and
    /// KNN use the distinct label locations as their codebook. For augmented records the distance
    /// between true and label location enters the reported loss through the alpha term.
    nn::TrainResult fit(std::span<const FingerprintRecord> records);

    bool fitted() const { return fitted_; }
    LocalizerKind kind() const { return options_.kind; }
    const LocalizerOptions& options() const { return options_; }
    FeatureLayout layout() const;
    const RpCodebook& codebook() const { return codebook_; }
    const nn::Network& network() const { return network_; }

    /// Location estimate for a list of windows of one burst (averaged when window averaging is
    /// on, otherwise the first window). KNN averages the feature windows before the query.
    Point2 predict(std::span<const FeatureTensor> windows) const;
    Point2 predict_record(const FingerprintRecord& record) const;

    /// Softmax output of the classifier for one window.
    std::vector<double> class_probabilities(const FeatureTensor& window) const;

    /// "NNM1" network checkpoint followed by a "LOC1" block with the localizer metadata.
    std::vector<std::uint8_t> encode() const;
    static Localizer decode(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static Localizer load(const std::filesystem::path& path);

private:
    std::vector<double> prepared_input(const FeatureTensor& window) const;
    Point2 predict_window(const FeatureTensor& window) const;
    void require_fitted() const;

    LocalizerOptions options_;
    bool fitted_ = false;
    nn::Network network_;
    RpCodebook codebook_;
    Point2 label_mean_;
    FeatureTransform transform_;
    KnnIndex knn_;
};

} // namespace csiloc
