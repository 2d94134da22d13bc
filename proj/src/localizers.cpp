// SPDX-License-Identifier: Apache-2.0

#include "csiloc/localizers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csiloc/binary_io.hpp"
#include "csiloc/errors.hpp"

namespace csiloc {

using nn::LayerSpec;

std::string to_string(LocalizerKind kind)
{
    switch (kind) {
    case LocalizerKind::mlp_regression: return "mlp_regression";
    case LocalizerKind::cnn_regression: return "cnn_regression";
    case LocalizerKind::classification: return "classification";
    case LocalizerKind::knn: return "knn";
    }
    return "unknown";
}

LocalizerKind parse_localizer_kind(const std::string& text)
{
    if (text == "mlp_regression") return LocalizerKind::mlp_regression;
    if (text == "cnn_regression") return LocalizerKind::cnn_regression;
    if (text == "classification") return LocalizerKind::classification;
    if (text == "knn") return LocalizerKind::knn;
    throw ConfigError("unknown localization method '" + text + "'");
}

// --- codebook ----------------------------------------------------------------------------------

RpCodebook RpCodebook::from_labels(std::span<const FingerprintRecord> records)
{
    RpCodebook cb;
    for (const auto& rec : records) {
        if (std::find(cb.rp_locations.begin(), cb.rp_locations.end(), rec.label_location) == cb.rp_locations.end()) {
            cb.rp_locations.push_back(rec.label_location);
        }
    }
    return cb;
}

std::size_t RpCodebook::index_of(Point2 p) const
{
    const auto it = std::find(rp_locations.begin(), rp_locations.end(), p);
    if (it == rp_locations.end()) {
        throw DomainError("location is not a reference point of the codebook");
    }
    return static_cast<std::size_t>(it - rp_locations.begin());
}

void RpCodebook::validate() const
{
    if (rp_locations.empty()) {
        throw DomainError("RP codebook is empty");
    }
    for (std::size_t i = 0; i < rp_locations.size(); ++i) {
        for (std::size_t j = i + 1; j < rp_locations.size(); ++j) {
            if (rp_locations[i] == rp_locations[j]) {
                throw DomainError("RP codebook contains duplicate points");
            }
        }
    }
}

// --- architectures -----------------------------------------------------------------------------

namespace {

std::vector<LayerSpec> mlp_trunk()
{
    return {
        LayerSpec::fully_connected(90, 256), LayerSpec::relu(),
        LayerSpec::fully_connected(256, 256), LayerSpec::relu(),
        LayerSpec::fully_connected(256, 256), LayerSpec::relu(),
        LayerSpec::fully_connected(256, 256), LayerSpec::relu(), LayerSpec::dropout(0.3),
    };
}

std::vector<LayerSpec> cnn_trunk()
{
    return {
        LayerSpec::conv2d(3, 16), LayerSpec::relu(),
        LayerSpec::conv2d(16, 16), LayerSpec::relu(),
        LayerSpec::conv2d(16, 16), LayerSpec::relu(), LayerSpec::max_pool(),
        LayerSpec::fully_connected(16 * 15 * 15, 64), LayerSpec::relu(), LayerSpec::dropout(0.3),
    };
}

std::vector<std::size_t> trunk_input(Trunk t)
{
    return t == Trunk::mlp ? std::vector<std::size_t>{90} : std::vector<std::size_t>{3, 30, 30};
}

std::size_t trunk_width(Trunk t)
{
    return t == Trunk::mlp ? 256 : 64;
}

Trunk trunk_of(LocalizerKind kind, Trunk classifier_trunk)
{
    switch (kind) {
    case LocalizerKind::mlp_regression: return Trunk::mlp;
    case LocalizerKind::cnn_regression: return Trunk::cnn;
    default: return classifier_trunk;
    }
}

} // namespace

nn::Network build_mlp_regressor()
{
    auto specs = mlp_trunk();
    specs.push_back(LayerSpec::linear_output(256, 2));
    return nn::Network(trunk_input(Trunk::mlp), std::move(specs));
}

nn::Network build_cnn_regressor()
{
    auto specs = cnn_trunk();
    specs.push_back(LayerSpec::linear_output(64, 2));
    return nn::Network(trunk_input(Trunk::cnn), std::move(specs));
}

nn::Network build_classifier(const RpCodebook& codebook, Trunk trunk)
{
    codebook.validate();
    if (codebook.size() < 2) {
        throw DomainError("classification needs at least 2 reference points");
    }
    auto specs = trunk == Trunk::mlp ? mlp_trunk() : cnn_trunk();
    specs.push_back(LayerSpec::linear_output(trunk_width(trunk), codebook.size()));
    specs.push_back(LayerSpec::softmax_output());
    return nn::Network(trunk_input(trunk), std::move(specs));
}

Point2 fuse_class_probabilities(std::span<const double> p, const RpCodebook& codebook)
{
    if (p.size() != codebook.size()) {
        throw DomainError("fuse: " + std::to_string(p.size()) + " probabilities for " + std::to_string(codebook.size()) +
                          " reference points");
    }
    Point2 fused;
    for (std::size_t j = 0; j < p.size(); ++j) {
        fused = fused + p[j] * codebook.rp_locations[j];
    }
    return fused;
}

// --- KNN ---------------------------------------------------------------------------------------

KnnIndex knn_fit(std::span<const FingerprintRecord> records)
{
    if (records.empty()) {
        throw DomainError("knn_fit: no records");
    }
    KnnIndex index;
    index.codebook = RpCodebook::from_labels(records);
    const std::size_t n_rp = index.codebook.size();
    index.fingerprints.assign(n_rp, std::vector<double>(feature_size(FeatureLayout::flat90), 0.0));
    std::vector<std::size_t> counts(n_rp, 0);
    for (const auto& rec : records) {
        const std::size_t c = index.codebook.index_of(rec.label_location);
        for (const auto& sym : rec.symbols) {
            const auto f = assemble_flat(to_polar(sym));
            for (std::size_t i = 0; i < f.values.size(); ++i) {
                index.fingerprints[c][i] += f.values[i];
            }
            ++counts[c];
        }
    }
    for (std::size_t c = 0; c < n_rp; ++c) {
        for (auto& v : index.fingerprints[c]) {
            v /= static_cast<double>(counts[c]);
        }
    }
    return index;
}

std::vector<std::size_t> knn_neighbors(const KnnIndex& index, std::span<const double> features, std::size_t k)
{
    const std::size_t n = index.fingerprints.size();
    if (k < 1 || k > n) {
        throw DomainError("knn: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    }
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t c = 0; c < n; ++c) {
        const auto& fp = index.fingerprints[c];
        if (fp.size() != features.size()) {
            throw DomainError("knn: query has " + std::to_string(features.size()) + " features, index has " +
                              std::to_string(fp.size()));
        }
        double d = 0.0;
        for (std::size_t i = 0; i < fp.size(); ++i) {
            const double diff = fp[i] - features[i];
            d += diff * diff;
        }
        dist[c] = {d, c};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = dist[i].second;
    }
    return out;
}

Point2 knn_query(const KnnIndex& index, std::span<const double> features, std::size_t k)
{
    Point2 sum;
    for (std::size_t c : knn_neighbors(index, features, k)) {
        sum = sum + index.codebook.rp_locations[c];
    }
    return (1.0 / static_cast<double>(k)) * sum;
}

// --- feature transform -------------------------------------------------------------------------

namespace {

// Statistic slot of flat value index i.
std::size_t slot_of(FeatureLayout layout, std::size_t i)
{
    return layout == FeatureLayout::block_3x30x30 ? i / kBlockPackets : i;
}

std::size_t slot_count(FeatureLayout layout)
{
    return layout == FeatureLayout::flat180 ? feature_size(layout) : kFeatureAntennas * kFeatureSubcarriers;
}

} // namespace

FeatureTransform FeatureTransform::fit(FeatureLayout layout, std::span<const FeatureTensor> samples)
{
    const std::size_t slots = slot_count(layout);
    std::vector<double> sum(slots, 0.0);
    std::vector<double> sum_sq(slots, 0.0);
    std::vector<double> count(slots, 0.0);
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            const std::size_t k = slot_of(layout, i);
            sum[k] += s.values[i];
            count[k] += 1.0;
        }
    }
    FeatureTransform t;
    t.mean.resize(slots);
    t.scale.resize(slots);
    for (std::size_t k = 0; k < slots; ++k) {
        t.mean[k] = count[k] > 0.0 ? sum[k] / count[k] : 0.0;
    }
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            const std::size_t k = slot_of(layout, i);
            const double d = s.values[i] - t.mean[k];
            sum_sq[k] += d * d;
        }
    }
    for (std::size_t k = 0; k < slots; ++k) {
        const double sd = count[k] > 0.0 ? std::sqrt(sum_sq[k] / count[k]) : 0.0;
        t.scale[k] = sd > 1e-300 ? sd : 1.0;
    }
    return t;
}

void FeatureTransform::apply(FeatureLayout layout, std::span<double> values) const
{
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::size_t k = slot_of(layout, i);
        values[i] = (values[i] - mean[k]) / scale[k];
    }
}

// --- Localizer ---------------------------------------------------------------------------------

Localizer::Localizer(LocalizerOptions options) : options_(std::move(options)) {}

FeatureLayout Localizer::layout() const
{
    if (options_.kind == LocalizerKind::knn) {
        return FeatureLayout::flat90;
    }
    if (trunk_of(options_.kind, options_.classifier_trunk) == Trunk::cnn) {
        return FeatureLayout::block_3x30x30;
    }
    return options_.use_phase ? FeatureLayout::flat180 : FeatureLayout::flat90;
}

nn::TrainResult Localizer::fit(std::span<const FingerprintRecord> records)
{
    if (records.empty()) {
        throw DomainError("fit: no training records");
    }
    fitted_ = false;
    options_.train.validate();

    if (options_.kind == LocalizerKind::knn) {
        knn_ = knn_fit(records);
        codebook_ = knn_.codebook;
        if (options_.knn_k < 1 || options_.knn_k > codebook_.size()) {
            throw DomainError("knn: k = " + std::to_string(options_.knn_k) + " outside [1, " +
                              std::to_string(codebook_.size()) + "]");
        }
        fitted_ = true;
        return {};
    }

    const FeatureLayout lay = layout();
    const bool classify = options_.kind == LocalizerKind::classification;
    const Trunk trunk = trunk_of(options_.kind, options_.classifier_trunk);

    std::vector<FeatureTensor> samples;
    std::vector<std::size_t> owner; // record index of each sample
    for (std::size_t r = 0; r < records.size(); ++r) {
        auto f = record_features(records[r], lay);
        for (auto& t : f) {
            samples.push_back(std::move(t));
            owner.push_back(r);
        }
    }
    if (samples.empty()) {
        throw DomainError("fit: records yield no complete feature windows for layout " + to_string(lay));
    }

    codebook_ = RpCodebook::from_labels(records);
    if (classify) {
        network_ = build_classifier(codebook_, trunk);
    } else {
        network_ = trunk == Trunk::cnn ? build_cnn_regressor() : build_mlp_regressor();
        if (lay == FeatureLayout::flat180) {
            auto specs = std::vector<LayerSpec>{};
            for (std::size_t i = 0; i < network_.layer_count(); ++i) {
                specs.push_back(network_.layer(i).spec);
            }
            specs.front().fan_in = feature_size(lay);
            network_ = nn::Network({feature_size(lay)}, std::move(specs));
        }
    }
    network_.initialize(options_.train.seed);

    transform_ = FeatureTransform::fit(lay, samples);

    nn::TrainingSet data;
    data.sample_shape = network_.input_shape();
    const std::size_t sample_size = nn::shape_size(data.sample_shape);
    data.inputs.reserve(samples.size() * sample_size);
    for (auto& s : samples) {
        transform_.apply(lay, s.values);
        data.inputs.insert(data.inputs.end(), s.values.begin(), s.values.end());
    }

    nn::TrainResult result;
    if (classify) {
        data.classes.reserve(samples.size());
        for (std::size_t r : owner) {
            data.classes.push_back(codebook_.index_of(records[r].label_location));
        }
        result = nn::train(network_, data, nn::LossKind::cross_entropy, options_.train);
    } else {
        Point2 mean;
        for (std::size_t r : owner) {
            mean = mean + records[r].label_location;
        }
        label_mean_ = (1.0 / static_cast<double>(owner.size())) * mean;
        data.target_dim = 2;
        data.targets.reserve(2 * owner.size());
        data.perturbation_norms.reserve(owner.size());
        for (std::size_t r : owner) {
            const Point2 t = records[r].label_location - label_mean_;
            data.targets.push_back(t.x);
            data.targets.push_back(t.y);
            data.perturbation_norms.push_back(distance(records[r].location, records[r].label_location));
        }
        result = nn::train(network_, data, nn::LossKind::augmented_mde, options_.train);
    }
    fitted_ = true;
    return result;
}

void Localizer::require_fitted() const
{
    if (!fitted_) {
        throw StateError("localizer (" + to_string(options_.kind) + ") has not been fitted");
    }
}

std::vector<double> Localizer::prepared_input(const FeatureTensor& window) const
{
    if (window.layout != layout()) {
        throw DomainError("feature layout " + to_string(window.layout) + " does not match model layout " +
                          to_string(layout()));
    }
    if (window.values.size() != feature_size(window.layout)) {
        throw DomainError("feature tensor has " + std::to_string(window.values.size()) + " values, expected " +
                          std::to_string(feature_size(window.layout)));
    }
    std::vector<double> x = window.values;
    transform_.apply(window.layout, x);
    return x;
}

std::vector<double> Localizer::class_probabilities(const FeatureTensor& window) const
{
    require_fitted();
    if (options_.kind != LocalizerKind::classification) {
        throw StateError("class probabilities are only defined for the classification localizer");
    }
    return network_.forward(nn::Tensor(network_.input_shape(), prepared_input(window))).values;
}

Point2 Localizer::predict_window(const FeatureTensor& window) const
{
    if (options_.kind == LocalizerKind::classification) {
        return fuse_class_probabilities(class_probabilities(window), codebook_);
    }
    const auto out = network_.forward(nn::Tensor(network_.input_shape(), prepared_input(window)));
    return label_mean_ + Point2{out[0], out[1]};
}

Point2 Localizer::predict(std::span<const FeatureTensor> windows) const
{
    require_fitted();
    if (windows.empty()) {
        throw DomainError("predict: no feature windows");
    }
    const std::size_t used = options_.window_averaging ? windows.size() : 1;

    if (options_.kind == LocalizerKind::knn) {
        std::vector<double> mean(windows.front().values.size(), 0.0);
        for (std::size_t w = 0; w < used; ++w) {
            if (windows[w].layout != FeatureLayout::flat90 || windows[w].values.size() != mean.size()) {
                throw DomainError("knn expects flat90 amplitude features");
            }
            for (std::size_t i = 0; i < mean.size(); ++i) {
                mean[i] += windows[w].values[i];
            }
        }
        for (auto& v : mean) {
            v /= static_cast<double>(used);
        }
        return knn_query(knn_, mean, options_.knn_k);
    }

    Point2 sum;
    for (std::size_t w = 0; w < used; ++w) {
        sum = sum + predict_window(windows[w]);
    }
    return (1.0 / static_cast<double>(used)) * sum;
}

Point2 Localizer::predict_record(const FingerprintRecord& record) const
{
    require_fitted();
    const auto windows = record_features(record, layout());
    if (windows.empty()) {
        throw DomainError("record has too few packets for layout " + to_string(layout()));
    }
    return predict(windows);
}

// --- checkpoint --------------------------------------------------------------------------------

std::vector<std::uint8_t> Localizer::encode() const
{
    require_fitted();
    ByteWriter w;
    w.put_bytes("NNM1");
    w.put(nn::kCheckpointVersion);
    network_.save(w);

    w.put_bytes("LOC1");
    w.put(static_cast<std::uint8_t>(options_.kind));
    w.put(static_cast<std::uint8_t>(options_.classifier_trunk));
    w.put(static_cast<std::uint8_t>(layout()));
    w.put(static_cast<std::uint8_t>(options_.window_averaging ? 1 : 0));
    w.put(static_cast<std::uint8_t>(options_.use_phase ? 1 : 0));
    w.put(static_cast<std::uint32_t>(options_.knn_k));
    w.put(static_cast<std::uint32_t>(codebook_.size()));
    for (const auto& p : codebook_.rp_locations) {
        w.put(p.x);
        w.put(p.y);
    }
    w.put(label_mean_.x);
    w.put(label_mean_.y);
    w.put(static_cast<std::uint32_t>(transform_.mean.size()));
    for (std::size_t i = 0; i < transform_.mean.size(); ++i) {
        w.put(transform_.mean[i]);
        w.put(transform_.scale[i]);
    }
    w.put(static_cast<std::uint32_t>(knn_.fingerprints.size()));
    w.put(static_cast<std::uint32_t>(knn_.fingerprints.empty() ? 0 : knn_.fingerprints.front().size()));
    for (const auto& fp : knn_.fingerprints) {
        for (double v : fp) {
            w.put(v);
        }
    }
    return w.take();
}

Localizer Localizer::decode(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    r.expect_magic("NNM1");
    const std::size_t version_at = r.offset();
    if (const auto v = r.get<std::uint16_t>("version"); v != nn::kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(v), version_at);
    }
    Localizer loc;
    loc.network_ = nn::Network::load(r);

    r.expect_magic("LOC1");
    const std::size_t kind_at = r.offset();
    const auto kind = r.get<std::uint8_t>("localizer kind");
    if (kind > static_cast<std::uint8_t>(LocalizerKind::knn)) {
        throw ParseError("unknown localizer kind " + std::to_string(kind), kind_at);
    }
    loc.options_.kind = static_cast<LocalizerKind>(kind);
    const std::size_t trunk_at = r.offset();
    const auto trunk = r.get<std::uint8_t>("trunk");
    if (trunk > static_cast<std::uint8_t>(Trunk::cnn)) {
        throw ParseError("unknown trunk " + std::to_string(trunk), trunk_at);
    }
    loc.options_.classifier_trunk = static_cast<Trunk>(trunk);
    const std::size_t layout_at = r.offset();
    const auto layout = r.get<std::uint8_t>("feature layout");
    loc.options_.window_averaging = r.get<std::uint8_t>("window averaging") != 0;
    loc.options_.use_phase = r.get<std::uint8_t>("use phase") != 0;
    if (layout > static_cast<std::uint8_t>(FeatureLayout::block_3x30x30) ||
        static_cast<FeatureLayout>(layout) != loc.layout()) {
        throw ParseError("feature layout tag inconsistent with localizer kind", layout_at);
    }
    loc.options_.knn_k = r.get<std::uint32_t>("knn k");
    const auto n_rp = r.get<std::uint32_t>("codebook size");
    for (std::uint32_t i = 0; i < n_rp; ++i) {
        const double x = r.get<double>("codebook x");
        const double y = r.get<double>("codebook y");
        loc.codebook_.rp_locations.push_back({x, y});
    }
    loc.label_mean_.x = r.get<double>("label mean x");
    loc.label_mean_.y = r.get<double>("label mean y");
    const auto n_slots = r.get<std::uint32_t>("transform size");
    for (std::uint32_t i = 0; i < n_slots; ++i) {
        loc.transform_.mean.push_back(r.get<double>("transform mean"));
        loc.transform_.scale.push_back(r.get<double>("transform scale"));
    }
    const auto n_fp = r.get<std::uint32_t>("knn fingerprint count");
    const auto fp_dim = r.get<std::uint32_t>("knn fingerprint size");
    for (std::uint32_t i = 0; i < n_fp; ++i) {
        std::vector<double> fp(fp_dim);
        for (auto& v : fp) {
            v = r.get<double>("knn fingerprint value");
        }
        loc.knn_.fingerprints.push_back(std::move(fp));
    }
    if (r.remaining() != 0) {
        throw ParseError("trailing bytes after localizer block", r.offset());
    }
    if (loc.options_.kind == LocalizerKind::knn) {
        loc.knn_.codebook = loc.codebook_;
    }
    loc.fitted_ = true;
    return loc;
}

void Localizer::save(const std::filesystem::path& path) const
{
    write_file_atomic(path, encode());
}

Localizer Localizer::load(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    try {
        return decode(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.detail(), e.offset());
    }
}

} // namespace csiloc
