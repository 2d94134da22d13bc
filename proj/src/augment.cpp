// SPDX-License-Identifier: Apache-2.0

#include "csiloc/augment.hpp"

#include <cmath>
#include <numbers>

#include "csiloc/errors.hpp"
#include "csiloc/localizers.hpp"
#include "csiloc/rng.hpp"

namespace csiloc {

void AugmentConfig::validate(double rp_spacing) const
{
    if (!(perturbation_radius > 0.0)) {
        throw ConfigError("perturbation_radius must be > 0");
    }
    if (!(perturbation_radius < rp_spacing / 4.0)) {
        throw ConfigError("perturbation_radius " + std::to_string(perturbation_radius) +
                          " m must be below a quarter of the RP spacing (" + std::to_string(rp_spacing / 4.0) + " m)");
    }
    if (!(alpha >= -1.0 && alpha <= 1.0)) {
        throw ConfigError("alpha must lie in [-1, 1]");
    }
    if (packets_per_sample < 1) {
        throw ConfigError("packets_per_sample must be >= 1");
    }
}

std::vector<FingerprintRecord> augment_dataset(const SceneConfig& scene, std::span<const FingerprintRecord> base,
                                               const AugmentConfig& config)
{
    config.validate(scene.rp_spacing);
    std::vector<FingerprintRecord> out(base.begin(), base.end());
    if (config.samples_per_rp == 0) {
        return out;
    }

    const auto rps = RpCodebook::from_labels(base).rp_locations;
    out.reserve(base.size() + rps.size() * config.samples_per_rp);
    for (std::size_t i = 0; i < rps.size(); ++i) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
        for (std::size_t s = 0; s < config.samples_per_rp; ++s) {
            // sqrt of a uniform radius fraction gives a uniform density over the disk
            const double r = config.perturbation_radius * std::sqrt(rng.uniform());
            const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
            FingerprintRecord rec;
            rec.label_location = rps[i];
            rec.location = rps[i] + Point2{r * std::cos(theta), r * std::sin(theta)};
            rec.symbols.reserve(config.packets_per_sample);
            for (std::size_t k = 0; k < config.packets_per_sample; ++k) {
                rec.symbols.push_back(sample_csi(scene, rec.location, static_cast<std::uint32_t>(k)).first);
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

nn::LossResult augmented_loss(const nn::Tensor& predictions, const nn::Tensor& labels,
                              std::span<const double> perturbation_norms, double alpha)
{
    auto result = nn::mde_loss(predictions, labels);
    const std::size_t batch = predictions.shape[0];
    if (perturbation_norms.size() != batch) {
        throw DomainError("augmented_loss: " + std::to_string(perturbation_norms.size()) +
                          " perturbation norms for a batch of " + std::to_string(batch));
    }
    double sum = 0.0;
    for (double d : perturbation_norms) {
        if (!(d >= 0.0)) {
            throw DomainError("augmented_loss: perturbation norms must be non-negative");
        }
        sum += d;
    }
    result.loss += alpha * sum / static_cast<double>(batch);
    return result;
}

} // namespace csiloc
