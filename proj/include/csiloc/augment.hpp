// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csiloc/channel_sim.hpp"
#include "csiloc/csi_data.hpp"
#include "csiloc/nn.hpp"

namespace csiloc {

struct AugmentConfig {
    double perturbation_radius = 0.10; // meters
    std::size_t samples_per_rp = 0;
    double alpha = 0.0;                // fine-tuning coefficient in [-1, 1]; affects reported loss only
    std::uint64_t seed = 0;
    std::size_t packets_per_sample = 30;

    /// Throws ConfigError unless 0 < radius < rp_spacing / 4 and alpha in [-1, 1].
    void validate(double rp_spacing) const;
};

/// Perturbation-based augmentation. For every RP (distinct label location of `base`, in order of
/// first appearance) draws `samples_per_rp` offsets uniformly on the disk of the configured
/// radius, synthesizes a burst at RP + offset and labels it with the RP. The base records come
/// first in the output, unchanged.
std::vector<FingerprintRecord> augment_dataset(const SceneConfig& scene, std::span<const FingerprintRecord> base,
                                               const AugmentConfig& config);

/// (1/B) sum_b (||pred_b - label_b|| + alpha * perturbation_b). The alpha term does not depend on
/// the predictions, so the gradient is exactly the MDE gradient.
nn::LossResult augmented_loss(const nn::Tensor& predictions, const nn::Tensor& labels,
                              std::span<const double> perturbation_norms, double alpha);

} // namespace csiloc
