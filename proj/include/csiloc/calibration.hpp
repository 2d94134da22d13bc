// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "csiloc/csi_data.hpp"

namespace csiloc {

struct CalibrationResult {
    RealGrid calibrated_phase;   // radians, unwrapped residual after removing the affine term
    double slope_estimate = 0.0; // radians per FFT bin, averaged over antennas
    double offset_estimate = 0.0; // radians at bin 0, averaged over antennas
};

/// Removes the per-packet phase distortion that is affine in the FFT-bin index (timing lag and
/// common phase offset).
///
/// Per antenna row: unwrap along subcarriers so successive differences lie in (-pi, pi], take the
/// slope through the first and last slot, a = (phi_last - phi_first) / (bin_last - bin_first),
/// and the intercept b = mean(phi_i - a * bin_i). The result is phi_i - a * bin_i - b.
/// With bins symmetric about zero, b is simply the mean unwrapped phase.
///
/// Throws DomainError for fewer than two subcarriers, bins that are not strictly increasing, or a
/// bin count that does not match the phase grid.
CalibrationResult calibrate_phase(const PolarCsi& polar, std::span<const int> fft_bins);

/// Replaces every symbol's phase by its calibrated phase, keeping amplitudes. The FFT bins come
/// from the symbol's subcarrier count.
std::vector<FingerprintRecord> calibrate_dataset(std::span<const FingerprintRecord> records);

/// In-place unwrapping along a sequence.
void unwrap_phase(std::span<double> phase);

} // namespace csiloc
