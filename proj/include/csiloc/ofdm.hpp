// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

namespace csiloc {

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr int kFftSize = 64;
inline constexpr double kPacketInterval = 0.004; // seconds between packets

/// Signed FFT-bin index of each reported subcarrier slot, strictly increasing.
/// For 30 slots this is the 802.11n 20 MHz grouped report (Ng = 2):
///   -28, -26, ..., -2, -1, 1, 3, ..., 27, 28
/// Other counts use a centered stride-2 grid.
std::vector<int> subcarrier_fft_bins(int n_sc);

} // namespace csiloc
