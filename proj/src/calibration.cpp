// SPDX-License-Identifier: Apache-2.0

#include "csiloc/calibration.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "csiloc/errors.hpp"
#include "csiloc/ofdm.hpp"

namespace csiloc {

void unwrap_phase(std::span<double> phase)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t i = 1; i < phase.size(); ++i) {
        double d = phase[i] - phase[i - 1];
        // bring d into (-pi, pi]
        d -= two_pi * std::ceil((d - std::numbers::pi) / two_pi);
        phase[i] = phase[i - 1] + d;
    }
}

CalibrationResult calibrate_phase(const PolarCsi& polar, std::span<const int> fft_bins)
{
    const std::size_t n_rx = polar.phase.rows();
    const std::size_t n_sc = polar.phase.cols();
    if (n_sc < 2) {
        throw DomainError("phase calibration needs at least 2 subcarriers");
    }
    if (fft_bins.size() != n_sc) {
        throw DomainError("phase calibration: " + std::to_string(fft_bins.size()) + " FFT bins for " +
                          std::to_string(n_sc) + " subcarriers");
    }
    for (std::size_t i = 1; i < fft_bins.size(); ++i) {
        if (fft_bins[i] <= fft_bins[i - 1]) {
            throw DomainError("phase calibration: FFT bins must be strictly increasing");
        }
    }

    double bin_mean = 0.0;
    for (int b : fft_bins) {
        bin_mean += b;
    }
    bin_mean /= static_cast<double>(n_sc);
    const double bin_span = static_cast<double>(fft_bins.back() - fft_bins.front());

    CalibrationResult result;
    result.calibrated_phase = RealGrid(n_rx, n_sc);
    std::vector<double> unwrapped(n_sc);
    for (std::size_t r = 0; r < n_rx; ++r) {
        const auto row = polar.phase.row(r);
        unwrapped.assign(row.begin(), row.end());
        unwrap_phase(unwrapped);

        const double slope = (unwrapped.back() - unwrapped.front()) / bin_span;
        double mean = 0.0;
        for (double v : unwrapped) {
            mean += v;
        }
        mean /= static_cast<double>(n_sc);
        const double intercept = mean - slope * bin_mean;

        auto out = result.calibrated_phase.row(r);
        for (std::size_t i = 0; i < n_sc; ++i) {
            out[i] = unwrapped[i] - slope * fft_bins[i] - intercept;
        }
        result.slope_estimate += slope;
        result.offset_estimate += intercept;
    }
    if (n_rx > 0) {
        result.slope_estimate /= static_cast<double>(n_rx);
        result.offset_estimate /= static_cast<double>(n_rx);
    }
    return result;
}

std::vector<FingerprintRecord> calibrate_dataset(std::span<const FingerprintRecord> records)
{
    std::vector<FingerprintRecord> out(records.begin(), records.end());
    for (auto& rec : out) {
        for (auto& sym : rec.symbols) {
            const auto bins = subcarrier_fft_bins(static_cast<int>(sym.entries.cols()));
            const auto polar = to_polar(sym);
            const auto cal = calibrate_phase(polar, bins);
            auto h = sym.entries.values();
            for (std::size_t i = 0; i < h.size(); ++i) {
                h[i] = std::polar(polar.amplitude.values()[i], cal.calibrated_phase.values()[i]);
            }
        }
    }
    return out;
}

} // namespace csiloc
