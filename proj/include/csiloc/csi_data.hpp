// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "csiloc/geometry.hpp"

namespace csiloc {

/// Dense row-major matrix used for per-(antenna, subcarrier) quantities.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return std::span(data_).subspan(r * cols_, cols_); }
    std::span<const T> row(std::size_t r) const { return std::span(data_).subspan(r * cols_, cols_); }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using ComplexGrid = Grid<std::complex<double>>;
using RealGrid = Grid<double>;

/// One OFDM-symbol channel snapshot: entries(antenna, subcarrier slot).
struct CsiSymbol {
    ComplexGrid entries;
    double timestamp = 0.0;     // seconds
    std::uint32_t packet_index = 0;

    friend bool operator==(const CsiSymbol&, const CsiSymbol&) = default;
};

/// A labeled burst of CSI at one location. `label_location` differs from `location` only for
/// augmented records, where `location` is where the CSI was synthesized.
struct FingerprintRecord {
    Point2 location;
    Point2 label_location;
    std::vector<CsiSymbol> symbols;

    bool augmented() const { return !(location == label_location); }

    friend bool operator==(const FingerprintRecord&, const FingerprintRecord&) = default;
};

struct PolarCsi {
    RealGrid amplitude;
    RealGrid phase; // radians, in [-pi, pi)
};

/// Elementwise modulus and principal argument. A zero entry maps to amplitude 0, phase 0.
PolarCsi to_polar(const CsiSymbol& symbol);

enum class FeatureLayout : std::uint8_t {
    flat90 = 0,        // amplitudes, antenna-major
    flat180 = 1,       // amplitudes followed by calibrated phases
    block_3x30x30 = 2, // [antenna][subcarrier][packet] amplitudes
};

std::string to_string(FeatureLayout layout);
FeatureLayout parse_feature_layout(const std::string& text);

inline constexpr std::size_t kFeatureAntennas = 3;
inline constexpr std::size_t kFeatureSubcarriers = 30;
inline constexpr std::size_t kBlockPackets = 30;

/// Number of scalar values held by a tensor of the given layout.
std::size_t feature_size(FeatureLayout layout);
/// Per-sample network input shape for the layout.
std::vector<std::size_t> feature_shape(FeatureLayout layout);

struct FeatureTensor {
    FeatureLayout layout = FeatureLayout::flat90;
    std::vector<double> values;

    /// block_3x30x30 accessor.
    double at(std::size_t antenna, std::size_t subcarrier, std::size_t packet) const
    {
        return values[(antenna * kFeatureSubcarriers + subcarrier) * kBlockPackets + packet];
    }
};

/// Flat feature vector: index = antenna * 30 + subcarrier. With `use_phase`, the phase of `polar`
/// is calibrated and appended (flat180).
FeatureTensor assemble_flat(const PolarCsi& polar, bool use_phase = false);

/// Block feature tensor from exactly 30 consecutive packets (amplitudes only).
FeatureTensor assemble_block(std::span<const PolarCsi> polars);

/// Model inputs for one record: one tensor per packet for flat layouts, or one per disjoint
/// window of 30 consecutive packets for the block layout (a trailing partial window is dropped).
std::vector<FeatureTensor> record_features(const FingerprintRecord& record, FeatureLayout layout);

// ---------------------------------------------------------------------------------------------
// Binary dataset format "CSF1" (little-endian):
//   header : "CSF1" | u16 version=1 | u8 n_rx | u8 n_sc | u32 record_count | u16 reserved=0
//   record : f64 loc_x | f64 loc_y | f64 label_x | f64 label_y | u32 symbol_count
//   symbol : f64 timestamp | u32 packet_index | n_rx*n_sc x (f32 re, f32 im), row-major
// Entries are narrowed to f32 on write.
// ---------------------------------------------------------------------------------------------

inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 14;

std::vector<std::uint8_t> encode_dataset(std::span<const FingerprintRecord> records);
std::vector<FingerprintRecord> decode_dataset(std::span<const std::uint8_t> bytes);

void write_dataset(std::span<const FingerprintRecord> records, const std::filesystem::path& path);
std::vector<FingerprintRecord> read_dataset(const std::filesystem::path& path);

/// Rounds every entry to f32 precision, i.e. the values a dataset file would store.
void quantize_to_file_precision(std::vector<FingerprintRecord>& records);

/// JSON-lines debugging export: one object per record with location, label and
/// per-symbol nested [re, im] arrays.
std::string export_json_lines(std::span<const FingerprintRecord> records);

} // namespace csiloc
