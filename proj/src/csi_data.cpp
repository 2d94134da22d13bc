// SPDX-License-Identifier: Apache-2.0

#include "csiloc/csi_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"

#include "csiloc/binary_io.hpp"
#include "csiloc/calibration.hpp"
#include "csiloc/errors.hpp"
#include "csiloc/ofdm.hpp"

namespace csiloc {

PolarCsi to_polar(const CsiSymbol& symbol)
{
    const auto& h = symbol.entries;
    PolarCsi polar{RealGrid(h.rows(), h.cols()), RealGrid(h.rows(), h.cols())};
    const auto in = h.values();
    auto amp = polar.amplitude.values();
    auto ph = polar.phase.values();
    for (std::size_t i = 0; i < in.size(); ++i) {
        amp[i] = std::abs(in[i]);
        double p = in[i] == std::complex<double>{} ? 0.0 : std::arg(in[i]);
        if (p >= std::numbers::pi) {
            p = -std::numbers::pi;
        }
        ph[i] = p;
    }
    return polar;
}

std::string to_string(FeatureLayout layout)
{
    switch (layout) {
    case FeatureLayout::flat90: return "flat90";
    case FeatureLayout::flat180: return "flat180";
    case FeatureLayout::block_3x30x30: return "block_3x30x30";
    }
    return "unknown";
}

FeatureLayout parse_feature_layout(const std::string& text)
{
    if (text == "flat90") return FeatureLayout::flat90;
    if (text == "flat180") return FeatureLayout::flat180;
    if (text == "block_3x30x30") return FeatureLayout::block_3x30x30;
    throw ConfigError("unknown feature layout '" + text + "'");
}

std::size_t feature_size(FeatureLayout layout)
{
    switch (layout) {
    case FeatureLayout::flat90: return kFeatureAntennas * kFeatureSubcarriers;
    case FeatureLayout::flat180: return 2 * kFeatureAntennas * kFeatureSubcarriers;
    case FeatureLayout::block_3x30x30: return kFeatureAntennas * kFeatureSubcarriers * kBlockPackets;
    }
    return 0;
}

std::vector<std::size_t> feature_shape(FeatureLayout layout)
{
    if (layout == FeatureLayout::block_3x30x30) {
        return {kFeatureAntennas, kFeatureSubcarriers, kBlockPackets};
    }
    return {feature_size(layout)};
}

namespace {

void require_feature_dims(const RealGrid& g, const char* what)
{
    if (g.rows() != kFeatureAntennas || g.cols() != kFeatureSubcarriers) {
        throw DomainError(std::string(what) + ": expected 3x30 CSI, got " + std::to_string(g.rows()) + "x" +
                          std::to_string(g.cols()));
    }
}

} // namespace

FeatureTensor assemble_flat(const PolarCsi& polar, bool use_phase)
{
    require_feature_dims(polar.amplitude, "assemble_flat");
    FeatureTensor t;
    t.layout = use_phase ? FeatureLayout::flat180 : FeatureLayout::flat90;
    const auto amp = polar.amplitude.values();
    t.values.assign(amp.begin(), amp.end());
    if (use_phase) {
        require_feature_dims(polar.phase, "assemble_flat");
        const auto bins = subcarrier_fft_bins(static_cast<int>(kFeatureSubcarriers));
        const auto cal = calibrate_phase(polar, bins);
        const auto ph = cal.calibrated_phase.values();
        t.values.insert(t.values.end(), ph.begin(), ph.end());
    }
    return t;
}

FeatureTensor assemble_block(std::span<const PolarCsi> polars)
{
    if (polars.size() != kBlockPackets) {
        throw DomainError("assemble_block: expected 30 packets, got " + std::to_string(polars.size()));
    }
    FeatureTensor t;
    t.layout = FeatureLayout::block_3x30x30;
    t.values.resize(feature_size(t.layout));
    for (std::size_t p = 0; p < kBlockPackets; ++p) {
        require_feature_dims(polars[p].amplitude, "assemble_block");
        for (std::size_t c = 0; c < kFeatureAntennas; ++c) {
            for (std::size_t s = 0; s < kFeatureSubcarriers; ++s) {
                t.values[(c * kFeatureSubcarriers + s) * kBlockPackets + p] = polars[p].amplitude(c, s);
            }
        }
    }
    return t;
}

std::vector<FeatureTensor> record_features(const FingerprintRecord& record, FeatureLayout layout)
{
    std::vector<FeatureTensor> out;
    if (layout == FeatureLayout::block_3x30x30) {
        const std::size_t windows = record.symbols.size() / kBlockPackets;
        std::vector<PolarCsi> polars;
        polars.reserve(kBlockPackets);
        for (std::size_t w = 0; w < windows; ++w) {
            polars.clear();
            for (std::size_t p = 0; p < kBlockPackets; ++p) {
                polars.push_back(to_polar(record.symbols[w * kBlockPackets + p]));
            }
            out.push_back(assemble_block(polars));
        }
        return out;
    }
    out.reserve(record.symbols.size());
    for (const auto& s : record.symbols) {
        out.push_back(assemble_flat(to_polar(s), layout == FeatureLayout::flat180));
    }
    return out;
}

// ---------------------------------------------------------------------------------------------

std::vector<std::uint8_t> encode_dataset(std::span<const FingerprintRecord> records)
{
    std::size_t n_rx = 0;
    std::size_t n_sc = 0;
    if (!records.empty() && !records.front().symbols.empty()) {
        n_rx = records.front().symbols.front().entries.rows();
        n_sc = records.front().symbols.front().entries.cols();
    }
    if (n_rx > 255 || n_sc > 255) {
        throw DomainError("dataset dimensions exceed the u8 header fields");
    }

    ByteWriter w;
    w.put_bytes("CSF1");
    w.put(kDatasetVersion);
    w.put(static_cast<std::uint8_t>(n_rx));
    w.put(static_cast<std::uint8_t>(n_sc));
    w.put(static_cast<std::uint32_t>(records.size()));
    w.put(std::uint16_t{0});

    for (const auto& rec : records) {
        if (rec.symbols.empty()) {
            throw DomainError("write_dataset: record without symbols");
        }
        w.put(rec.location.x);
        w.put(rec.location.y);
        w.put(rec.label_location.x);
        w.put(rec.label_location.y);
        w.put(static_cast<std::uint32_t>(rec.symbols.size()));
        for (const auto& sym : rec.symbols) {
            if (sym.entries.rows() != n_rx || sym.entries.cols() != n_sc) {
                throw DomainError("write_dataset: symbol dimensions differ from the dataset header");
            }
            w.put(sym.timestamp);
            w.put(sym.packet_index);
            for (const auto& h : sym.entries.values()) {
                w.put(static_cast<float>(h.real()));
                w.put(static_cast<float>(h.imag()));
            }
        }
    }
    return w.take();
}

std::vector<FingerprintRecord> decode_dataset(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    r.expect_magic("CSF1");
    const std::size_t version_at = r.offset();
    const auto version = r.get<std::uint16_t>("version");
    if (version != kDatasetVersion) {
        throw ParseError("unsupported dataset version " + std::to_string(version), version_at);
    }
    const std::size_t n_rx = r.get<std::uint8_t>("n_rx");
    const std::size_t n_sc = r.get<std::uint8_t>("n_sc");
    const auto count = r.get<std::uint32_t>("record count");
    const std::size_t reserved_at = r.offset();
    if (r.get<std::uint16_t>("reserved") != 0) {
        throw ParseError("reserved header bytes must be zero", reserved_at);
    }

    std::vector<FingerprintRecord> records;
    for (std::uint32_t i = 0; i < count; ++i) {
        FingerprintRecord rec;
        rec.location.x = r.get<double>("loc_x");
        rec.location.y = r.get<double>("loc_y");
        rec.label_location.x = r.get<double>("label_x");
        rec.label_location.y = r.get<double>("label_y");
        const std::size_t count_at = r.offset();
        const auto n_symbols = r.get<std::uint32_t>("symbol count");
        if (n_symbols == 0) {
            throw ParseError("record " + std::to_string(i) + " has no symbols", count_at);
        }
        const std::size_t symbol_bytes = 12 + 8 * n_rx * n_sc;
        rec.symbols.reserve(std::min<std::size_t>(n_symbols, r.remaining() / symbol_bytes));
        for (std::uint32_t s = 0; s < n_symbols; ++s) {
            CsiSymbol sym;
            sym.timestamp = r.get<double>("timestamp");
            sym.packet_index = r.get<std::uint32_t>("packet_index");
            sym.entries = ComplexGrid(n_rx, n_sc);
            for (auto& h : sym.entries.values()) {
                const auto re = r.get<float>("csi real part");
                const auto im = r.get<float>("csi imaginary part");
                h = {re, im};
            }
            rec.symbols.push_back(std::move(sym));
        }
        records.push_back(std::move(rec));
    }
    if (r.remaining() != 0) {
        throw ParseError("trailing bytes after last record", r.offset());
    }
    return records;
}

void write_dataset(std::span<const FingerprintRecord> records, const std::filesystem::path& path)
{
    write_file_atomic(path, encode_dataset(records));
}

std::vector<FingerprintRecord> read_dataset(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    try {
        return decode_dataset(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.detail(), e.offset());
    }
}

void quantize_to_file_precision(std::vector<FingerprintRecord>& records)
{
    for (auto& rec : records) {
        for (auto& sym : rec.symbols) {
            for (auto& h : sym.entries.values()) {
                h = {static_cast<float>(h.real()), static_cast<float>(h.imag())};
            }
        }
    }
}

std::string export_json_lines(std::span<const FingerprintRecord> records)
{
    std::string out;
    for (const auto& rec : records) {
        nlohmann::json j;
        j["location"] = {rec.location.x, rec.location.y};
        j["label"] = {rec.label_location.x, rec.label_location.y};
        auto& symbols = j["symbols"] = nlohmann::json::array();
        for (const auto& sym : rec.symbols) {
            nlohmann::json rows = nlohmann::json::array();
            for (std::size_t a = 0; a < sym.entries.rows(); ++a) {
                nlohmann::json row = nlohmann::json::array();
                for (const auto& h : sym.entries.row(a)) {
                    row.push_back({h.real(), h.imag()});
                }
                rows.push_back(std::move(row));
            }
            symbols.push_back({{"timestamp", sym.timestamp}, {"packet_index", sym.packet_index}, {"csi", std::move(rows)}});
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

} // namespace csiloc
