// SPDX-License-Identifier: Apache-2.0

#include "csiloc/channel_sim.hpp"

#include <cmath>
#include <numbers>

#include "csiloc/errors.hpp"
#include "csiloc/rng.hpp"

namespace csiloc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kPathPhaseStream = 0x7061746870686173ULL;

Rng packet_rng(const SceneConfig& scene, Point2 location, std::uint32_t packet_index)
{
    std::uint64_t s = derive_seed(scene.seed, location.x);
    s = derive_seed(s, location.y);
    return Rng(derive_seed(s, static_cast<std::uint64_t>(packet_index)));
}

ImpairmentDraw next_impairment(const SceneConfig& scene, Rng& rng)
{
    ImpairmentDraw d;
    d.sto = rng.uniform(-scene.sto_max, scene.sto_max);
    d.common_phase = rng.uniform(-kPi, kPi);
    return d;
}

void require_inside(const SceneConfig& scene, Point2 p)
{
    if (!scene.contains(p)) {
        throw DomainError("location (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") is outside the room");
    }
}

} // namespace

bool SceneConfig::contains(Point2 p) const
{
    return p.x > 0.0 && p.x < room_width && p.y > 0.0 && p.y < room_depth;
}

std::vector<Point2> SceneConfig::rp_locations() const
{
    std::vector<Point2> rps;
    rps.reserve(static_cast<std::size_t>(rp_rows * rp_cols));
    for (int r = 0; r < rp_rows; ++r) {
        for (int c = 0; c < rp_cols; ++c) {
            rps.push_back({rp_grid_origin.x + c * rp_spacing, rp_grid_origin.y + r * rp_spacing});
        }
    }
    return rps;
}

void SceneConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw ConfigError("scene: " + msg); };
    if (!(room_width > 0.0) || !(room_depth > 0.0)) fail("room dimensions must be positive");
    if (n_rx < 1) fail("n_rx must be >= 1");
    if (n_sc < 1) fail("n_sc must be >= 1");
    if (n_rx > 255 || n_sc > 255) fail("n_rx and n_sc must fit the dataset header (<= 255)");
    if (!(rp_spacing > 0.0)) fail("rp_spacing must be > 0");
    if (rp_rows < 1 || rp_cols < 1) fail("rp_rows and rp_cols must be >= 1");
    if (!(wall_reflection_coeff >= 0.0 && wall_reflection_coeff <= 1.0)) fail("wall_reflection_coeff must lie in [0, 1]");
    if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
    if (!(sto_max >= 0.0)) fail("sto_max must be >= 0");
    if (!(carrier_freq > 0.0) || !(subcarrier_spacing > 0.0)) fail("frequencies must be positive");
    if (!(antenna_spacing >= 0.0)) fail("antenna_spacing must be >= 0");
    if (!contains(ap_position)) fail("ap_position must lie inside the room");
    for (const auto& p : rp_locations()) {
        if (!contains(p)) fail("RP grid must lie strictly inside the room");
    }
}

const std::vector<std::string>& scene_keys()
{
    static const std::vector<std::string> keys = {
        "room_width", "room_depth", "ap_position", "rp_grid_origin", "rp_spacing", "rp_rows",
        "rp_cols", "carrier_freq", "subcarrier_spacing", "n_rx", "n_sc", "antenna_spacing",
        "wall_reflection_coeff", "noise_std", "sto_max", "seed"};
    return keys;
}

SceneConfig scene_from_config(const KeyValueConfig& cfg)
{
    SceneConfig s;
    s.room_width = cfg.get_double("room_width", s.room_width);
    s.room_depth = cfg.get_double("room_depth", s.room_depth);
    s.ap_position = cfg.get_point("ap_position", s.ap_position);
    s.rp_grid_origin = cfg.get_point("rp_grid_origin", s.rp_grid_origin);
    s.rp_spacing = cfg.get_double("rp_spacing", s.rp_spacing);
    s.rp_rows = static_cast<int>(cfg.get_int("rp_rows", s.rp_rows));
    s.rp_cols = static_cast<int>(cfg.get_int("rp_cols", s.rp_cols));
    s.carrier_freq = cfg.get_double("carrier_freq", s.carrier_freq);
    s.subcarrier_spacing = cfg.get_double("subcarrier_spacing", s.subcarrier_spacing);
    s.n_rx = static_cast<int>(cfg.get_int("n_rx", s.n_rx));
    s.n_sc = static_cast<int>(cfg.get_int("n_sc", s.n_sc));
    s.antenna_spacing = cfg.get_double("antenna_spacing", s.wavelength() / 2.0);
    s.wall_reflection_coeff = cfg.get_double("wall_reflection_coeff", s.wall_reflection_coeff);
    s.noise_std = cfg.get_double("noise_std", s.noise_std);
    s.sto_max = cfg.get_double("sto_max", s.sto_max);
    s.seed = cfg.get_u64("seed", s.seed);
    s.validate();
    return s;
}

SceneConfig load_scene(const std::filesystem::path& path)
{
    auto cfg = KeyValueConfig::load(path);
    const auto& keys = scene_keys();
    cfg.reject_unknown({keys.begin(), keys.end()});
    return scene_from_config(cfg);
}

KeyValueConfig scene_to_config(const SceneConfig& s)
{
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto pt = [&](Point2 p) { return num(p.x) + ", " + num(p.y); };
    KeyValueConfig cfg;
    cfg.set("room_width", num(s.room_width));
    cfg.set("room_depth", num(s.room_depth));
    cfg.set("ap_position", pt(s.ap_position));
    cfg.set("rp_grid_origin", pt(s.rp_grid_origin));
    cfg.set("rp_spacing", num(s.rp_spacing));
    cfg.set("rp_rows", std::to_string(s.rp_rows));
    cfg.set("rp_cols", std::to_string(s.rp_cols));
    cfg.set("carrier_freq", num(s.carrier_freq));
    cfg.set("subcarrier_spacing", num(s.subcarrier_spacing));
    cfg.set("n_rx", std::to_string(s.n_rx));
    cfg.set("n_sc", std::to_string(s.n_sc));
    cfg.set("antenna_spacing", num(s.antenna_spacing));
    cfg.set("wall_reflection_coeff", num(s.wall_reflection_coeff));
    cfg.set("noise_std", num(s.noise_std));
    cfg.set("sto_max", num(s.sto_max));
    cfg.set("seed", std::to_string(s.seed));
    return cfg;
}

std::vector<Path> build_paths(const SceneConfig& scene, Point2 location)
{
    require_inside(scene, location);
    const Point2 ap = scene.ap_position;
    const double w = scene.room_width;
    const double d = scene.room_depth;
    const Point2 sources[5] = {
        ap,
        {-ap.x, ap.y},
        {2.0 * w - ap.x, ap.y},
        {ap.x, -ap.y},
        {ap.x, 2.0 * d - ap.y},
    };

    const double lambda = scene.wavelength();
    Rng phase_rng(derive_seed(scene.seed, kPathPhaseStream));

    std::vector<Path> paths;
    paths.reserve(5);
    for (std::size_t p = 0; p < 5; ++p) {
        const double fixed_phase = phase_rng.uniform(-kPi, kPi);
        const double length = distance(sources[p], location);
        const double delay = length / kSpeedOfLight;
        double magnitude = lambda / (4.0 * kPi * length);
        if (p > 0) {
            magnitude *= scene.wall_reflection_coeff;
        }
        const double phase = -2.0 * kPi * scene.carrier_freq * delay + fixed_phase;
        const double aoa = std::atan2(sources[p].x - location.x, sources[p].y - location.y);
        paths.push_back({delay, std::polar(magnitude, phase), aoa});
    }
    return paths;
}

ImpairmentDraw draw_impairment(const SceneConfig& scene, Point2 location, std::uint32_t packet_index)
{
    auto rng = packet_rng(scene, location, packet_index);
    return next_impairment(scene, rng);
}

ComplexGrid channel_response(const SceneConfig& scene, std::span<const Path> paths, const ImpairmentDraw& impairment)
{
    const auto bins = subcarrier_fft_bins(scene.n_sc);
    ComplexGrid h(static_cast<std::size_t>(scene.n_rx), static_cast<std::size_t>(scene.n_sc));
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const double f = scene.carrier_freq + bins[i] * scene.subcarrier_spacing;
        const double impairment_phase = 2.0 * kPi * bins[i] * impairment.sto / kFftSize + impairment.common_phase;
        const auto impairment_factor = std::polar(1.0, impairment_phase);
        for (std::size_t r = 0; r < h.rows(); ++r) {
            std::complex<double> sum{};
            for (const auto& path : paths) {
                const double delay_phase = -2.0 * kPi * f * path.delay;
                const double array_phase =
                    -2.0 * kPi * (f / kSpeedOfLight) * scene.antenna_spacing * static_cast<double>(r) * std::sin(path.aoa);
                sum += path.complex_gain * std::polar(1.0, delay_phase + array_phase);
            }
            h(r, i) = sum * impairment_factor;
        }
    }
    return h;
}

std::pair<CsiSymbol, ImpairmentDraw> sample_csi(const SceneConfig& scene, Point2 location, std::uint32_t packet_index)
{
    const auto paths = build_paths(scene, location);
    auto rng = packet_rng(scene, location, packet_index);
    const auto impairment = next_impairment(scene, rng);

    CsiSymbol symbol;
    symbol.entries = channel_response(scene, paths, impairment);
    symbol.packet_index = packet_index;
    symbol.timestamp = packet_index * kPacketInterval;
    if (scene.noise_std > 0.0) {
        const double component_std = scene.noise_std / std::numbers::sqrt2;
        for (auto& h : symbol.entries.values()) {
            const double re = rng.normal();
            const double im = rng.normal();
            h += std::complex<double>(component_std * re, component_std * im);
        }
    }
    return {std::move(symbol), impairment};
}

std::vector<FingerprintRecord> generate_dataset(const SceneConfig& scene, std::size_t packets_per_location,
                                                std::span<const Point2> locations)
{
    if (locations.empty()) {
        throw DomainError("generate_dataset: empty location list");
    }
    if (packets_per_location < 1) {
        throw DomainError("generate_dataset: packets_per_location must be >= 1");
    }
    for (const auto& loc : locations) {
        require_inside(scene, loc);
    }

    std::vector<FingerprintRecord> records;
    records.reserve(locations.size());
    for (const auto& loc : locations) {
        FingerprintRecord rec;
        rec.location = loc;
        rec.label_location = loc;
        rec.symbols.reserve(packets_per_location);
        for (std::size_t k = 0; k < packets_per_location; ++k) {
            rec.symbols.push_back(sample_csi(scene, loc, static_cast<std::uint32_t>(k)).first);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace csiloc
