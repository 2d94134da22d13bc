// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "csiloc/csi_data.hpp"
#include "csiloc/geometry.hpp"
#include "csiloc/kv_config.hpp"
#include "csiloc/ofdm.hpp"

namespace csiloc {

/// Rectangular room [0, room_width] x [0, room_depth] with one single-antenna AP and a receive
/// array of `n_rx` elements spaced along the x axis.
struct SceneConfig {
    double room_width = 8.0;
    double room_depth = 6.0;
    Point2 ap_position{0.8, 0.7};
    Point2 rp_grid_origin{1.6, 1.8};
    double rp_spacing = 1.2;
    int rp_rows = 3;
    int rp_cols = 5;
    double carrier_freq = 5.32e9;
    double subcarrier_spacing = 312.5e3;
    int n_rx = 3;
    int n_sc = 30;
    double antenna_spacing = kSpeedOfLight / 5.32e9 / 2.0;
    double wall_reflection_coeff = 0.5;
    double noise_std = 0.0;
    double sto_max = 2.0;
    std::uint64_t seed = 1;

    /// Throws ConfigError on any violated invariant (RP grid outside the room, bad counts, ...).
    void validate() const;

    double wavelength() const { return kSpeedOfLight / carrier_freq; }
    bool contains(Point2 p) const;

    /// RP grid in row-major order: index = row * rp_cols + col, x grows with col, y with row.
    std::vector<Point2> rp_locations() const;
};

/// Reads a scene from `key = value` text. Keys are the SceneConfig field names; points are
/// written "x, y". If `antenna_spacing` is absent it defaults to half the carrier wavelength.
SceneConfig scene_from_config(const KeyValueConfig& cfg);
SceneConfig load_scene(const std::filesystem::path& path);
KeyValueConfig scene_to_config(const SceneConfig& scene);
const std::vector<std::string>& scene_keys();

struct Path {
    double delay = 0.0;                 // seconds
    std::complex<double> complex_gain;  // linear
    double aoa = 0.0;                   // radians from array broadside; sin(aoa) projects on the array axis
};

struct ImpairmentDraw {
    double sto = 0.0;          // samples
    double common_phase = 0.0; // radians
};

/// LOS path followed by the four first-order wall images (x=0, x=W, y=0, y=D).
/// Gain magnitude is free-space lambda/(4 pi d) (times the wall coefficient for reflections);
/// gain phase is -2 pi f_c tau plus a fixed per-path phase drawn from the scene seed.
std::vector<Path> build_paths(const SceneConfig& scene, Point2 location);

/// Packet impairment for (seed, location, packet_index).
ImpairmentDraw draw_impairment(const SceneConfig& scene, Point2 location, std::uint32_t packet_index);

/// Noise-free multipath response with the given impairment applied. Exposed so tests can force
/// particular (sto, common_phase) values.
ComplexGrid channel_response(const SceneConfig& scene, std::span<const Path> paths, const ImpairmentDraw& impairment);

/// One CSI snapshot with impairments and additive circular Gaussian noise (total std noise_std
/// per entry). Deterministic in (scene.seed, location, packet_index).
std::pair<CsiSymbol, ImpairmentDraw> sample_csi(const SceneConfig& scene, Point2 location, std::uint32_t packet_index);

/// One record per location, `packets_per_location` symbols spaced kPacketInterval apart.
std::vector<FingerprintRecord> generate_dataset(const SceneConfig& scene, std::size_t packets_per_location,
                                                std::span<const Point2> locations);

} // namespace csiloc
