// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "csiloc/binary_io.hpp"
#include "csiloc/channel_sim.hpp"
#include "csiloc/csi_data.hpp"
#include "csiloc/errors.hpp"
#include "csiloc/ofdm.hpp"
#include "test_support.hpp"

using namespace csiloc;

namespace {

constexpr double kPi = std::numbers::pi;

SceneConfig los_only(SceneConfig s = {})
{
    s.wall_reflection_coeff = 0.0;
    s.noise_std = 0.0;
    return s;
}

double wrap(double a)
{
    return std::remainder(a, 2.0 * kPi);
}

} // namespace

TEST(BuildPaths, LosDelayIsDistanceOverC)
{
    SceneConfig s;
    const Point2 loc = s.ap_position + Point2{3.0, 0.0};
    const auto paths = build_paths(s, loc);
    ASSERT_EQ(paths.size(), 5u);
    EXPECT_NEAR(paths[0].delay, 3.0 / 299792458.0, 1e-20);
    EXPECT_NEAR(paths[0].delay, 1.0007e-8, 1e-12);
}

TEST(BuildPaths, ZeroWallCoefficientSilencesReflections)
{
    const auto paths = build_paths(los_only(), {4.0, 3.0});
    EXPECT_GT(std::abs(paths[0].complex_gain), 0.0);
    for (std::size_t p = 1; p < paths.size(); ++p) {
        EXPECT_EQ(std::abs(paths[p].complex_gain), 0.0);
    }
}

TEST(BuildPaths, ImageSourceLengthsInSquareRoom)
{
    SceneConfig s;
    s.room_width = 6.0;
    s.room_depth = 6.0;
    s.ap_position = {3.0, 3.0};
    s.wall_reflection_coeff = 0.7;
    const Point2 loc{4.0, 3.0};
    const auto paths = build_paths(s, loc);
    // Images of (3,3) in x=0, x=6, y=0, y=6: (-3,3), (9,3), (3,-3), (3,9).
    const double expected[5] = {1.0, 7.0, 5.0, std::sqrt(1.0 + 36.0), std::sqrt(1.0 + 36.0)};
    const double lambda = s.wavelength();
    for (std::size_t p = 0; p < 5; ++p) {
        EXPECT_NEAR(paths[p].delay * kSpeedOfLight, expected[p], 1e-12) << "path " << p;
        const double free_space = lambda / (4.0 * kPi * expected[p]);
        EXPECT_NEAR(std::abs(paths[p].complex_gain), (p == 0 ? 1.0 : 0.7) * free_space, 1e-15);
    }
}

TEST(BuildPaths, OutsideRoomIsDomainError)
{
    SceneConfig s;
    EXPECT_THROW(build_paths(s, {-0.1, 1.0}), DomainError);
    EXPECT_THROW(sample_csi(s, {1.0, 6.5}, 0), DomainError);
}

TEST(BuildPaths, LosGainDecreasesWithDistance)
{
    SceneConfig s;
    double last = 1e9;
    for (double d = 0.2; d < 6.5; d += 0.1) {
        const auto paths = build_paths(s, s.ap_position + Point2{d, d * 0.5});
        const double g = std::abs(paths[0].complex_gain);
        EXPECT_LE(g, last);
        last = g;
    }
}

TEST(SampleCsi, MatchesIndependentPathSum)
{
    SceneConfig s;
    s.seed = 77;
    const Point2 loc{5.1, 2.3};
    const auto paths = build_paths(s, loc);
    const auto h = channel_response(s, paths, ImpairmentDraw{});

    // Independent geometry: image sources, delays and arrival angles.
    const Point2 ap = s.ap_position;
    const Point2 src[5] = {ap, {-ap.x, ap.y}, {2 * s.room_width - ap.x, ap.y}, {ap.x, -ap.y}, {ap.x, 2 * s.room_depth - ap.y}};
    const auto bins = subcarrier_fft_bins(s.n_sc);
    for (int r = 0; r < s.n_rx; ++r) {
        for (int i = 0; i < s.n_sc; ++i) {
            const double f = s.carrier_freq + bins[i] * s.subcarrier_spacing;
            std::complex<double> sum = 0.0;
            for (int p = 0; p < 5; ++p) {
                const double dx = src[p].x - loc.x, dy = src[p].y - loc.y;
                const double len = std::sqrt(dx * dx + dy * dy);
                const double tau = len / 299792458.0;
                const double sin_aoa = dx / len;
                const auto a = paths[p].complex_gain;
                sum += a * std::exp(std::complex<double>(0.0, -2 * kPi * f * tau)) *
                       std::exp(std::complex<double>(0.0, -2 * kPi * (f / 299792458.0) * s.antenna_spacing * r * sin_aoa));
            }
            EXPECT_NEAR(std::abs(h(r, i) - sum), 0.0, 1e-12 * std::abs(sum) + 1e-18);
        }
    }
}

TEST(SampleCsi, ImpairmentStepBetweenStride2Slots)
{
    const auto s = los_only();
    const auto paths = build_paths(s, {4.0, 3.0});
    const auto clean = channel_response(s, paths, {0.0, 0.0});
    const auto lagged = channel_response(s, paths, {1.0, 0.0});
    const auto bins = subcarrier_fft_bins(s.n_sc);
    for (std::size_t i = 0; i + 1 < bins.size(); ++i) {
        if (bins[i + 1] - bins[i] != 2) {
            continue;
        }
        const double f0 = std::arg(lagged(0, i) / clean(0, i));
        const double f1 = std::arg(lagged(0, i + 1) / clean(0, i + 1));
        EXPECT_NEAR(wrap(f1 - f0), 2 * kPi * 2 / 64.0, 1e-9);
    }
}

TEST(SampleCsi, SingleLosPathStructure)
{
    auto s = los_only();
    s.sto_max = 0.0;
    const Point2 loc{6.0, 4.5};
    const auto paths = build_paths(s, loc);
    ImpairmentDraw none;
    const auto h = channel_response(s, paths, none);
    const auto bins = subcarrier_fft_bins(s.n_sc);
    const double tau = paths[0].delay;
    for (int i = 0; i < s.n_sc; ++i) {
        EXPECT_NEAR(std::abs(h(0, i)), std::abs(h(0, 0)), 1e-15);
        // phase affine in frequency with slope -2 pi tau
        const double df = (bins[i] - bins[0]) * s.subcarrier_spacing;
        EXPECT_NEAR(wrap(std::arg(h(0, i)) - std::arg(h(0, 0)) + 2 * kPi * tau * df), 0.0, 1e-9);
        // array phase step between neighbouring antennas
        const double f = s.carrier_freq + bins[i] * s.subcarrier_spacing;
        for (int r = 0; r + 1 < s.n_rx; ++r) {
            const double step = std::arg(h(r + 1, i) / h(r, i));
            EXPECT_NEAR(wrap(step + 2 * kPi * f / kSpeedOfLight * s.antenna_spacing * std::sin(paths[0].aoa)), 0.0, 1e-9);
        }
    }
    // same packet index twice -> identical symbol
    EXPECT_EQ(sample_csi(s, loc, 3).first, sample_csi(s, loc, 3).first);
}

TEST(SampleCsi, ImpairmentRangesAndNoiseLevel)
{
    SceneConfig s;
    s.noise_std = 0.01;
    const Point2 loc{3.3, 3.3};
    const auto clean_paths = build_paths(s, loc);
    double power = 0.0;
    std::size_t n = 0;
    for (std::uint32_t k = 0; k < 400; ++k) {
        const auto [sym, imp] = sample_csi(s, loc, k);
        EXPECT_GE(imp.sto, -s.sto_max);
        EXPECT_LE(imp.sto, s.sto_max);
        EXPECT_GE(imp.common_phase, -kPi);
        EXPECT_LT(imp.common_phase, kPi);
        EXPECT_DOUBLE_EQ(sym.timestamp, k * 0.004);
        const auto clean = channel_response(s, clean_paths, imp);
        for (std::size_t i = 0; i < clean.size(); ++i) {
            power += std::norm(sym.entries.values()[i] - clean.values()[i]);
            ++n;
        }
    }
    EXPECT_NEAR(std::sqrt(power / n), s.noise_std, 0.03 * s.noise_std);
}

TEST(GenerateDataset, CadenceAndCounts)
{
    SceneConfig s;
    const auto rps = s.rp_locations();
    ASSERT_EQ(rps.size(), 15u);
    const auto data = generate_dataset(s, 40, rps);
    ASSERT_EQ(data.size(), 15u);
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(data[i].location, rps[i]);
        EXPECT_EQ(data[i].label_location, rps[i]);
        ASSERT_EQ(data[i].symbols.size(), 40u);
        for (std::size_t k = 0; k < 40; ++k) {
            EXPECT_DOUBLE_EQ(data[i].symbols[k].timestamp, 0.004 * k);
        }
    }
    EXPECT_THROW(generate_dataset(s, 10, std::span<const Point2>{}), DomainError);
    EXPECT_THROW(generate_dataset(s, 0, rps), DomainError);
}

TEST(GenerateDataset, AdjacentRpsAreSpacingApart)
{
    SceneConfig s;
    const auto rps = s.rp_locations();
    for (int r = 0; r < s.rp_rows; ++r) {
        for (int c = 0; c + 1 < s.rp_cols; ++c) {
            EXPECT_NEAR(distance(rps[r * s.rp_cols + c], rps[r * s.rp_cols + c + 1]), 1.2, 1e-12);
        }
    }
    for (int r = 0; r + 1 < s.rp_rows; ++r) {
        EXPECT_NEAR(distance(rps[r * s.rp_cols], rps[(r + 1) * s.rp_cols]), 1.2, 1e-12);
    }
}

TEST(GenerateDataset, SameSeedIsByteIdentical)
{
    SceneConfig s;
    s.noise_std = 1e-4;
    const auto rps = s.rp_locations();
    EXPECT_EQ(encode_dataset(generate_dataset(s, 5, rps)), encode_dataset(generate_dataset(s, 5, rps)));
    s.seed = 2;
    SceneConfig t;
    t.noise_std = 1e-4;
    EXPECT_NE(encode_dataset(generate_dataset(s, 5, rps)), encode_dataset(generate_dataset(t, 5, rps)));
}

TEST(SceneConfig, ValidationAndConfigRoundTrip)
{
    SceneConfig s;
    EXPECT_NO_THROW(s.validate());
    auto bad = s;
    bad.rp_grid_origin = {7.0, 1.0};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = s;
    bad.wall_reflection_coeff = 1.5;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = s;
    bad.noise_std = -1.0;
    EXPECT_THROW(bad.validate(), ConfigError);

    s.seed = 0xfeedfacecafebeefULL;
    s.noise_std = 0.125;
    const auto back = scene_from_config(KeyValueConfig::parse(scene_to_config(s).to_text()));
    EXPECT_EQ(back.seed, s.seed);
    EXPECT_EQ(back.noise_std, s.noise_std);
    EXPECT_EQ(back.antenna_spacing, s.antenna_spacing);
    EXPECT_EQ(back.ap_position, s.ap_position);

    csiloc::testkit::TempDir dir("scene");
    write_file_atomic(dir / "typo.cfg", std::string_view("room_widht = 3\n"));
    EXPECT_THROW(load_scene(dir / "typo.cfg"), ConfigError);
}
