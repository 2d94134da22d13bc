// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "csiloc/binary_io.hpp"
#include "csiloc/channel_sim.hpp"
#include "csiloc/csi_data.hpp"
#include "csiloc/errors.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace csiloc;
using csiloc::testkit::random_polar;
using csiloc::testkit::random_record;
using csiloc::testkit::random_symbol;

TEST(ToPolar, ModulusArgumentAndZeroConvention)
{
    CsiSymbol s;
    s.entries = ComplexGrid(1, 3);
    s.entries(0, 0) = {3.0, 4.0};
    s.entries(0, 1) = {0.0, 0.0};
    s.entries(0, 2) = {-1.0, 0.0};
    const auto p = to_polar(s);
    EXPECT_DOUBLE_EQ(p.amplitude(0, 0), 5.0);
    EXPECT_NEAR(p.phase(0, 0), 0.9273, 1e-4);
    EXPECT_EQ(p.amplitude(0, 1), 0.0);
    EXPECT_EQ(p.phase(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(p.phase(0, 2), -std::numbers::pi);
}

TEST(ToPolar, RoundTripReconstructsEntries)
{
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = random_symbol(rng);
        const auto p = to_polar(s);
        for (std::size_t i = 0; i < s.entries.size(); ++i) {
            const auto h = s.entries.values()[i];
            const auto back = std::polar(p.amplitude.values()[i], p.phase.values()[i]);
            EXPECT_LE(std::abs(back - h), 1e-12 * std::abs(h));
            EXPECT_GE(p.amplitude.values()[i], 0.0);
            EXPECT_GE(p.phase.values()[i], -std::numbers::pi);
            EXPECT_LT(p.phase.values()[i], std::numbers::pi);
        }
    }
}

TEST(AssembleFlat, ConstantAndSingleEntryLayouts)
{
    PolarCsi ones{RealGrid(3, 30, 1.0), RealGrid(3, 30, 0.0)};
    const auto t = assemble_flat(ones);
    EXPECT_EQ(t.layout, FeatureLayout::flat90);
    EXPECT_EQ(t.values, std::vector<double>(90, 1.0));

    PolarCsi one{RealGrid(3, 30, 0.0), RealGrid(3, 30, 0.0)};
    one.amplitude(2, 5) = 7.0;
    const auto u = assemble_flat(one);
    for (std::size_t i = 0; i < 90; ++i) {
        EXPECT_EQ(u.values[i], i == 65 ? 7.0 : 0.0);
    }
}

TEST(AssembleFlat, FlattenThenReshapeIsIdentity)
{
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_polar(rng);
        const auto t = assemble_flat(p);
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t s = 0; s < 30; ++s) {
                EXPECT_EQ(t.values[a * 30 + s], p.amplitude(a, s));
            }
        }
    }
}

TEST(AssembleFlat, PhaseChannelAppendsCalibratedPhase)
{
    Rng rng(5);
    const auto p = random_polar(rng);
    const auto t = assemble_flat(p, true);
    EXPECT_EQ(t.layout, FeatureLayout::flat180);
    ASSERT_EQ(t.values.size(), 180u);
    EXPECT_EQ(std::vector<double>(t.values.begin(), t.values.begin() + 90), assemble_flat(p).values);
}

TEST(AssembleFlat, WrongDimensionsAreDomainErrors)
{
    PolarCsi p{RealGrid(2, 30), RealGrid(2, 30)};
    EXPECT_THROW(assemble_flat(p), DomainError);
}

TEST(AssembleBlock, IndexLawOverRandomInput)
{
    Rng rng(6);
    std::vector<PolarCsi> polars;
    for (int k = 0; k < 30; ++k) {
        polars.push_back(random_polar(rng));
    }
    const auto t = assemble_block(polars);
    EXPECT_EQ(t.layout, FeatureLayout::block_3x30x30);
    ASSERT_EQ(t.values.size(), 2700u);
    for (int trial = 0; trial < 500; ++trial) {
        const auto c = rng.below(3), s = rng.below(30), p = rng.below(30);
        EXPECT_EQ(t.at(c, s, p), polars[p].amplitude(c, s));
        EXPECT_EQ(t.values[(c * 30 + s) * 30 + p], polars[p].amplitude(c, s));
    }
}

TEST(AssembleBlock, IdenticalPacketsGiveIdenticalSlices)
{
    Rng rng(7);
    const std::vector<PolarCsi> polars(30, random_polar(rng));
    const auto t = assemble_block(polars);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t s = 0; s < 30; ++s) {
            for (std::size_t p = 1; p < 30; ++p) {
                EXPECT_EQ(t.at(c, s, p), t.at(c, s, 0));
            }
        }
    }
    EXPECT_THROW(assemble_block(std::span(polars).first(29)), DomainError);
}

TEST(RecordFeatures, DisjointWindowsDropPartialTail)
{
    SceneConfig s;
    const std::vector<Point2> loc{{4.0, 3.0}};
    const auto rec = generate_dataset(s, 95, loc).front();
    const auto blocks = record_features(rec, FeatureLayout::block_3x30x30);
    ASSERT_EQ(blocks.size(), 3u);
    const auto second = to_polar(rec.symbols[30 + 4]);
    EXPECT_EQ(blocks[1].at(2, 17, 4), second.amplitude(2, 17));
    EXPECT_EQ(record_features(rec, FeatureLayout::flat90).size(), 95u);
    EXPECT_EQ(2000 / 30, 66); // windows per 2000-packet record
}

TEST(Dataset, EmptyListIsFourteenByteHeader)
{
    const auto bytes = encode_dataset({});
    ASSERT_EQ(bytes.size(), 14u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CSF1");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[5], 0);
    EXPECT_EQ(bytes[12], 0);
    EXPECT_EQ(bytes[13], 0);
    EXPECT_TRUE(decode_dataset(bytes).empty());
}

TEST(Dataset, RoundTripIsBitExactOnFilePrecisionData)
{
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<FingerprintRecord> recs;
        const auto n = 1 + rng.below(4);
        for (std::size_t i = 0; i < n; ++i) {
            recs.push_back(random_record(rng, 1 + rng.below(5)));
        }
        quantize_to_file_precision(recs);
        const auto bytes = encode_dataset(recs);
        const auto back = decode_dataset(bytes);
        EXPECT_EQ(back, recs);
        EXPECT_EQ(encode_dataset(back), bytes);
    }
}

TEST(Dataset, FileRoundTrip)
{
    csiloc::testkit::TempDir dir("ds");
    SceneConfig s;
    s.noise_std = 1e-4;
    const auto rps = s.rp_locations();
    auto recs = generate_dataset(s, 3, rps);
    write_dataset(recs, dir / "a.csf");
    const auto back = read_dataset(dir / "a.csf");
    quantize_to_file_precision(recs);
    EXPECT_EQ(back, recs);
    write_dataset(back, dir / "b.csf");
    EXPECT_EQ(read_file_bytes(dir / "a.csf"), read_file_bytes(dir / "b.csf"));
}

TEST(Dataset, TruncationNamesFirstUnreadableField)
{
    Rng rng(9);
    std::vector<FingerprintRecord> recs{random_record(rng, 2)};
    auto bytes = encode_dataset(recs);
    // header 14, record header 36, symbol header 12, first real part 4, one byte of imaginary part
    bytes.resize(14 + 36 + 12 + 4 + 1);
    try {
        decode_dataset(bytes);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 14u + 36u + 12u + 4u);
    }
}

TEST(Dataset, RejectsBadMagicVersionAndTrailingBytes)
{
    auto bytes = encode_dataset({});
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_dataset(bad), ParseError);
    bad = bytes;
    bad[4] = 2;
    try {
        decode_dataset(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
    bad = bytes;
    bad.push_back(0);
    EXPECT_THROW(decode_dataset(bad), ParseError);
}

TEST(Dataset, JsonLinesExport)
{
    Rng rng(10);
    std::vector<FingerprintRecord> recs{random_record(rng, 2), random_record(rng, 1)};
    const auto text = export_json_lines(recs);
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j["location"][0].get<double>(), recs[n].location.x);
        EXPECT_EQ(j["symbols"].size(), recs[n].symbols.size());
        EXPECT_EQ(j["symbols"][0]["csi"][1][2][1].get<double>(), recs[n].symbols[0].entries(1, 2).imag());
        ++n;
    }
    EXPECT_EQ(n, 2u);
}
