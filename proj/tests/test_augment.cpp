// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "csiloc/augment.hpp"
#include "csiloc/errors.hpp"
#include "gradient_check.hpp"

using namespace csiloc;

namespace {

std::vector<FingerprintRecord> base_records(const SceneConfig& s)
{
    const auto rps = s.rp_locations();
    return generate_dataset(s, 2, rps);
}

} // namespace

TEST(AugmentDataset, CountsLabelsAndRadius)
{
    SceneConfig s;
    const auto base = base_records(s);
    AugmentConfig cfg;
    cfg.samples_per_rp = 50;
    cfg.packets_per_sample = 2;
    cfg.seed = 9;
    const auto out = augment_dataset(s, base, cfg);
    ASSERT_EQ(out.size(), base.size() + 750);
    EXPECT_TRUE(std::equal(base.begin(), base.end(), out.begin()));
    const auto rps = s.rp_locations();
    std::size_t inner = 0;
    for (std::size_t i = base.size(); i < out.size(); ++i) {
        const auto& r = out[i];
        EXPECT_NE(std::find(rps.begin(), rps.end(), r.label_location), rps.end());
        const double d = distance(r.location, r.label_location);
        EXPECT_LE(d, 0.10);
        inner += d < 0.10 / std::sqrt(2.0);
        EXPECT_TRUE(r.augmented());
        EXPECT_EQ(r.symbols.size(), 2u);
    }
    // uniform on the disk: half the mass lies inside radius R / sqrt(2)
    EXPECT_NEAR(static_cast<double>(inner) / 750.0, 0.5, 0.06);
}

TEST(AugmentDataset, ZeroSamplesIsIdentity)
{
    SceneConfig s;
    const auto base = base_records(s);
    AugmentConfig cfg;
    EXPECT_EQ(augment_dataset(s, base, cfg), base);
}

TEST(AugmentDataset, DeterministicPerSeed)
{
    SceneConfig s;
    s.noise_std = 1e-4;
    const auto base = base_records(s);
    AugmentConfig cfg;
    cfg.samples_per_rp = 3;
    cfg.packets_per_sample = 2;
    cfg.seed = 4;
    EXPECT_EQ(augment_dataset(s, base, cfg), augment_dataset(s, base, cfg));
    auto other = cfg;
    other.seed = 5;
    EXPECT_NE(augment_dataset(s, base, cfg), augment_dataset(s, base, other));
}

TEST(AugmentDataset, RadiusAndAlphaLimits)
{
    SceneConfig s;
    const auto base = base_records(s);
    AugmentConfig cfg;
    cfg.samples_per_rp = 1;
    cfg.perturbation_radius = 0.3; // spacing / 4
    EXPECT_THROW(augment_dataset(s, base, cfg), ConfigError);
    cfg.perturbation_radius = 0.0;
    EXPECT_THROW(augment_dataset(s, base, cfg), ConfigError);
    cfg.perturbation_radius = 0.1;
    cfg.alpha = 1.5;
    EXPECT_THROW(augment_dataset(s, base, cfg), ConfigError);
}

TEST(AugmentedLoss, AlphaTermIsAdditiveConstant)
{
    const nn::Tensor pred({2, 2}, {0.3, 0.4, 1.0, 0.0});
    const nn::Tensor label({2, 2}, {0.0, 0.0, 1.0, 0.5});
    const std::vector<double> zero{0.0, 0.0};
    const auto mde = nn::mde_loss(pred, label);
    const auto a0 = augmented_loss(pred, label, zero, 0.0);
    EXPECT_EQ(a0.loss, mde.loss);
    EXPECT_EQ(a0.gradient.values, mde.gradient.values);

    const std::vector<double> tenth{0.1, 0.1};
    const auto a1 = augmented_loss(pred, label, tenth, 1.0);
    EXPECT_NEAR(mde.loss, 0.5, 1e-15);
    EXPECT_NEAR(a1.loss, 0.6, 1e-15);
    EXPECT_EQ(a1.gradient.values, mde.gradient.values);
    const std::vector<double> one{0.1};
    EXPECT_THROW(augmented_loss(pred, label, one, 1.0), DomainError);
    const std::vector<double> neg{0.1, -0.1};
    EXPECT_THROW(augmented_loss(pred, label, neg, 1.0), DomainError);
}

TEST(AugmentedLoss, GradientInvarianceAndFiniteDifferences)
{
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        EXPECT_LT(csiloc::testkit::augmented_gradient_error(rng), 1e-4);
    }
    nn::Tensor pred({3, 2}), label({3, 2});
    for (std::size_t i = 0; i < 6; ++i) {
        pred[i] = rng.normal();
        label[i] = rng.normal();
    }
    const std::vector<double> norms{0.05, 0.0, 0.08};
    const auto ref = nn::mde_loss(pred, label).gradient.values;
    for (double alpha : {-1.0, -0.3, 0.0, 0.7, 1.0}) {
        EXPECT_EQ(augmented_loss(pred, label, norms, alpha).gradient.values, ref);
    }
}

TEST(AugmentedLoss, TriangleSandwich)
{
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t b = 1 + rng.below(8);
        nn::Tensor pred({b, 2}), label({b, 2}), truth({b, 2});
        double mean_delta = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            pred[2 * i] = rng.normal();
            pred[2 * i + 1] = rng.normal();
            label[2 * i] = rng.normal();
            label[2 * i + 1] = rng.normal();
            const double r = 0.1 * std::sqrt(rng.uniform()), th = rng.uniform(0.0, 6.283185307179586);
            truth[2 * i] = label[2 * i] + r * std::cos(th);
            truth[2 * i + 1] = label[2 * i + 1] + r * std::sin(th);
            mean_delta += r / static_cast<double>(b);
        }
        const double to_label = nn::mde_loss(pred, label).loss;
        const double to_truth = nn::mde_loss(pred, truth).loss;
        EXPECT_LE(std::abs(to_label - to_truth), mean_delta + 1e-12);
    }
}
