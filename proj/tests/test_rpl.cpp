#include <gtest/gtest.h>

#include <cmath>

#include "rdnet/rpl.hpp"
#include "test_util.hpp"

using namespace rdnet;
using testutil::random_tensor;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(ChannelAttention, ZeroWeightsGiveOneHalf) {
    ParamStore store;
    Rng rng(1);
    const ChannelAttention ca = make_channel_attention(store, "ca", 8, 4, rng);
    testutil::fill_params(store, "ca", 0.0);
    const Tensor v = ca(random_tensor({2, 8, 4, 4}, rng));
    EXPECT_EQ(v.shape(), (Shape{2, 8, 1, 1}));
    for (double x : v.data()) EXPECT_EQ(x, 0.5);
}

TEST(ChannelAttention, OutputInUnitInterval) {
    ParamStore store;
    Rng rng(2);
    const ChannelAttention ca = make_channel_attention(store, "ca", 8, 2, rng);
    const Tensor v = ca(random_tensor({3, 8, 5, 5}, rng, -20, 20));
    for (double x : v.data()) {
        EXPECT_GT(x, 0.0);
        EXPECT_LT(x, 1.0);
    }
}

TEST(ChannelAttention, RejectsIndivisibleChannels) {
    ParamStore store;
    Rng rng(3);
    EXPECT_THROW(make_channel_attention(store, "ca", 6, 4, rng), ConfigError);
    EXPECT_THROW(make_channel_attention(store, "cb", 6, 0, rng), ConfigError);
}

TEST(SpatialAttention, Examples) {
    EXPECT_DOUBLE_EQ(spatial_attention(Tensor::zeros({1, 3, 1, 1})).item(), 0.5);
    EXPECT_DOUBLE_EQ(spatial_attention(Tensor::from({1, 3, 1, 1}, {2, 5, -1})).item(), sig(5.0));
    Rng rng(4);
    const Tensor x = random_tensor({2, 4, 3, 3}, rng, -3, 3);
    const Tensor w = spatial_attention(x);
    EXPECT_EQ(w.shape(), (Shape{2, 1, 3, 3}));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t h = 0; h < 3; ++h)
            for (std::size_t c = 0; c < 3; ++c) {
                double m = -1e300;
                for (std::size_t k = 0; k < 4; ++k) m = std::max(m, x.at(n, k, h, c));
                EXPECT_NEAR(w.at(n, 0, h, c), sig(m), 1e-15);
            }
}

namespace {

struct RplFixture {
    ParamStore store;
    Rng rng{5};
    Rpl rpl;

    explicit RplFixture(bool cross) {
        rpl = make_rpl(store, "rpl", {4, 2, cross, 4}, rng);
        // Zero channel attention and a fuse that passes the f4 half through.
        testutil::fill_params(store, ".ca", 0.0);
        testutil::fill_params(store, "fuse.bias", 0.0);
        testutil::set_identity_conv(rpl.fuse.weight);
    }
};

}  // namespace

TEST(Rpl, HandComposition) {
    RplFixture fx(false);
    const Tensor f4 = random_tensor({1, 4, 4, 4}, fx.rng, -2, 2);
    const Tensor f5 = random_tensor({1, 4, 2, 2}, fx.rng, -2, 2);
    const Tensor y = fx.rpl(f4, f5);
    for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 4; ++w) {
            double m = -1e300;
            for (std::size_t c = 0; c < 4; ++c) m = std::max(m, 1.5 * f4.at(0, c, h, w));
            for (std::size_t c = 0; c < 4; ++c)
                EXPECT_NEAR(y.at(0, c, h, w), 1.5 * f4.at(0, c, h, w) * (1.0 + sig(m)), 1e-12);
        }
}

TEST(Rpl, ResidualKeepsSignAndBoundsGain) {
    RplFixture fx(false);
    const Tensor f4 = random_tensor({2, 4, 8, 8}, fx.rng, -3, 3);
    const Tensor f5 = random_tensor({2, 4, 4, 4}, fx.rng, -3, 3);
    const Tensor y = fx.rpl(f4, f5);
    for (std::size_t i = 0; i < f4.numel(); ++i) {
        const double ratio = y.data()[i] / f4.data()[i];
        EXPECT_GE(ratio, 1.5);
        EXPECT_LE(ratio, 3.0);
    }
}

TEST(Rpl, OutputShape) {
    for (bool cross : {false, true}) {
        ParamStore store;
        Rng rng(6);
        const Rpl rpl = make_rpl(store, "rpl", {8, 4, cross, 4}, rng);
        const Tensor y = rpl(random_tensor({2, 8, 8, 8}, rng), random_tensor({2, 8, 4, 4}, rng));
        EXPECT_EQ(y.shape(), (Shape{2, 8, 8, 8}));
        EXPECT_THROW(rpl(random_tensor({2, 8, 8, 8}, rng), random_tensor({2, 8, 3, 3}, rng)), ShapeError);
        EXPECT_THROW(rpl(random_tensor({2, 8, 8, 8}, rng), random_tensor({1, 8, 4, 4}, rng)), ShapeError);
    }
}

TEST(Rpl, CrossGatingSwapsMaps) {
    // With uniform inputs both gating variants see identical maps, so they agree.
    RplFixture plain(false), cross(true);
    const Tensor f4 = Tensor::full({1, 4, 4, 4}, 0.7), f5 = Tensor::full({1, 4, 2, 2}, 0.7);
    EXPECT_LE(testutil::max_abs_diff(plain.rpl(f4, f5), cross.rpl(f4, f5)), 1e-15);
    // f4 gated by f5's spatial map: a hot spot in f5 shows up in f4's output.
    const Tensor hot = Tensor::from({1, 4, 2, 2}, {9, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
    const Tensor a = plain.rpl(f4, hot), b = cross.rpl(f4, hot);
    EXPECT_DOUBLE_EQ(a.at(0, 0, 0, 0), a.at(0, 0, 3, 3));
    EXPECT_GT(b.at(0, 0, 0, 0), b.at(0, 0, 3, 3));
}

TEST(ProportionGuidance, ZeroWeightsGiveOneHalf) {
    ParamStore store;
    Rng rng(7);
    const ProportionGuidance pg = make_proportion_guidance(store, "pg", 8, 4, rng);
    testutil::fill_params(store, "pg", 0.0);
    const Tensor p = pg(random_tensor({3, 8, 2, 2}, rng));
    EXPECT_EQ(p.shape(), (Shape{3, 1, 1, 1}));
    for (double v : p.data()) EXPECT_EQ(v, 0.5);
    EXPECT_THROW(make_proportion_guidance(store, "pg2", 8, 0, rng), ConfigError);
}

TEST(ProportionTarget, Examples) {
    EXPECT_DOUBLE_EQ(region_proportion_target(Tensor::zeros({1, 1, 4, 4})).item(), 0.0);
    EXPECT_DOUBLE_EQ(region_proportion_target(Tensor::full({1, 1, 4, 4}, 1.0)).item(), 1.0);
    std::vector<double> quarter(16, 0.0);
    for (int i = 0; i < 4; ++i) quarter[i] = 1.0;
    EXPECT_DOUBLE_EQ(region_proportion_target(Tensor::from({1, 1, 4, 4}, quarter)).item(), 0.25);
}

TEST(Bins, Examples) {
    EXPECT_EQ(bin_proportion(0.10), ProportionBin::Small);
    EXPECT_EQ(bin_proportion(0.30), ProportionBin::Mid);
    EXPECT_EQ(bin_proportion(0.60), ProportionBin::Large);
    EXPECT_EQ(bin_proportion(0.25), ProportionBin::Mid);
    EXPECT_EQ(bin_proportion(0.50), ProportionBin::Mid);
    EXPECT_EQ(bin_proportion(std::nextafter(0.25, 0.0)), ProportionBin::Small);
    EXPECT_EQ(bin_proportion(std::nextafter(0.5, 1.0)), ProportionBin::Large);
}

TEST(Bins, Monotone) {
    int last = 0;
    for (int i = 0; i <= 1000; ++i) {
        const int b = static_cast<int>(bin_proportion(i / 1000.0));
        EXPECT_GE(b, last);
        last = b;
    }
}

TEST(Bins, InvalidThresholds) {
    EXPECT_THROW(bin_proportion(0.3, {0.5, 0.25}), ConfigError);
    EXPECT_THROW(bin_proportion(0.3, {0.3, 0.3}), ConfigError);
    EXPECT_THROW(bin_proportion(0.3, {-0.1, 0.5}), ConfigError);
    EXPECT_THROW(bin_proportion(0.3, {0.25, 1.5}), ConfigError);
}
