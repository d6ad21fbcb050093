#include <gtest/gtest.h>

#include "rdnet/gradcheck.hpp"
#include "rdnet/training.hpp"
#include "test_util.hpp"

using namespace rdnet;
using testutil::random_tensor;

namespace {

ModelConfig tiny(std::size_t size = 32) {
    ModelConfig cfg = gradcheck_model_config();
    cfg.input_size = size;
    cfg.batch = 2;
    return cfg;
}

std::vector<Sample> samples(std::size_t n, std::size_t size = 32) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(synth_sample(i, size, 3));
    return out;
}

}  // namespace

TEST(Backbone, PyramidShapes) {
    ModelConfig cfg = tiny(64);
    cfg.channels = {3, 5, 6, 8, 8};
    cfg.reduction_ratio = 2;
    Rdnet model(cfg);
    Rng rng(1);
    const FeaturePyramid p = model.backbone()(random_tensor({2, 3, 64, 64}, rng, 0, 1));
    for (std::size_t i = 0; i < 5; ++i) {
        const std::size_t side = 64 >> (i + 1);
        EXPECT_EQ(p[i].shape(), (Shape{2, cfg.channels[i], side, side})) << i;
    }
}

TEST(Backbone, ZeroWeightsGiveZeroPyramid) {
    Rdnet model(tiny());
    testutil::fill_params(model.params(), "backbone", 0.0);
    Rng rng(2);
    const FeaturePyramid p = model.backbone()(random_tensor({1, 3, 32, 32}, rng, 0, 1));
    for (std::size_t i = 0; i < 5; ++i)
        for (double v : p[i].data()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, RejectsIndivisibleInput) {
    Rdnet model(tiny());
    EXPECT_THROW(model.backbone()(Tensor::zeros({1, 3, 48, 48})), ConfigError);
}

TEST(Rdnet, OutputShapesAndRange) {
    for (std::size_t size : {32, 64, 96}) {
        Rdnet model(tiny(size));
        Rng rng(3);
        const SaliencyOutput out = model.forward(random_tensor({2, 3, size, size}, rng, 0, 1));
        EXPECT_EQ(out.s.shape(), (Shape{2, 1, size, size}));
        EXPECT_EQ(out.f_g.shape(), (Shape{2, 1, 1, 1}));
        for (double v : out.s.data()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(Rdnet, RejectsWrongChannelCount) {
    Rdnet model(tiny());
    EXPECT_THROW(model.forward(Tensor::zeros({1, 1, 32, 32})), ShapeError);
}

TEST(Rdnet, ConfigValidation) {
    ModelConfig cfg = tiny();
    cfg.input_size = 40;
    EXPECT_THROW(Rdnet{cfg}, ConfigError);
    cfg = tiny();
    cfg.channels = {4, 4, 4, 4, 8};
    EXPECT_THROW(Rdnet{cfg}, ConfigError);
    cfg = tiny();
    cfg.reduction_ratio = 3;
    EXPECT_THROW(Rdnet{cfg}, ConfigError);
    cfg = tiny();
    cfg.bins = {0.6, 0.4};
    EXPECT_THROW(Rdnet{cfg}, ConfigError);
}

TEST(Rdnet, GradientReachesImageAndEveryParameter) {
    Rdnet model(tiny());
    Rng rng(4);
    const Tensor image = random_tensor({1, 3, 32, 32}, rng, 0, 1, true);
    const std::vector<ProportionBin> large{ProportionBin::Large};
    const SaliencyOutput out = model.forward(image, large);
    add(mean_all(out.s), mean_all(out.f_g)).backward();
    ASSERT_TRUE(image.has_grad());
    double norm = 0;
    for (double g : image.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0);
    for (const auto& e : model.params().entries()) EXPECT_TRUE(e.value.has_grad()) << e.name;
}

TEST(Rdnet, SameSeedSameModel) {
    Rdnet a(tiny()), b(tiny());
    ModelConfig other = tiny();
    other.seed = 8;
    Rdnet c(other);
    Rng rng(5);
    const Tensor image = random_tensor({2, 3, 32, 32}, rng, 0, 1);
    EXPECT_TRUE(testutil::bitwise_equal(a.forward(image).s, b.forward(image).s));
    EXPECT_FALSE(testutil::bitwise_equal(a.forward(image).s, c.forward(image).s));
}

TEST(Rdnet, SuppliedGatingIgnoresProportionHead) {
    Rdnet model(tiny());
    Rng rng(6);
    const Tensor image = random_tensor({2, 3, 32, 32}, rng, 0, 1);
    const std::vector<ProportionBin> bins{ProportionBin::Small, ProportionBin::Large};
    const Tensor before = model.forward(image, bins).s;
    testutil::fill_params(model.params(), "pg.", 0.3);
    const SaliencyOutput after = model.forward(image, bins);
    EXPECT_TRUE(testutil::bitwise_equal(before, after.s));
    EXPECT_NE(after.f_g.data()[0], 0.0);
}

TEST(Rdnet, PredictedGatingFollowsHead) {
    Rdnet model(tiny());
    Rng rng(7);
    const Tensor image = random_tensor({1, 3, 32, 32}, rng, 0, 1);
    // zero weights with a large fc2 bias push the head to ~1 -> Large
    testutil::fill_params(model.params(), "pg.", 0.0);
    testutil::fill_params(model.params(), "pg.fc2.bias", 10.0);
    const std::vector<ProportionBin> large{ProportionBin::Large};
    EXPECT_TRUE(testutil::bitwise_equal(model.forward(image).s, model.forward(image, large).s));
    testutil::fill_params(model.params(), "pg.fc2.bias", -10.0);
    const std::vector<ProportionBin> small{ProportionBin::Small};
    EXPECT_TRUE(testutil::bitwise_equal(model.forward(image).s, model.forward(image, small).s));
}

TEST(TrainStep, ZeroRateRepeats) {
    Rdnet model(tiny());
    const auto [images, gts] = make_batch(samples(2));
    const RmspropConfig frozen{0.0, 0.9, 0.99, 1e-8};
    const LossReport a = train_step(model, images, gts, frozen);
    const LossReport b = train_step(model, images, gts, frozen);
    EXPECT_EQ(a.total, b.total);
    EXPECT_EQ(a.bce, b.bce);
    EXPECT_EQ(a.mse, b.mse);
    EXPECT_EQ(a.total, a.bce + a.iou + a.fm + a.mse);
}

TEST(TrainStep, LossDecreasesOnOneSample) {
    Rdnet model(tiny());
    const auto [images, gts] = make_batch(samples(1));
    const RmspropConfig optim{1e-3, 0.9, 0.99, 1e-8};
    const double first = train_step(model, images, gts, optim).total;
    double last = first;
    for (int i = 0; i < 49; ++i) last = train_step(model, images, gts, optim).total;
    EXPECT_LT(last, 0.7 * first);
}

TEST(TrainStep, RejectsBatchMismatch) {
    Rdnet model(tiny());
    const auto [images, gts] = make_batch(samples(2));
    EXPECT_THROW(train_step(model, images, slice_batch(gts, 0), {}), ShapeError);
}

TEST(Train, SeededRunsAreBitwiseIdentical) {
    const std::vector<Sample> data = samples(6);
    TrainOptions opt;
    opt.steps = 6;
    opt.batch = 2;
    opt.optim.lr = 1e-3;
    Rdnet a(tiny()), b(tiny());
    const auto la = train(a, data, opt), lb = train(b, data, opt);
    ASSERT_EQ(la.size(), 6u);
    for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(loss_csv_row(i, la[i]), loss_csv_row(i, lb[i]));
}

TEST(Train, BatchesCoverEachEpoch) {
    // 10 samples, batch 4: steps 0..4 span two full epochs
    std::vector<int> seen(10, 0);
    for (std::uint64_t step = 0; step < 5; ++step)
        for (std::size_t i : batch_indices(10, 4, step, 11)) ++seen[i];
    for (int v : seen) EXPECT_EQ(v, 2);
    EXPECT_EQ(batch_indices(10, 4, 3, 11), batch_indices(10, 4, 3, 11));
    EXPECT_NE(batch_indices(10, 4, 0, 11), batch_indices(10, 4, 0, 12));
}
