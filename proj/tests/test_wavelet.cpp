#include <gtest/gtest.h>

#include "rdnet/ops.hpp"
#include "rdnet/wavelet.hpp"
#include "test_util.hpp"

using namespace rdnet;
using testutil::random_tensor;

namespace {

double energy(std::span<const double> v) {
    double e = 0;
    for (double x : v) e += x * x;
    return e;
}

}  // namespace

TEST(Dwt, ConstantFieldHasOnlyLowBand) {
    const WaveletQuad q = dwt2(Tensor::full({1, 2, 4, 6}, 0.75));
    EXPECT_EQ(q.ll.shape(), (Shape{1, 2, 2, 3}));
    for (double v : q.ll.data()) EXPECT_DOUBLE_EQ(v, 1.5);
    for (std::size_t k = 1; k < 4; ++k)
        for (double v : q[k].data()) EXPECT_EQ(v, 0.0);
}

TEST(Dwt, SingleBlock) {
    const WaveletQuad q = dwt2(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}));
    EXPECT_DOUBLE_EQ(q.ll.item(), 5.0);
    EXPECT_DOUBLE_EQ(q.lh.item(), -2.0);
    EXPECT_DOUBLE_EQ(q.hl.item(), -1.0);
    EXPECT_DOUBLE_EQ(q.hh.item(), 0.0);
}

TEST(Dwt, MatchesBlockFormula) {
    Rng rng(1);
    const Tensor x = random_tensor({2, 3, 6, 8}, rng);
    const WaveletQuad q = dwt2(x);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 4; ++j) {
                    const double a = x.at(n, c, 2 * i, 2 * j), b = x.at(n, c, 2 * i, 2 * j + 1);
                    const double cc = x.at(n, c, 2 * i + 1, 2 * j), d = x.at(n, c, 2 * i + 1, 2 * j + 1);
                    EXPECT_NEAR(q.ll.at(n, c, i, j), (a + b + cc + d) / 2, 1e-15);
                    EXPECT_NEAR(q.lh.at(n, c, i, j), (a + b - cc - d) / 2, 1e-15);
                    EXPECT_NEAR(q.hl.at(n, c, i, j), (a - b + cc - d) / 2, 1e-15);
                    EXPECT_NEAR(q.hh.at(n, c, i, j), (a - b - cc + d) / 2, 1e-15);
                }
}

TEST(Idwt, Examples) {
    const Shape s{1, 1, 1, 1};
    const Tensor z = Tensor::zeros(s);
    EXPECT_EQ(testutil::values(idwt2({Tensor::full(s, 2.0), z, z, z})), (std::vector<double>{1, 1, 1, 1}));
    EXPECT_EQ(testutil::values(idwt2({z, z, z, Tensor::full(s, 2.0)})), (std::vector<double>{1, -1, -1, 1}));
    EXPECT_EQ(testutil::values(idwt2({Tensor::full(s, 5.0), Tensor::full(s, -2.0), Tensor::full(s, -1.0), z})),
              (std::vector<double>{1, 2, 3, 4}));
}

TEST(Dwt, RoundtripAndEnergy) {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const Shape s{1 + rng.index(2), 1 + rng.index(3), 2 * (1 + rng.index(6)), 2 * (1 + rng.index(6))};
        const Tensor x = random_tensor(s, rng, -10, 10);
        const WaveletQuad q = dwt2(x);
        EXPECT_LE(testutil::max_abs_diff(idwt2(q), x), 1e-12);
        double e = 0;
        for (std::size_t k = 0; k < 4; ++k) e += energy(q[k].data());
        EXPECT_NEAR(e, energy(x.data()), 1e-10 * energy(x.data()));
    }
}

TEST(Dwt, IsLinear) {
    Rng rng(3);
    const Tensor x = random_tensor({1, 2, 4, 4}, rng), y = random_tensor({1, 2, 4, 4}, rng);
    const WaveletQuad lhs = dwt2(add(scale(x, 2.0), scale(y, -0.5)));
    const WaveletQuad qx = dwt2(x), qy = dwt2(y);
    for (std::size_t k = 0; k < 4; ++k)
        EXPECT_LE(testutil::max_abs_diff(lhs[k], add(scale(qx[k], 2.0), scale(qy[k], -0.5))), 1e-14);
}

TEST(Dwt, RejectsOddSizes) {
    EXPECT_THROW(dwt2(Tensor::zeros({1, 1, 3, 4})), ArgumentError);
    EXPECT_THROW(dwt2(Tensor::zeros({1, 1, 4, 5})), ArgumentError);
}

TEST(Idwt, RejectsMismatchedComponents) {
    const Tensor a = Tensor::zeros({1, 1, 2, 2}), b = Tensor::zeros({1, 1, 2, 3});
    EXPECT_THROW(idwt2({a, a, b, a}), ShapeError);
}

TEST(Dwt, GradientOfRoundtripIsIdentity) {
    Rng rng(4);
    const Tensor x = random_tensor({1, 1, 4, 4}, rng, -1, 1, true);
    const Tensor w = random_tensor({1, 1, 4, 4}, rng);
    sum_all(mul(idwt2(dwt2(x)), w)).backward();
    EXPECT_LE(testutil::max_abs_diff(x.grad(), w.data()), 1e-14);
}
