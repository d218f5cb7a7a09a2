// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "pickdraw/numerics.hpp"
#include "pickdraw/tensor.hpp"

using pickdraw::Rng;
using pickdraw::Tensor;
namespace num = pickdraw::num;

namespace {

void expect_tensor_near(const Tensor& a, const Tensor& b, double tol) {
    ASSERT_TRUE(a.same_shape(b)) << a.shape_str() << " vs " << b.shape_str();
    for (size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(SoftmaxRows, SymmetricPair) {
    Tensor y = num::softmax_rows(Tensor::from_rows({{0.0, 0.0}}));
    expect_tensor_near(y, Tensor::from_rows({{0.5, 0.5}}), 1e-15);
}

TEST(SoftmaxRows, ConstantRow) {
    Tensor y = num::softmax_rows(Tensor::from_rows({{7.25, 7.25, 7.25}}));
    expect_tensor_near(y, Tensor::from_rows({{1.0 / 3, 1.0 / 3, 1.0 / 3}}), 1e-15);
}

TEST(SoftmaxRows, HighPrecisionRow) {
    // softmax([1,2,3]) evaluated independently at 30-digit precision.
    Tensor y = num::softmax_rows(Tensor::from_rows({{1.0, 2.0, 3.0}}));
    expect_tensor_near(y,
                       Tensor::from_rows({{0.090030573170380457998, 0.24472847105479765247,
                                           0.66524095577482188953}}),
                       1e-15);
}

TEST(SoftmaxRows, RowsSumToOneUnderExtremeLogits) {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const double scale = trial % 2 ? 1.0 : 500.0;
        Tensor x = rng.normal_tensor({4, 7}, scale);
        Tensor y = num::softmax_rows(x);
        ASSERT_TRUE(y.all_finite());
        for (int i = 0; i < 4; ++i) {
            double s = 0.0;
            for (int j = 0; j < 7; ++j) {
                EXPECT_GE(y.at(i, j), 0.0);
                s += y.at(i, j);
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(SoftmaxRows, RejectsNonFinite) {
    Tensor x = Tensor::from_rows({{1.0, std::nan("")}});
    EXPECT_THROW(num::softmax_rows(x), std::invalid_argument);
}

TEST(SoftmaxRows, VjpHandCase) {
    // y = [0.5, 0.5], dy = [1, 0]: dx = y*(dy - dy.y) = [0.25, -0.25].
    Tensor dx = num::softmax_rows_vjp(Tensor::from_rows({{0.5, 0.5}}), Tensor::from_rows({{1.0, 0.0}}));
    expect_tensor_near(dx, Tensor::from_rows({{0.25, -0.25}}), 1e-15);
}

TEST(MinmaxNormalize, AffineByHand) {
    Tensor y = num::minmax_normalize(Tensor::from_rows({{2.0, 4.0}, {6.0, 10.0}}));
    expect_tensor_near(y, Tensor::from_rows({{0.0, 0.25}, {0.5, 1.0}}), 1e-15);
}

TEST(MinmaxNormalize, ConstantMapGoesToZero) {
    Tensor y = num::minmax_normalize(Tensor::full({3, 3}, 4.2));
    expect_tensor_near(y, Tensor({3, 3}), 0.0);
}

TEST(MinmaxNormalize, IdempotentAndBounded) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = rng.normal_tensor({8, 8}, 3.0);
        Tensor y = num::minmax_normalize(x);
        EXPECT_GE(y.min(), 0.0);
        EXPECT_LE(y.max(), 1.0);
        expect_tensor_near(num::minmax_normalize(y), y, 1e-12);
    }
}

TEST(MinmaxNormalize, PositiveAffineInvariance) {
    Rng rng(8);
    Tensor x = rng.normal_tensor({5, 5});
    Tensor ax = x * 3.5;
    for (size_t i = 0; i < ax.numel(); ++i) ax[i] += 11.0;
    expect_tensor_near(num::minmax_normalize(ax), num::minmax_normalize(x), 1e-12);
}

TEST(CosineDistance, AnalyticCases) {
    Tensor a = Tensor::from_rows({{1.0, 0.0}, {0.0, 2.0}});
    Tensor b = Tensor::from_rows({{3.0, 0.0}, {0.0, -1.0}});
    Tensor c = num::cosine_distance_matrix(a, b);
    EXPECT_NEAR(c.at(0, 0), 0.0, 1e-15);  // parallel
    EXPECT_NEAR(c.at(0, 1), 1.0, 1e-15);  // orthogonal
    EXPECT_NEAR(c.at(1, 1), 2.0, 1e-15);  // antiparallel
    EXPECT_NEAR(c.at(1, 0), 1.0, 1e-15);
}

TEST(CosineDistance, MatchesScalarRecomputation) {
    Rng rng(99);
    Tensor a = rng.normal_tensor({3, 4});
    Tensor b = rng.normal_tensor({5, 4});
    Tensor c = num::cosine_distance_matrix(a, b);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j) {
            long double dot = 0, na = 0, nb = 0;
            for (int k = 0; k < 4; ++k) {
                dot += static_cast<long double>(a.at(i, k)) * b.at(j, k);
                na += static_cast<long double>(a.at(i, k)) * a.at(i, k);
                nb += static_cast<long double>(b.at(j, k)) * b.at(j, k);
            }
            const double want = static_cast<double>(1.0L - dot / (sqrtl(na) * sqrtl(nb)));
            EXPECT_NEAR(c.at(i, j), want, 1e-12);
            EXPECT_GE(c.at(i, j), 0.0);
            EXPECT_LE(c.at(i, j), 2.0);
        }
}

TEST(CosineDistance, RescalingInvariance) {
    Rng rng(100);
    Tensor a = rng.normal_tensor({3, 6});
    Tensor b = rng.normal_tensor({4, 6});
    Tensor b2 = b;
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 6; ++k) b2.at(j, k) *= 0.5 + j;  // positive per-vector scale
    expect_tensor_near(num::cosine_distance_matrix(a, b2), num::cosine_distance_matrix(a, b), 1e-12);
}

TEST(CosineDistance, ZeroNormNamesIndex) {
    Tensor a = Tensor::from_rows({{1.0, 0.0}});
    Tensor b = Tensor::from_rows({{1.0, 1.0}, {0.0, 0.0}});
    try {
        num::cosine_distance_matrix(a, b);
        FAIL() << "expected throw";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("B[1]"), std::string::npos) << e.what();
    }
}

TEST(GaussianKernel, FrozenSize3Sigma1) {
    Tensor k = num::gaussian_kernel(3, 1.0);
    EXPECT_NEAR(k.sum(), 1.0, 1e-12);
    EXPECT_NEAR(k.at(1, 1), 0.20417995557165810183, 1e-15);
    EXPECT_NEAR(k.at(0, 1), 0.12384140315297397099, 1e-15);
    EXPECT_NEAR(k.at(0, 0), 0.07511360795411150355, 1e-15);
}

TEST(GaussianKernel, RejectsEvenSizeAndBadSigma) {
    EXPECT_THROW(num::gaussian_kernel(4, 1.0), std::invalid_argument);
    EXPECT_THROW(num::gaussian_kernel(3, 0.0), std::invalid_argument);
}

TEST(ReflectIndex, HalfSampleSymmetry) {
    EXPECT_EQ(num::reflect_index(-1, 4), 0);
    EXPECT_EQ(num::reflect_index(-2, 4), 1);
    EXPECT_EQ(num::reflect_index(4, 4), 3);
    EXPECT_EQ(num::reflect_index(5, 4), 2);
    EXPECT_EQ(num::reflect_index(2, 4), 2);
    EXPECT_EQ(num::reflect_index(-3, 1), 0);
}

TEST(GaussianSmooth, ConstantMapUnchanged) {
    Tensor x = Tensor::full({6, 6}, 2.5);
    expect_tensor_near(num::gaussian_smooth(x, 3, 1.0), x, 1e-12);
}

TEST(GaussianSmooth, CentralImpulseReproducesKernel) {
    Tensor x({7, 7});
    x.at(3, 3) = 1.0;
    Tensor y = num::gaussian_smooth(x, 3, 1.0);
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const double r2 = double(dy) * dy + double(dx) * dx;
            const double want = std::exp(-r2 / 2.0) /
                                (1.0 + 4.0 * std::exp(-0.5) + 4.0 * std::exp(-1.0));
            EXPECT_NEAR(y.at(3 + dy, 3 + dx), want, 1e-12);
        }
    EXPECT_NEAR(y.at(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(y.at(3, 5), 0.0, 1e-15);
}

TEST(GaussianSmooth, ConservesMassUnderReflectPadding) {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = rng.normal_tensor({9, 5});
        Tensor y = num::gaussian_smooth(x, 3, 1.0);
        EXPECT_NEAR(y.sum(), x.sum(), 1e-9);
    }
}

TEST(GaussianSmooth, Linearity) {
    Rng rng(6);
    Tensor x = rng.normal_tensor({8, 8});
    Tensor y = rng.normal_tensor({8, 8});
    Tensor mix = x * 2.0 + y * (-3.0);
    Tensor want = num::gaussian_smooth(x, 5, 1.5) * 2.0 + num::gaussian_smooth(y, 5, 1.5) * (-3.0);
    expect_tensor_near(num::gaussian_smooth(mix, 5, 1.5), want, 1e-9);
}

TEST(FrobeniusDistance, HandCases) {
    Tensor a = Tensor::from_rows({{1.0, 0.0}, {0.0, 0.0}});
    EXPECT_NEAR(num::frobenius_distance(a, Tensor({2, 2})), 1.0, 1e-15);
    EXPECT_NEAR(num::frobenius_distance(a, a), 0.0, 0.0);
    Tensor b = Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    EXPECT_NEAR(num::frobenius_distance(b, Tensor({2, 2})), 5.4772255750516611346, 1e-14);
}

TEST(FrobeniusDistance, MatchesScalarRecomputation) {
    Rng rng(11);
    Tensor a = rng.normal_tensor({4, 6});
    Tensor b = rng.normal_tensor({4, 6});
    long double s = 0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const long double d = static_cast<long double>(a[i]) - b[i];
        s += d * d;
    }
    EXPECT_NEAR(num::frobenius_distance(a, b), static_cast<double>(sqrtl(s)), 1e-12);
}

TEST(FrobeniusDistance, RejectsShapeMismatch) {
    EXPECT_THROW(num::frobenius_distance(Tensor({2, 2}), Tensor({2, 3})), std::invalid_argument);
}
