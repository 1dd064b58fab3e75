#include "monce/weighting.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace monce;

namespace {

// 3x3 similarity whose row 0 is [., 0.9, 0.1].
Matrix row_fixture() {
    Matrix s(3, 3);
    s << 1.0, 0.9, 0.1,
         0.3, 1.0, -0.2,
         0.5, 0.5, 1.0;
    return s;
}

}  // namespace

TEST(HardWeights, ScalarSoftmaxValues) {
    const auto w = hard_weights(row_fixture(), 0.4);
    // softmax of [2.25, 0.25]
    EXPECT_NEAR(w.w(0, 1), 0.8807970779778823, 1e-12);
    EXPECT_NEAR(w.w(0, 2), 0.11920292202211769, 1e-12);
    EXPECT_EQ(w.w(0, 0), 0.0);
    EXPECT_EQ(w.kind, WeightKind::row_stochastic);
    EXPECT_EQ(w.source, WeightSource::hard);
}

TEST(EasyWeights, ScalarSoftmaxValuesReversed) {
    const auto w = easy_weights(row_fixture(), 0.4);
    EXPECT_NEAR(w.w(0, 1), 0.11920292202211769, 1e-12);
    EXPECT_NEAR(w.w(0, 2), 0.8807970779778823, 1e-12);
    // row 2 has equal off-diagonal similarities
    EXPECT_NEAR(w.w(2, 0), 0.5, 1e-15);
    EXPECT_NEAR(w.w(2, 1), 0.5, 1e-15);
}

TEST(Weights, ConstantRowIsUniform) {
    Matrix s = Matrix::Constant(5, 5, 0.3);
    s.diagonal().setOnes();
    for (const auto& w : {hard_weights(s, 0.1), easy_weights(s, 0.1)}) {
        for (Eigen::Index i = 0; i < 5; ++i)
            for (Eigen::Index j = 0; j < 5; ++j) EXPECT_NEAR(w.w(i, j), i == j ? 0.0 : 0.25, 1e-15);
    }
}

TEST(Weights, MatchScalarOracle) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = monce::testing::random_unit_rows(6, 4, rng);
        const auto y = monce::testing::random_unit_rows(6, 4, rng);
        const auto sr = monce::testing::scalar_similarity(x, y);
        const Matrix s = similarity(monce::testing::to_features(x), monce::testing::to_features(y));
        for (bool hard : {true, false}) {
            const auto expect = monce::testing::scalar_weights(sr, 0.1, hard);
            const auto w = hard ? hard_weights(s, 0.1) : easy_weights(s, 0.1);
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) EXPECT_NEAR(w.w(i, j), expect[i][j], 1e-12);
        }
    }
}

TEST(Weights, LargeBetaFlattens) {
    // With |S| <= 1 each off-diagonal weight lies in
    // [1/(1 + (N-2) e^{2/beta}), e^{2/beta}/(e^{2/beta} + N - 2)]; at beta = 1e3
    // that is within 1e-4 of 1/(N-1) once N >= 22.
    std::mt19937 rng(8);
    for (int n : {22, 32, 64}) {
        const auto x = monce::testing::to_features(monce::testing::random_unit_rows(n, 3, rng));
        const auto y = monce::testing::to_features(monce::testing::random_unit_rows(n, 3, rng));
        const Matrix s = similarity(x, y);
        const Matrix u = uniform_weights(n).w;
        EXPECT_LE((hard_weights(s, 1e3).w - u).cwiseAbs().maxCoeff(), 1e-4);
        EXPECT_LE((easy_weights(s, 1e3).w - u).cwiseAbs().maxCoeff(), 1e-4);
    }
}

TEST(Weights, LargeBetaWithinSoftmaxBound) {
    std::mt19937 rng(18);
    for (int n = 2; n <= 12; ++n) {
        const auto x = monce::testing::to_features(monce::testing::random_unit_rows(n, 3, rng));
        const auto y = monce::testing::to_features(monce::testing::random_unit_rows(n, 3, rng));
        const Matrix s = similarity(x, y);
        const double e = std::exp(2.0 / 1e3);
        const double hi = e / (e + n - 2), lo = 1.0 / (1.0 + (n - 2) * e);
        for (const auto& w : {hard_weights(s, 1e3).w, easy_weights(s, 1e3).w}) {
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (i == j) continue;
                    EXPECT_LE(w(i, j), hi + 1e-15);
                    EXPECT_GE(w(i, j), lo - 1e-15);
                }
        }
    }
}

TEST(Weights, SmallBetaDoesNotOverflow) {
    Matrix s(3, 3);
    s << 1.0, 1.0, -1.0,
         -1.0, 1.0, 1.0,
         1.0, -1.0, 1.0;
    const auto w = hard_weights(s, 1e-3);  // exponents of +-1000
    EXPECT_TRUE(w.w.allFinite());
    EXPECT_NEAR(w.w(0, 1), 1.0, 1e-12);
    const auto e = easy_weights(s, 1e-3);
    EXPECT_TRUE(e.w.allFinite());
    EXPECT_NEAR(e.w(0, 2), 1.0, 1e-12);
}

TEST(Weights, RowsSumToOneAndDiagonalZero) {
    std::mt19937 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + trial % 9;
        const auto x = monce::testing::to_features(monce::testing::random_unit_rows(n, 5, rng));
        const auto y = monce::testing::to_features(monce::testing::random_unit_rows(n, 5, rng));
        const Matrix s = similarity(x, y);
        for (const auto& w : {hard_weights(s, 0.05), easy_weights(s, 0.5)}) {
            EXPECT_TRUE((w.w.array() >= 0.0).all());
            for (Eigen::Index i = 0; i < n; ++i) {
                EXPECT_EQ(w.w(i, i), 0.0);
                EXPECT_NEAR(w.w.row(i).sum(), 1.0, 1e-6);
            }
        }
    }
}

TEST(UniformWeights, SmallCases) {
    Matrix two(2, 2);
    two << 0.0, 1.0, 1.0, 0.0;
    EXPECT_EQ(uniform_weights(2).w, two);
    const auto w3 = uniform_weights(3).w;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_EQ(w3(i, j), i == j ? 0.0 : 0.5);
    for (int n = 2; n < 20; ++n) {
        const auto w = uniform_weights(n).w;
        for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-14);
    }
}

TEST(Weights, DegenerateAnchor) {
    const Matrix one = Matrix::Ones(1, 1);
    for (auto fn : {+[](const Matrix& s) { return hard_weights(s, 0.1); },
                    +[](const Matrix& s) { return easy_weights(s, 0.1); }}) {
        try {
            fn(one);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::DegenerateAnchor);
        }
    }
    EXPECT_THROW(uniform_weights(1), Error);
    EXPECT_THROW(hard_weights(Matrix::Ones(3, 3), 0.0), Error);
}

TEST(Weights, HardAndEasyOrderOpposite) {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix s(5, 5);
        for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = u(rng);
        const auto h = hard_weights(s, 0.1).w;
        const auto e = easy_weights(s, 0.1).w;
        for (Eigen::Index i = 0; i < 5; ++i)
            for (Eigen::Index j = 0; j < 5; ++j)
                for (Eigen::Index k = 0; k < 5; ++k) {
                    if (j == i || k == i || !(s(i, j) > s(i, k))) continue;
                    EXPECT_GE(h(i, j), h(i, k));
                    EXPECT_LE(e(i, j), e(i, k));
                }
    }
}
