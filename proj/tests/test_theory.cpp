#include <gtest/gtest.h>

#include <cmath>

#include "more/theory.hpp"

using namespace more;

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST(Lemma, IdentityIsTriangleInequality) {
    const std::vector<double> x{3, 4, 1, 2};
    const auto rep = lemma_bound(DenseMatrix::identity(4), x, 2);
    EXPECT_NEAR(rep.lhs, norm2(x), 1e-15);
    EXPECT_NEAR(rep.rhs, 5.0 + std::sqrt(5.0), 1e-15);
    EXPECT_FALSE(rep.violated);
    EXPECT_NEAR(rep.slack, rep.rhs - rep.lhs, 1e-15);
}

TEST(Lemma, SingleNonzeroBlockIsEquality) {
    Rng rng(1);
    DenseMatrix w(9, 9);
    const DenseMatrix blk = random_gaussian(3, 3, rng);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) w(3 + i, 6 + j) = blk(i, j);
    std::vector<double> x(9);
    for (double& v : x) v = rng.normal();
    const auto rep = lemma_bound(w, x, 3);
    EXPECT_NEAR(rep.lhs, rep.rhs, 1e-12);
    EXPECT_FALSE(rep.violated);
}

TEST(Lemma, RandomSeeds) {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto rep = check_lemma_submatrix(s, 4);
        EXPECT_FALSE(rep.violated) << "seed " << s;
        EXPECT_EQ(rep.instance_seed, s);
    }
}

TEST(Lemma, ShapeChecks) {
    EXPECT_THROW(lemma_bound(DenseMatrix::identity(5), std::vector<double>(5), 2), StructuralError);
    EXPECT_THROW(lemma_bound(DenseMatrix::identity(4), std::vector<double>(3), 2), StructuralError);
}

TEST(Corollary, Identity) {
    const auto rep = corollary_bound(DenseMatrix::identity(4), 2);
    EXPECT_NEAR(rep.lhs, 1.0, 1e-14);
    EXPECT_NEAR(rep.rhs, 2.0, 1e-14);
    EXPECT_FALSE(rep.violated);
}

TEST(Corollary, BlockDiagonalTakesMaxBlock) {
    Rng rng(2);
    DenseMatrix w(9, 9);
    double max_block = 0.0, sum = 0.0;
    for (std::size_t b = 0; b < 3; ++b) {
        const DenseMatrix blk = random_gaussian(3, 3, rng);
        const double s = spectral_norm(blk);
        max_block = std::max(max_block, s);
        sum += s;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) w(3 * b + i, 3 * b + j) = blk(i, j);
    }
    const auto rep = corollary_bound(w, 3);
    EXPECT_NEAR(rep.lhs, max_block, 1e-12);
    EXPECT_NEAR(rep.rhs, sum, 1e-12);
}

TEST(Corollary, RandomSeedsAndSummationSanity) {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto rep = check_corollary_spectral(s, 4);
        EXPECT_FALSE(rep.violated) << "seed " << s;
        Rng rng(s);
        const DenseMatrix w = random_gaussian(16, 16, rng);
        double mx = 0.0;
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t k = 0; k < 4; ++k) mx = std::max(mx, spectral_norm(slice(w, 4 * j, 4 * k, 4, 4)));
        EXPECT_LE(rep.rhs, 16.0 * mx * (1 + 1e-12));
    }
}

TEST(Estimation, TruncationStart) {
    EXPECT_EQ(truncation_start(MonarchConfig(16, 4, 4), Regime::square_q1), 2u);
    EXPECT_EQ(truncation_start(MonarchConfig(16, 2, 4), Regime::rect), 3u);
    EXPECT_EQ(truncation_start(MonarchConfig(64, 4, 8), Regime::rect), 3u);
    EXPECT_THROW(truncation_start(MonarchConfig(16, 2, 4), Regime::square_q1), StructuralError);
    EXPECT_THROW(truncation_start(MonarchConfig(16, 4, 4), Regime::rect), StructuralError);
    EXPECT_THROW(truncation_start(MonarchConfig(18, 2, 3), Regime::rect), StructuralError);
}

// L = 1: the prefix is the identity, so lhs equals the projection residual
// and rhs carries the factor ||I||_F^2 = n.
TEST(Estimation, SingleLayer) {
    const MonarchConfig c(16, 4, 4);
    Rng rng(3);
    const std::vector<DenseMatrix> layers{random_full_rank(16, rng)};
    const DenseMatrix target = random_full_rank(16, rng);
    const auto rep = estimation_error_bound(layers, target, c, Regime::square_q1);
    const double direct = project(subtract(target, layers[0]), c).error_sq;
    EXPECT_NEAR(rep.bound.lhs, direct, 1e-10 * direct);
    EXPECT_NEAR(rep.projection_residual, direct, 1e-10 * direct);
    EXPECT_NEAR(rep.bound.rhs, 16.0 * rep.projection_residual, 1e-12 * rep.bound.rhs);
    EXPECT_TRUE(rep.identity_holds);
}

TEST(Estimation, ZeroErrorTarget) {
    const MonarchConfig c(16, 4, 4);
    Rng rng(4);
    std::vector<DenseMatrix> layers;
    for (int l = 0; l < 3; ++l) layers.push_back(random_full_rank(16, rng));
    const DenseMatrix target = matmul(matmul(layers[0], layers[1]), layers[2]);
    const auto rep = estimation_error_bound(layers, target, c, Regime::square_q1);
    EXPECT_LT(rep.bound.lhs, 1e-20);
    EXPECT_LT(rep.projection_residual, 1e-20);
    EXPECT_FALSE(rep.bound.violated);
}

TEST(Estimation, SingularPrefixThrows) {
    const MonarchConfig c(16, 4, 4);
    Rng rng(5);
    const std::vector<DenseMatrix> layers{DenseMatrix(16, 16), random_full_rank(16, rng)};
    EXPECT_THROW(estimation_error_bound(layers, random_full_rank(16, rng), c, Regime::square_q1), NumericalError);
}

TEST(Estimation, SquareRegimeSeeds) {
    const MonarchConfig c(16, 4, 4);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto rep = check_estimation_error(s, 3, c, Regime::square_q1);
        EXPECT_FALSE(rep.bound.violated) << "seed " << s;
        EXPECT_TRUE(rep.identity_holds) << "seed " << s << " rel " << rep.identity_rel_err;
        EXPECT_EQ(rep.truncation_start, 2u);
    }
}

TEST(Estimation, RectRegimeSeeds) {
    const MonarchConfig c(16, 2, 4);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto rep = check_estimation_error(s, 3, c, Regime::rect);
        EXPECT_FALSE(rep.bound.violated) << "seed " << s;
        EXPECT_TRUE(rep.identity_holds) << "seed " << s << " rel " << rep.identity_rel_err;
        EXPECT_EQ(rep.truncation_start, 3u);
    }
}

// A wrong truncation index breaks the identity, so the check is discriminating.
TEST(Estimation, WrongIndexBreaksIdentity) {
    const MonarchConfig c(16, 2, 4);
    Rng rng(6);
    const DenseMatrix e = random_gaussian(16, 16, rng);
    const double residual = project(e, c).error_sq;
    EXPECT_NEAR(sigma_tail_sum(e, c, 3), residual, 1e-9 * residual);
    EXPECT_GT(std::abs(sigma_tail_sum(e, c, 2) - residual), 1e-3 * residual);
}

TEST(FullRank, ConditionCapped) {
    Rng rng(7);
    for (int t = 0; t < 10; ++t) {
        const auto s = svd(random_full_rank(16, rng)).singular_values;
        EXPECT_LE(s.front() / s.back(), 1e3 * (1 + 1e-9));
        EXPECT_GE(s.back(), 1e-2 * (1 - 1e-9));
    }
}
