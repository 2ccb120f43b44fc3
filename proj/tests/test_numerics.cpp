#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "more/numerics.hpp"

using namespace more;

namespace {

DenseMatrix naive_matmul(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t j = 0; j < b.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

Eigen::MatrixXd to_eigen(const DenseMatrix& a) {
    Eigen::MatrixXd e(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) e(i, j) = a(i, j);
    return e;
}

DenseMatrix diag(std::initializer_list<double> d) {
    DenseMatrix m(d.size(), d.size());
    std::size_t i = 0;
    for (double v : d) m(i, i) = v, ++i;
    return m;
}

}  // namespace

TEST(DenseMatrix, RejectsBadLengthAndNonFinite) {
    EXPECT_THROW(DenseMatrix(2, 2, {1, 2, 3}), StructuralError);
    EXPECT_THROW(DenseMatrix(1, 2, {1, NAN}), StructuralError);
    EXPECT_THROW(DenseMatrix(1, 1, {INFINITY}), StructuralError);
}

TEST(Matmul, IdentityLeavesMatrix) {
    Rng rng(1);
    const DenseMatrix b = random_gaussian(3, 5, rng);
    EXPECT_EQ(matmul(DenseMatrix::identity(3), b), b);
}

TEST(Matmul, HandArithmetic) {
    const auto a = DenseMatrix::from_rows({{1, 2}, {3, 4}});
    const auto b = DenseMatrix::from_rows({{0, 1}, {1, 0}});
    EXPECT_EQ(matmul(a, b), DenseMatrix::from_rows({{2, 1}, {4, 3}}));
}

TEST(Matmul, MatchesTripleLoop) {
    Rng rng(7);
    const DenseMatrix a = random_gaussian(8, 8, rng);
    const DenseMatrix b = random_gaussian(8, 8, rng);
    EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, ShapeMismatchThrows) {
    EXPECT_THROW(matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), StructuralError);
}

TEST(Matmul, Associative) {
    Rng rng(11);
    for (int t = 0; t < 10; ++t) {
        const DenseMatrix a = random_gaussian(5, 7, rng), b = random_gaussian(7, 4, rng), c = random_gaussian(4, 6, rng);
        const DenseMatrix lhs = matmul(matmul(a, b), c), rhs = matmul(a, matmul(b, c));
        EXPECT_LT(max_abs_diff(lhs, rhs), 1e-10 * std::max(1.0, fro_norm(lhs)));
    }
}

TEST(Svd, Diagonal) {
    const auto s = svd(diag({3, 1})).singular_values;
    ASSERT_EQ(s.size(), 2u);
    EXPECT_DOUBLE_EQ(s[0], 3.0);
    EXPECT_DOUBLE_EQ(s[1], 1.0);
}

TEST(Svd, OrthogonalHasUnitSpectrum) {
    Rng rng(3);
    const DenseMatrix q = svd(random_gaussian(6, 6, rng)).u;
    for (double v : svd(q).singular_values) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Svd, MatchesGramEigenvaluesFromEigen) {
    Rng rng(5);
    const DenseMatrix a = random_gaussian(6, 4, rng);
    const SvdResult r = svd(a);
    EXPECT_LT(max_abs_diff(reconstruct(r), a), 1e-10);

    const Eigen::MatrixXd e = to_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(e.transpose() * e);
    std::vector<double> ev(eig.eigenvalues().data(), eig.eigenvalues().data() + 4);
    std::sort(ev.rbegin(), ev.rend());
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.singular_values[i], std::sqrt(ev[i]), 1e-8);
}

TEST(Svd, WideMatrixAndOrthonormalFactors) {
    Rng rng(9);
    const DenseMatrix a = random_gaussian(3, 7, rng);
    const SvdResult r = svd(a);
    EXPECT_EQ(r.u.rows(), 3u);
    EXPECT_EQ(r.vt.cols(), 7u);
    EXPECT_LT(max_abs_diff(reconstruct(r), a), 1e-10);
    EXPECT_LT(max_abs_diff(matmul(transpose(r.u), r.u), DenseMatrix::identity(r.u.cols())), 1e-12);
    EXPECT_LT(max_abs_diff(matmul(r.vt, transpose(r.vt)), DenseMatrix::identity(r.vt.rows())), 1e-12);
    EXPECT_TRUE(std::is_sorted(r.singular_values.rbegin(), r.singular_values.rend()));
}

TEST(Svd, SignConventionAndDeterminism) {
    Rng rng(13);
    const DenseMatrix a = random_gaussian(5, 5, rng);
    const SvdResult r1 = svd(a), r2 = svd(a);
    EXPECT_EQ(r1.u, r2.u);
    EXPECT_EQ(r1.vt, r2.vt);
    for (std::size_t j = 0; j < r1.u.cols(); ++j) {
        double best = 0.0;
        for (std::size_t i = 0; i < r1.u.rows(); ++i)
            if (std::abs(r1.u(i, j)) > std::abs(best)) best = r1.u(i, j);
        EXPECT_GT(best, 0.0);
    }
}

TEST(Svd, RankDeficientReconstructs) {
    Rng rng(17);
    const DenseMatrix a = matmul(random_gaussian(6, 2, rng), random_gaussian(2, 6, rng));
    const SvdResult r = svd(a);
    EXPECT_LT(max_abs_diff(reconstruct(r), a), 1e-10);
    EXPECT_LT(max_abs_diff(matmul(transpose(r.u), r.u), DenseMatrix::identity(6)), 1e-10);
}

TEST(Svd, FrobeniusEqualsSpectrumMass) {
    Rng rng(19);
    for (int t = 0; t < 10; ++t) {
        const DenseMatrix a = random_gaussian(7, 5, rng);
        double s2 = 0.0;
        for (double s : svd(a).singular_values) s2 += s * s;
        EXPECT_NEAR(s2, fro_norm_sq(a), 1e-9 * fro_norm_sq(a));
    }
}

TEST(Svd, ZeroMatrix) {
    const SvdResult r = svd(DenseMatrix(3, 3));
    for (double s : r.singular_values) EXPECT_EQ(s, 0.0);
    EXPECT_LT(max_abs_diff(matmul(transpose(r.u), r.u), DenseMatrix::identity(3)), 1e-12);
}

TEST(TruncatedSvd, DiagonalResidual) {
    const auto t = truncated_svd(diag({3, 2, 1}), 1);
    EXPECT_NEAR(t.residual, 5.0, 1e-12);
    ASSERT_EQ(t.factors.singular_values.size(), 1u);
    EXPECT_NEAR(t.factors.singular_values[0], 3.0, 1e-12);
}

TEST(TruncatedSvd, FullRankKeepsEverything) {
    Rng rng(23);
    const DenseMatrix a = random_gaussian(5, 4, rng);
    EXPECT_LT(truncated_svd(a, 4).residual, 1e-18 * fro_norm_sq(a));
}

TEST(TruncatedSvd, ResidualMatchesExplicitReconstruction) {
    Rng rng(29);
    const DenseMatrix a = random_gaussian(4, 4, rng);
    const auto t = truncated_svd(a, 2);
    EXPECT_NEAR(t.residual, fro_norm_sq(subtract(a, reconstruct(t.factors))), 1e-10);
}

TEST(TruncatedSvd, ZeroRankAndOutOfRange) {
    Rng rng(31);
    const DenseMatrix a = random_gaussian(3, 4, rng);
    const auto t = truncated_svd(a, 0);
    EXPECT_TRUE(t.factors.singular_values.empty());
    EXPECT_DOUBLE_EQ(t.residual, fro_norm_sq(a));
    EXPECT_THROW(truncated_svd(a, 4), StructuralError);
}

TEST(TruncatedSvd, EckartYoungSpotCheck) {
    Rng rng(37);
    const DenseMatrix a = random_gaussian(6, 6, rng);
    for (std::size_t q = 0; q <= 6; ++q) {
        const double best = truncated_svd(a, q).residual;
        for (int t = 0; t < 200; ++t) {
            const DenseMatrix b = q == 0 ? DenseMatrix(6, 6) : matmul(random_gaussian(6, q, rng), random_gaussian(q, 6, rng));
            EXPECT_LE(best, fro_norm_sq(subtract(a, b)) + 1e-12);
        }
    }
}

TEST(Norms, Identity) {
    const DenseMatrix i4 = DenseMatrix::identity(4);
    EXPECT_DOUBLE_EQ(fro_norm_sq(i4), 4.0);
    EXPECT_NEAR(spectral_norm(i4), 1.0, 1e-15);
    EXPECT_EQ(numerical_rank(i4, 1e-10), 4u);
}

TEST(Norms, Zero) {
    const DenseMatrix z(3, 3);
    EXPECT_EQ(fro_norm_sq(z), 0.0);
    EXPECT_EQ(numerical_rank(z, 1e-10), 0u);
}

TEST(Norms, RankTwoOuterProducts) {
    Rng rng(41);
    DenseMatrix a(8, 8);
    for (int t = 0; t < 2; ++t) a = add(a, matmul(random_gaussian(8, 1, rng), random_gaussian(1, 8, rng)));
    EXPECT_EQ(numerical_rank(a, 1e-10), 2u);
}

TEST(Norms, RelTolRange) {
    EXPECT_THROW(numerical_rank(DenseMatrix::identity(2), 0.0), StructuralError);
    EXPECT_THROW(numerical_rank(DenseMatrix::identity(2), 1.0), StructuralError);
}

TEST(MatrixText, RoundTripIsExact) {
    Rng rng(43);
    const DenseMatrix a = random_gaussian(3, 5, rng);
    std::stringstream ss;
    write_matrix_text(ss, a);
    EXPECT_EQ(read_matrix_text(ss), a);
}

TEST(MatrixText, RejectsMalformedInput) {
    for (const char* text : {"", "2,2\n1,2\n3\n", "2,2\n1,2\n", "1,2\n1,x\n", "x\n", "1,1\nnan\n", "1,2\n1,2,3\n"}) {
        std::stringstream ss(text);
        EXPECT_THROW(read_matrix_text(ss), StructuralError) << text;
    }
}
