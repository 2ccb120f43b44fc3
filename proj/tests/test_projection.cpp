#include <gtest/gtest.h>

#include <set>

#include "more/projection.hpp"
#include "more/verify.hpp"

using namespace more;

TEST(Channels, SingleBlockHoldsAll) {
    const auto cs = channel_set(MonarchConfig(12, 1, 5));
    EXPECT_EQ(cs.channels(0, 0).size(), 5u);
}

TEST(Channels, SparseRegime) {
    const auto cs = channel_set(MonarchConfig(16, 4, 2));
    ASSERT_EQ(cs.channels(0, 0).size(), 1u);
    EXPECT_EQ(cs.channels(0, 0)[0], (Channel{0, 0}));
    EXPECT_TRUE(cs.channels(2, 0).empty());
    EXPECT_EQ(cs.total(), 8u);
}

TEST(Channels, DenseRegime) {
    const auto cs = channel_set(MonarchConfig(64, 4, 8));
    for (std::size_t ko = 0; ko < 4; ++ko)
        for (std::size_t ki = 0; ki < 4; ++ki) EXPECT_EQ(cs.channels(ko, ki).size(), 2u);
}

TEST(Channels, DisjointAndSatisfyIndexEquation) {
    for (const MonarchConfig c : {MonarchConfig(16, 4, 2), MonarchConfig(64, 4, 8), MonarchConfig(36, 6, 4),
                                  MonarchConfig(30, 5, 3)}) {
        const auto cs = channel_set(c);
        const std::size_t N = c.blocks(), r = c.block_rank();
        std::set<std::pair<std::size_t, std::size_t>> in_seen, out_seen;
        for (std::size_t ko = 0; ko < N; ++ko)
            for (std::size_t ki = 0; ki < N; ++ki)
                for (const Channel ch : cs.channels(ko, ki)) {
                    EXPECT_EQ(ki * r + ch.slot_in, ch.slot_out * N + ko);
                    EXPECT_TRUE(in_seen.insert({ki, ch.slot_in}).second);
                    EXPECT_TRUE(out_seen.insert({ko, ch.slot_out}).second);
                }
        EXPECT_EQ(cs.total(), c.inter_dim());
    }
}

TEST(PermutedBlock, IdentityIndicators) {
    const MonarchConfig c(16, 4, 4);
    const DenseMatrix eye = DenseMatrix::identity(16);
    for (std::size_t ko = 0; ko < 4; ++ko)
        for (std::size_t ki = 0; ki < 4; ++ki) {
            const DenseMatrix b = permuted_block(eye, c, ko, ki);
            for (std::size_t s = 0; s < 4; ++s)
                for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(b(s, i), s * 4 + ko == ki * 4 + i ? 1.0 : 0.0);
        }
}

TEST(PermutedBlock, RankBoundedByChannels) {
    for (const MonarchConfig c : {MonarchConfig(16, 4, 2), MonarchConfig(64, 4, 8), MonarchConfig(30, 5, 3)}) {
        Rng rng(c.n());
        const DenseMatrix a = to_dense(random_adapter(c, rng));
        const auto cs = channel_set(c);
        for (std::size_t ko = 0; ko < c.blocks(); ++ko)
            for (std::size_t ki = 0; ki < c.blocks(); ++ki) {
                const DenseMatrix b = permuted_block(a, c, ko, ki);
                if (cs.channels(ko, ki).empty()) {
                    EXPECT_LT(fro_norm(b), 1e-12);
                } else {
                    EXPECT_LE(numerical_rank(b, 1e-10), cs.channels(ko, ki).size());
                }
            }
    }
}

TEST(PermutedBlock, DimensionMismatch) {
    EXPECT_THROW(permuted_block(DenseMatrix(8, 8), MonarchConfig(16, 4, 2), 0, 0), StructuralError);
}

TEST(Project, RealizableInputIsFixedPoint) {
    for (const MonarchConfig c : {MonarchConfig(16, 4, 2), MonarchConfig(16, 4, 4), MonarchConfig(64, 4, 8),
                                  MonarchConfig(30, 5, 3)}) {
        Rng rng(c.n() + c.block_rank());
        const DenseMatrix a = to_dense(random_adapter(c, rng));
        const auto rep = project(a, c);
        EXPECT_LT(rep.error_sq, 1e-18 * fro_norm_sq(a));
        EXPECT_LT(max_abs_diff(to_dense(rep.adapter), a), 1e-10);
    }
}

TEST(Project, SquareConfigResidualEqualsSigmaTail) {
    const MonarchConfig c(16, 4, 4);
    Rng rng(11);
    const DenseMatrix a = random_gaussian(16, 16, rng);
    const auto rep = project(a, c);
    double tail = 0.0;
    for (std::size_t ko = 0; ko < 4; ++ko)
        for (std::size_t ki = 0; ki < 4; ++ki) {
            const auto s = svd(permuted_block(a, c, ko, ki)).singular_values;
            double block_tail = 0.0;
            for (std::size_t i = 1; i < s.size(); ++i) block_tail += s[i] * s[i];
            EXPECT_NEAR(rep.residual(ko, ki), block_tail, 1e-12);
            tail += block_tail;
        }
    const double dense = fro_norm_sq(subtract(a, to_dense(rep.adapter)));
    EXPECT_NEAR(rep.error_sq, tail, 1e-9 * tail);
    EXPECT_NEAR(rep.error_sq, dense, 1e-9 * dense);
}

TEST(Project, BeatsRandomCandidates) {
    const MonarchConfig c(16, 4, 4);
    Rng rng(12);
    const DenseMatrix a = random_gaussian(16, 16, rng);
    const double err = project(a, c).error_sq;
    for (int t = 0; t < 1000; ++t) EXPECT_LE(err, fro_norm_sq(subtract(a, to_dense(random_adapter(c, rng)))));
}

TEST(Project, GeneralConfigResidualIdentity) {
    const MonarchConfig c(30, 5, 3);
    Rng rng(13);
    const DenseMatrix a = random_gaussian(30, 30, rng);
    const auto rep = project(a, c);
    double sum = 0.0;
    for (double v : rep.per_block_residuals) {
        EXPECT_GE(v, 0.0);
        sum += v;
    }
    EXPECT_DOUBLE_EQ(sum, rep.error_sq);
    const double dense = fro_norm_sq(subtract(a, to_dense(rep.adapter)));
    EXPECT_NEAR(rep.error_sq, dense, 1e-9 * dense);
}

TEST(Project, Deterministic) {
    const MonarchConfig c(16, 4, 4);
    Rng rng(14);
    const DenseMatrix a = random_gaussian(16, 16, rng);
    EXPECT_EQ(project(a, c).adapter, project(a, c).adapter);
}

TEST(Project, ConfigMismatch) {
    EXPECT_THROW(project(DenseMatrix(15, 15), MonarchConfig(16, 4, 2)), StructuralError);
}

TEST(WorstCase, Ratios) {
    for (std::size_t m : {1u, 2u, 3u, 4u}) {
        const MonarchConfig c(m * m, m, m);
        const DenseMatrix a = worst_case_instance(c, 42);
        const double ratio = project(a, c).error_sq / fro_norm_sq(a);
        EXPECT_NEAR(ratio, (m - 1.0) / m, 1e-9) << "m=" << m;
    }
}

TEST(WorstCase, RequiresOneChannelPerPair) {
    EXPECT_THROW(worst_case_instance(MonarchConfig(16, 4, 2)), StructuralError);
    EXPECT_THROW(worst_case_instance(MonarchConfig(64, 4, 8)), StructuralError);
    EXPECT_NO_THROW(worst_case_instance(MonarchConfig(20, 4, 4)));
}

TEST(Init, ProjectionOfRealizableDelta) {
    const MonarchConfig c(32, 4, 4);
    Rng rng(15);
    const DenseMatrix delta = to_dense(random_adapter(c, rng));
    const MonarchAdapter a = init_adapter(c, InitMode::projection, 1, &delta);
    const DenseMatrix x = random_gaussian(5, 32, rng);
    EXPECT_LT(max_abs_diff(apply(a, x), transpose(matmul(delta, transpose(x)))), 1e-9);
    EXPECT_THROW(init_adapter(c, InitMode::projection, 1), StructuralError);
    EXPECT_EQ(init_adapter(c, InitMode::zero_out, 3), init_adapter(c, 3));
}

TEST(Expressivity, MonarchBeatsEqualBudgetLowRank) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto gap = verify::expressivity_gap(seed);
        EXPECT_LT(gap.monarch_rel, 1e-18);
        EXPECT_GT(gap.lowrank_rel, 1e-3);
    }
}
