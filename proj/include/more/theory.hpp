#pragma once

// Randomised numerical checks of the block-norm inequalities and of the
// last-layer estimation-error bound for Monarch fine-tuning.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "more/errors.hpp"
#include "more/monarch.hpp"
#include "more/numerics.hpp"
#include "more/projection.hpp"
#include "more/rng.hpp"

namespace more {

struct BoundReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
    std::uint64_t instance_seed = 0;
    bool violated = false;
};

inline BoundReport make_bound_report(double lhs, double rhs, std::uint64_t seed) {
    return {lhs, rhs, rhs - lhs, seed, lhs > rhs + 1e-9 * std::max(1.0, std::abs(rhs))};
}

namespace detail {

inline std::size_t grid_side(const DenseMatrix& w, std::size_t m) {
    if (m == 0 || w.rows() != m * m || w.cols() != m * m) {
        throw StructuralError("block check: matrix must be m^2 x m^2 with m=" + std::to_string(m));
    }
    return m;
}

}  // namespace detail

// lhs = ||W x||_2, rhs = sum_jk ||W_jk x_k||_2 over the contiguous m x m grid.
inline BoundReport lemma_bound(const DenseMatrix& w, std::span<const double> x, std::size_t m,
                               std::uint64_t seed = 0) {
    detail::grid_side(w, m);
    if (x.size() != m * m) throw StructuralError("lemma_bound: vector length mismatch");
    const auto wx = matvec(w, x);
    double lhs = 0.0;
    for (double v : wx) lhs += v * v;
    lhs = std::sqrt(lhs);
    double rhs = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < m; ++k) {
            const DenseMatrix block = slice(w, j * m, k * m, m, m);
            const auto part = matvec(block, x.subspan(k * m, m));
            double sq = 0.0;
            for (double v : part) sq += v * v;
            rhs += std::sqrt(sq);
        }
    }
    return make_bound_report(lhs, rhs, seed);
}

inline BoundReport check_lemma_submatrix(std::uint64_t seed, std::size_t m) {
    Rng rng(seed);
    const std::size_t n = m * m;
    const DenseMatrix w = random_gaussian(n, n, rng);
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    return lemma_bound(w, x, m, seed);
}

// lhs = sigma_1(W), rhs = sum_jk sigma_1(W_jk).
inline BoundReport corollary_bound(const DenseMatrix& w, std::size_t m, std::uint64_t seed = 0) {
    detail::grid_side(w, m);
    double rhs = 0.0;
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < m; ++k) rhs += spectral_norm(slice(w, j * m, k * m, m, m));
    return make_bound_report(spectral_norm(w), rhs, seed);
}

inline BoundReport check_corollary_spectral(std::uint64_t seed, std::size_t m) {
    Rng rng(seed);
    return corollary_bound(random_gaussian(m * m, m * m, rng), m, seed);
}

// ---- Last-layer estimation error ------------------------------------------

enum class Regime {
    square_q1,  // blocks == block_rank: one channel per block pair
    rect        // blocks < block_rank, blocks | block_rank: block_rank/blocks channels per pair
};

// 1-based index of the first singular value the projection discards.
inline std::size_t truncation_start(const MonarchConfig& c, Regime regime) {
    if (regime == Regime::square_q1) {
        if (c.blocks() != c.block_rank()) throw StructuralError("square_q1 regime needs blocks == block_rank");
        return 2;
    }
    if (!(c.blocks() < c.block_rank() && c.block_rank() % c.blocks() == 0)) {
        throw StructuralError("rect regime needs blocks < block_rank with blocks dividing block_rank");
    }
    return c.block_rank() / c.blocks() + 1;
}

struct EstimationErrorReport {
    BoundReport bound;               // ||Wbar - What||^2 <= ||prefix||^2 ||Etilde - Delta||^2
    double projection_residual = 0;  // ||Etilde - Delta||_F^2, dense subtraction
    double sigma_tail_sum = 0;       // sum_jk sum_{i >= start} sigma_i^2(block jk of Etilde)
    std::size_t truncation_start = 0;
    double identity_rel_err = 0;
    bool identity_holds = true;      // identity_rel_err <= 1e-9
    std::size_t regenerations = 0;   // degenerate draws replaced
};

// Sum of squared singular values from index `start` (1-based) over every
// permuted block. Computed directly from the spectrum, independent of project().
inline double sigma_tail_sum(const DenseMatrix& e, const MonarchConfig& c, std::size_t start) {
    double total = 0.0;
    for (std::size_t k_out = 0; k_out < c.blocks(); ++k_out) {
        for (std::size_t k_in = 0; k_in < c.blocks(); ++k_in) {
            const auto s = svd(permuted_block(e, c, k_out, k_in)).singular_values;
            for (std::size_t i = start - 1; i < s.size(); ++i) total += s[i] * s[i];
        }
    }
    return total;
}

// Evaluates the bound for given layers W_1..W_L and target Wbar. The prefix
// product W_1...W_{L-1} must be invertible.
inline EstimationErrorReport estimation_error_bound(const std::vector<DenseMatrix>& layers, const DenseMatrix& target,
                                                    const MonarchConfig& c, Regime regime, std::uint64_t seed = 0) {
    if (layers.empty()) throw StructuralError("estimation_error_bound: need at least one layer");
    const std::size_t n = c.n();
    for (const auto& w : layers)
        if (w.rows() != n || w.cols() != n) throw StructuralError("estimation_error_bound: layer shape mismatch");
    if (target.rows() != n || target.cols() != n) throw StructuralError("estimation_error_bound: target shape mismatch");

    // The product is applied so that W_1 acts last: W = W_1 W_2 ... W_L.
    DenseMatrix prefix = DenseMatrix::identity(n);
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) prefix = matmul(prefix, layers[l]);
    const DenseMatrix frozen = matmul(prefix, layers.back());

    const SvdResult ps = svd(prefix);
    if (ps.singular_values.back() <= 1e-12 * ps.singular_values.front()) {
        throw NumericalError("estimation_error_bound: prefix product is singular");
    }
    // prefix^{-1} = V diag(1/s) U^T
    DenseMatrix v_scaled = transpose(ps.vt);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) v_scaled(i, j) /= ps.singular_values[j];
    const DenseMatrix prefix_inv = matmul(v_scaled, transpose(ps.u));

    const DenseMatrix error = subtract(target, frozen);
    const DenseMatrix reg_error = matmul(prefix_inv, error);
    const ProjectionReport proj = project(reg_error, c);
    const DenseMatrix delta = to_dense(proj.adapter);
    const DenseMatrix adapted = matmul(prefix, add(layers.back(), delta));

    EstimationErrorReport rep;
    rep.projection_residual = fro_norm_sq(subtract(reg_error, delta));
    rep.bound = make_bound_report(fro_norm_sq(subtract(target, adapted)), fro_norm_sq(prefix) * rep.projection_residual,
                                  seed);
    rep.truncation_start = truncation_start(c, regime);
    rep.sigma_tail_sum = sigma_tail_sum(reg_error, c, rep.truncation_start);
    const double scale = std::max(std::abs(rep.sigma_tail_sum), std::abs(rep.projection_residual));
    rep.identity_rel_err = scale == 0.0 ? 0.0 : std::abs(rep.projection_residual - rep.sigma_tail_sum) / scale;
    rep.identity_holds = rep.identity_rel_err <= 1e-9;
    return rep;
}

// Gaussian matrix with singular values floored at max(1e-2, sigma_1/1e3),
// which keeps it full rank with condition number at most 1e3.
inline DenseMatrix random_full_rank(std::size_t n, Rng& rng) {
    SvdResult s = svd(random_gaussian(n, n, rng, 1.0 / std::sqrt(static_cast<double>(n))));
    const double floor = std::max(1e-2, s.singular_values.front() / 1e3);
    for (double& v : s.singular_values) v = std::max(v, floor);
    return reconstruct(s);
}

inline EstimationErrorReport check_estimation_error(std::uint64_t seed, std::size_t layers, const MonarchConfig& c,
                                                    Regime regime) {
    if (layers == 0) throw StructuralError("check_estimation_error: layers must be positive");
    truncation_start(c, regime);
    constexpr std::size_t kMaxRedraws = 16;
    for (std::size_t attempt = 0; attempt < kMaxRedraws; ++attempt) {
        const std::uint64_t effective = seed + attempt * 0x9E3779B97F4A7C15ull;
        Rng rng(effective);
        std::vector<DenseMatrix> ws;
        for (std::size_t l = 0; l < layers; ++l) ws.push_back(random_full_rank(c.n(), rng));
        const DenseMatrix target = random_full_rank(c.n(), rng);
        try {
            auto rep = estimation_error_bound(ws, target, c, regime, effective);
            rep.regenerations = attempt;
            return rep;
        } catch (const NumericalError&) {
            continue;
        }
    }
    throw NumericalError("check_estimation_error: no invertible draw after redraws", kMaxRedraws);
}

}  // namespace more
