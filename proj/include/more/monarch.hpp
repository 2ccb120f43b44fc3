#pragma once

// Rectangular Monarch matrices M = P1 * blkdiag(factor_out) * P2 * blkdiag(factor_in).
//
// Dataflow for one input row x of length n (m = n/N, d = N*r_blk):
//   1. y[k*r + j]   = sum_i factor_in[k][j][i] * x[k*m + i]      (N blocks, r x m)
//   2. z[p2(p)]     = y[p]                                      (stride shuffle on d)
//   3. w[k*m + s]   = sum_j factor_out[k][s][j] * z[k*r + j]     (N blocks, m x r)
//   4. out[p1(p)]   = w[p]                                      (stride shuffle on n)
//
// p2(j'*N + k') = k'*r + j'   and   p1(k'*m + s) = s*N + k'.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "more/errors.hpp"
#include "more/numerics.hpp"
#include "more/rng.hpp"

namespace more {

class MonarchConfig {
public:
    MonarchConfig(std::size_t n, std::size_t blocks, std::size_t block_rank)
        : n_(n), blocks_(blocks), block_rank_(block_rank) {
        if (blocks_ == 0 || block_rank_ == 0 || n_ == 0) {
            throw StructuralError("MonarchConfig: n, blocks and block_rank must be positive");
        }
        if (n_ % blocks_ != 0) {
            throw StructuralError("MonarchConfig: blocks=" + std::to_string(blocks_) + " does not divide n=" +
                                  std::to_string(n_));
        }
        if (block_rank_ > n_ / blocks_) {
            throw StructuralError("MonarchConfig: block_rank=" + std::to_string(block_rank_) +
                                  " exceeds block size " + std::to_string(n_ / blocks_));
        }
    }

    std::size_t n() const noexcept { return n_; }
    std::size_t blocks() const noexcept { return blocks_; }
    std::size_t block_rank() const noexcept { return block_rank_; }
    std::size_t block_size() const noexcept { return n_ / blocks_; }
    std::size_t inter_dim() const noexcept { return blocks_ * block_rank_; }
    std::size_t factor_size() const noexcept { return n_ * block_rank_; }

    friend bool operator==(const MonarchConfig&, const MonarchConfig&) = default;

private:
    std::size_t n_;
    std::size_t blocks_;
    std::size_t block_rank_;
};

// Intermediate coordinate p = k*r + j (source block k, slot j) goes to
// destination block p mod N, slot p div N.
inline std::size_t shuffle_p2(const MonarchConfig& c, std::size_t p) {
    if (p >= c.inter_dim()) {
        throw StructuralError("shuffle_p2: index " + std::to_string(p) + " outside [0," +
                              std::to_string(c.inter_dim()) + ")");
    }
    return (p % c.blocks()) * c.block_rank() + p / c.blocks();
}

// Output-block coordinate p = k*m + s lands at s*N + k.
inline std::size_t shuffle_p1(const MonarchConfig& c, std::size_t p) {
    if (p >= c.n()) {
        throw StructuralError("shuffle_p1: index " + std::to_string(p) + " outside [0," + std::to_string(c.n()) + ")");
    }
    return (p % c.block_size()) * c.blocks() + p / c.block_size();
}

inline std::vector<std::size_t> p2_map(const MonarchConfig& c) {
    std::vector<std::size_t> map(c.inter_dim());
    for (std::size_t p = 0; p < map.size(); ++p) map[p] = shuffle_p2(c, p);
    return map;
}

inline std::vector<std::size_t> p1_map(const MonarchConfig& c) {
    std::vector<std::size_t> map(c.n());
    for (std::size_t p = 0; p < map.size(); ++p) map[p] = shuffle_p1(c, p);
    return map;
}

// Scatter: out[map[p]] = in[p].
inline void route_forward(std::span<const double> in, std::span<const std::size_t> map, std::span<double> out) {
    for (std::size_t p = 0; p < map.size(); ++p) out[map[p]] = in[p];
}

// Adjoint of route_forward (a gather): out[p] = in[map[p]].
inline void route_backward(std::span<const double> in, std::span<const std::size_t> map, std::span<double> out) {
    for (std::size_t p = 0; p < map.size(); ++p) out[p] = in[map[p]];
}

class MonarchAdapter {
public:
    explicit MonarchAdapter(const MonarchConfig& config)
        : config_(config), factor_in_(config.factor_size(), 0.0), factor_out_(config.factor_size(), 0.0) {}

    MonarchAdapter(const MonarchConfig& config, std::vector<double> factor_in, std::vector<double> factor_out)
        : config_(config), factor_in_(std::move(factor_in)), factor_out_(std::move(factor_out)) {
        if (factor_in_.size() != config_.factor_size()) {
            throw StructuralError("MonarchAdapter: factor_in length " + std::to_string(factor_in_.size()) +
                                  ", expected " + std::to_string(config_.factor_size()));
        }
        if (factor_out_.size() != config_.factor_size()) {
            throw StructuralError("MonarchAdapter: factor_out length " + std::to_string(factor_out_.size()) +
                                  ", expected " + std::to_string(config_.factor_size()));
        }
        detail::require_finite(factor_in_, "MonarchAdapter factor_in");
        detail::require_finite(factor_out_, "MonarchAdapter factor_out");
    }

    const MonarchConfig& config() const noexcept { return config_; }

    // factor_in: (N, r_blk, m) row-major
    double& in(std::size_t k, std::size_t j, std::size_t i) {
        return factor_in_[(k * config_.block_rank() + j) * config_.block_size() + i];
    }
    double in(std::size_t k, std::size_t j, std::size_t i) const {
        return factor_in_[(k * config_.block_rank() + j) * config_.block_size() + i];
    }
    // factor_out: (N, m, r_blk) row-major
    double& out(std::size_t k, std::size_t s, std::size_t j) {
        return factor_out_[(k * config_.block_size() + s) * config_.block_rank() + j];
    }
    double out(std::size_t k, std::size_t s, std::size_t j) const {
        return factor_out_[(k * config_.block_size() + s) * config_.block_rank() + j];
    }

    std::span<double> factor_in() noexcept { return factor_in_; }
    std::span<const double> factor_in() const noexcept { return factor_in_; }
    std::span<double> factor_out() noexcept { return factor_out_; }
    std::span<const double> factor_out() const noexcept { return factor_out_; }

    std::size_t param_count() const noexcept { return factor_in_.size() + factor_out_.size(); }

    friend bool operator==(const MonarchAdapter&, const MonarchAdapter&) = default;

private:
    MonarchConfig config_;
    std::vector<double> factor_in_;
    std::vector<double> factor_out_;
};

// factor_in ~ U(-1/sqrt(m), 1/sqrt(m)), factor_out = 0: the adapter starts
// as an exact zero map.
inline MonarchAdapter init_adapter(const MonarchConfig& config, std::uint64_t seed) {
    MonarchAdapter a(config);
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.block_size()));
    for (double& v : a.factor_in()) v = rng.uniform(-bound, bound);
    return a;
}

// Gaussian factors; factor_in ~ N(0, 1/m), factor_out ~ N(0, 1/r_blk).
inline MonarchAdapter random_adapter(const MonarchConfig& config, Rng& rng) {
    MonarchAdapter a(config);
    const double sd_in = 1.0 / std::sqrt(static_cast<double>(config.block_size()));
    const double sd_out = 1.0 / std::sqrt(static_cast<double>(config.block_rank()));
    for (double& v : a.factor_in()) v = rng.normal(0.0, sd_in);
    for (double& v : a.factor_out()) v = rng.normal(0.0, sd_out);
    return a;
}

namespace detail {

// Intermediates of one row, kept for the backward pass.
struct ApplyTrace {
    std::vector<double> y;  // after factor_in
    std::vector<double> z;  // after P2
    std::vector<double> w;  // after factor_out
};

inline void apply_row(const MonarchAdapter& a, std::span<const std::size_t> p2, std::span<const std::size_t> p1,
                      std::span<const double> x, std::span<double> out, ApplyTrace& t) {
    const auto& c = a.config();
    const std::size_t N = c.blocks(), r = c.block_rank(), m = c.block_size();
    t.y.assign(c.inter_dim(), 0.0);
    t.z.assign(c.inter_dim(), 0.0);
    t.w.assign(c.n(), 0.0);
    for (std::size_t k = 0; k < N; ++k) {
        const double* xb = x.data() + k * m;
        for (std::size_t j = 0; j < r; ++j) {
            const double* row = a.factor_in().data() + (k * r + j) * m;
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += row[i] * xb[i];
            t.y[k * r + j] = acc;
        }
    }
    route_forward(t.y, p2, t.z);
    for (std::size_t k = 0; k < N; ++k) {
        const double* zb = t.z.data() + k * r;
        for (std::size_t s = 0; s < m; ++s) {
            const double* row = a.factor_out().data() + (k * m + s) * r;
            double acc = 0.0;
            for (std::size_t j = 0; j < r; ++j) acc += row[j] * zb[j];
            t.w[k * m + s] = acc;
        }
    }
    route_forward(t.w, p1, out);
}

}  // namespace detail

// Batched application; each row of `x` is one input vector.
inline DenseMatrix apply(const MonarchAdapter& a, const DenseMatrix& x) {
    const auto& c = a.config();
    if (x.cols() != c.n()) {
        throw StructuralError("apply: rows have length " + std::to_string(x.cols()) + ", expected " +
                              std::to_string(c.n()));
    }
    const auto p2 = p2_map(c);
    const auto p1 = p1_map(c);
    DenseMatrix out(x.rows(), c.n());
    detail::ApplyTrace trace;
    for (std::size_t b = 0; b < x.rows(); ++b) detail::apply_row(a, p2, p1, x.row(b), out.row(b), trace);
    return out;
}

inline std::vector<double> apply(const MonarchAdapter& a, std::span<const double> x) {
    if (x.size() != a.config().n()) throw StructuralError("apply: vector length mismatch");
    std::vector<double> out(a.config().n());
    detail::ApplyTrace trace;
    detail::apply_row(a, p2_map(a.config()), p1_map(a.config()), x, out, trace);
    return out;
}

inline DenseMatrix permutation_matrix(std::span<const std::size_t> map) {
    DenseMatrix p(map.size(), map.size());
    for (std::size_t i = 0; i < map.size(); ++i) p(map[i], i) = 1.0;
    return p;
}

// Explicit P1 * L * P2 * R with L = blkdiag(factor_out) (n x d) and
// R = blkdiag(factor_in) (d x n). Independent of apply().
inline DenseMatrix to_dense(const MonarchAdapter& a) {
    const auto& c = a.config();
    const std::size_t N = c.blocks(), r = c.block_rank(), m = c.block_size();
    DenseMatrix left(c.n(), c.inter_dim());
    DenseMatrix right(c.inter_dim(), c.n());
    for (std::size_t k = 0; k < N; ++k) {
        for (std::size_t s = 0; s < m; ++s)
            for (std::size_t j = 0; j < r; ++j) left(k * m + s, k * r + j) = a.out(k, s, j);
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t i = 0; i < m; ++i) right(k * r + j, k * m + i) = a.in(k, j, i);
    }
    const DenseMatrix p1 = permutation_matrix(p1_map(c));
    const DenseMatrix p2 = permutation_matrix(p2_map(c));
    return matmul(matmul(p1, left), matmul(p2, right));
}

inline std::size_t monarch_rank(const MonarchAdapter& a) { return numerical_rank(to_dense(a), 1e-10); }

// ---- Accounting ---------------------------------------------------------

inline std::uint64_t param_count(const MonarchConfig& c) { return 2ull * c.n() * c.block_rank(); }

inline std::uint64_t lora_param_count(std::size_t n, std::size_t rank) { return 2ull * n * rank; }

// Multiply-adds counted as 2 FLOPs; the permutations cost nothing.
inline std::uint64_t apply_flops(const MonarchConfig& c, std::size_t batch) {
    return 4ull * c.n() * c.block_rank() * batch;
}

inline std::uint64_t dense_flops(std::size_t n, std::size_t batch) { return 2ull * n * n * batch; }

inline std::uint64_t lora_flops(std::size_t n, std::size_t rank, std::size_t batch) {
    return 4ull * n * rank * batch;
}

// ---- Adapted layer ------------------------------------------------------

// Frozen square weight and bias with an additive Monarch adapter:
// out = W x + M x + b.
class AdapterLayer {
public:
    AdapterLayer(DenseMatrix base_weight, Vector bias, MonarchAdapter adapter)
        : base_(std::move(base_weight)), bias_(std::move(bias)), adapter_(std::move(adapter)) {
        const std::size_t n = adapter_.config().n();
        if (base_.rows() != n || base_.cols() != n) {
            throw StructuralError("AdapterLayer: base weight must be " + std::to_string(n) + "x" +
                                  std::to_string(n));
        }
        if (bias_.len() != n) throw StructuralError("AdapterLayer: bias length mismatch");
    }

    const DenseMatrix& base_weight() const noexcept { return base_; }
    const Vector& bias() const noexcept { return bias_; }
    const MonarchAdapter& adapter() const noexcept { return adapter_; }
    MonarchAdapter& adapter() noexcept { return adapter_; }

private:
    DenseMatrix base_;
    Vector bias_;
    MonarchAdapter adapter_;
};

inline DenseMatrix add_bias_rows(DenseMatrix y, const Vector& bias) {
    for (std::size_t b = 0; b < y.rows(); ++b) {
        auto row = y.row(b);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] += bias[i];
    }
    return y;
}

// Training-time path: W x + apply(x) + b, rows of x are inputs.
inline DenseMatrix forward_additive(const AdapterLayer& layer, const DenseMatrix& x) {
    DenseMatrix y = matmul(x, transpose(layer.base_weight()));
    return add_bias_rows(add(y, apply(layer.adapter(), x)), layer.bias());
}

inline DenseMatrix merge(const AdapterLayer& layer) {
    return add(layer.base_weight(), to_dense(layer.adapter()));
}

// Inference path after absorbing the adapter: merged x + b.
inline DenseMatrix forward_merged(const DenseMatrix& merged, const Vector& bias, const DenseMatrix& x) {
    if (x.cols() != merged.cols()) throw StructuralError("forward_merged: dimension mismatch");
    return add_bias_rows(matmul(x, transpose(merged)), bias);
}

}  // namespace more
