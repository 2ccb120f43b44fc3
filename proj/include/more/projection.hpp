#pragma once

// Frobenius-optimal projection of a dense n x n matrix onto the Monarch
// class of a given config.
//
// Every intermediate channel p = k_in*r + j connects exactly one input block
// k_in (row j of factor_in[k_in]) to one output block k_out = p mod N
// (column j' = p div N of factor_out[k_out]). Seen through the output
// shuffle, the dense m x m block (k_out, k_in) is therefore the sum of one
// rank-1 term per channel of that pair, and distinct pairs share no
// parameters. Projection reduces to independent truncated SVDs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "more/errors.hpp"
#include "more/monarch.hpp"
#include "more/numerics.hpp"
#include "more/rng.hpp"

namespace more {

struct Channel {
    std::size_t slot_in;   // j: row of factor_in[k_in]
    std::size_t slot_out;  // j': column of factor_out[k_out]
    friend bool operator==(const Channel&, const Channel&) = default;
};

class ChannelSet {
public:
    explicit ChannelSet(std::size_t blocks) : blocks_(blocks), pairs_(blocks * blocks) {}

    std::size_t blocks() const noexcept { return blocks_; }
    const std::vector<Channel>& channels(std::size_t k_out, std::size_t k_in) const {
        return pairs_.at(k_out * blocks_ + k_in);
    }
    std::vector<Channel>& channels(std::size_t k_out, std::size_t k_in) { return pairs_.at(k_out * blocks_ + k_in); }

    std::size_t total() const noexcept {
        std::size_t t = 0;
        for (const auto& p : pairs_) t += p.size();
        return t;
    }

private:
    std::size_t blocks_;
    std::vector<std::vector<Channel>> pairs_;
};

// Channels within a pair come out sorted by (j, j') ascending.
inline ChannelSet channel_set(const MonarchConfig& c) {
    ChannelSet set(c.blocks());
    const std::size_t N = c.blocks(), r = c.block_rank();
    for (std::size_t k_in = 0; k_in < N; ++k_in) {
        for (std::size_t j = 0; j < r; ++j) {
            const std::size_t p = k_in * r + j;
            set.channels(p % N, k_in).push_back({j, p / N});
        }
    }
    return set;
}

// B[s, i] = a[s*N + k_out, k_in*m + i]
inline DenseMatrix permuted_block(const DenseMatrix& a, const MonarchConfig& c, std::size_t k_out, std::size_t k_in) {
    if (a.rows() != c.n() || a.cols() != c.n()) {
        throw StructuralError("permuted_block: matrix is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                              ", config expects " + std::to_string(c.n()) + "x" + std::to_string(c.n()));
    }
    if (k_out >= c.blocks() || k_in >= c.blocks()) throw StructuralError("permuted_block: block index out of range");
    const std::size_t N = c.blocks(), m = c.block_size();
    DenseMatrix b(m, m);
    for (std::size_t s = 0; s < m; ++s)
        for (std::size_t i = 0; i < m; ++i) b(s, i) = a(s * N + k_out, k_in * m + i);
    return b;
}

struct ProjectionReport {
    MonarchAdapter adapter;
    double error_sq = 0.0;
    std::vector<double> per_block_residuals;  // index k_out*N + k_in

    double residual(std::size_t k_out, std::size_t k_in) const {
        return per_block_residuals.at(k_out * adapter.config().blocks() + k_in);
    }
};

inline ProjectionReport project(const DenseMatrix& a, const MonarchConfig& c) {
    if (a.rows() != c.n() || a.cols() != c.n()) {
        throw StructuralError("project: matrix is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                              ", config expects n=" + std::to_string(c.n()));
    }
    const std::size_t N = c.blocks(), m = c.block_size();
    const ChannelSet channels = channel_set(c);
    ProjectionReport rep{MonarchAdapter(c), 0.0, std::vector<double>(N * N, 0.0)};
    for (std::size_t k_out = 0; k_out < N; ++k_out) {
        for (std::size_t k_in = 0; k_in < N; ++k_in) {
            const auto& chans = channels.channels(k_out, k_in);
            const DenseMatrix block = permuted_block(a, c, k_out, k_in);
            const std::size_t q = std::min(chans.size(), m);
            const TruncatedSvd t = truncated_svd(block, q);
            for (std::size_t tr = 0; tr < q; ++tr) {
                const double root = std::sqrt(t.factors.singular_values[tr]);
                const Channel ch = chans[tr];
                for (std::size_t s = 0; s < m; ++s) rep.adapter.out(k_out, s, ch.slot_out) = root * t.factors.u(s, tr);
                for (std::size_t i = 0; i < m; ++i) rep.adapter.in(k_in, ch.slot_in, i) = root * t.factors.vt(tr, i);
            }
            rep.per_block_residuals[k_out * N + k_in] = t.residual;
            rep.error_sq += t.residual;
        }
    }
    return rep;
}

// Dense matrix whose every permuted block is an independent random m x m
// orthogonal matrix. Requires exactly one channel per block pair.
inline DenseMatrix worst_case_instance(const MonarchConfig& c, std::uint64_t seed = 42) {
    const ChannelSet channels = channel_set(c);
    const std::size_t N = c.blocks(), m = c.block_size();
    for (std::size_t k_out = 0; k_out < N; ++k_out)
        for (std::size_t k_in = 0; k_in < N; ++k_in)
            if (channels.channels(k_out, k_in).size() != 1) {
                throw StructuralError("worst_case_instance: block pair (" + std::to_string(k_out) + "," +
                                      std::to_string(k_in) + ") has " +
                                      std::to_string(channels.channels(k_out, k_in).size()) +
                                      " channels; need exactly 1 (blocks == block_rank)");
            }
    Rng rng(seed);
    DenseMatrix a(c.n(), c.n());
    for (std::size_t k_out = 0; k_out < N; ++k_out) {
        for (std::size_t k_in = 0; k_in < N; ++k_in) {
            const DenseMatrix q = svd(random_gaussian(m, m, rng)).u;
            for (std::size_t s = 0; s < m; ++s)
                for (std::size_t i = 0; i < m; ++i) a(s * N + k_out, k_in * m + i) = q(s, i);
        }
    }
    return a;
}

enum class InitMode { zero_out, projection };

// Projection initialisation: the Frobenius-nearest adapter to `delta`.
inline MonarchAdapter init_adapter(const MonarchConfig& c, const DenseMatrix& delta) {
    return project(delta, c).adapter;
}

inline MonarchAdapter init_adapter(const MonarchConfig& c, InitMode mode, std::uint64_t seed,
                                   const DenseMatrix* delta = nullptr) {
    if (mode == InitMode::zero_out) return init_adapter(c, seed);
    if (delta == nullptr) throw StructuralError("init_adapter: projection mode needs a dense delta");
    return init_adapter(c, *delta);
}

}  // namespace more
