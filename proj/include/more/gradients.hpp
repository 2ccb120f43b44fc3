#pragma once

// Reverse-mode gradients for the Monarch pipeline, the two training losses,
// and a central-difference checker.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "more/errors.hpp"
#include "more/monarch.hpp"
#include "more/numerics.hpp"
#include "more/rng.hpp"

namespace more {

struct AdapterGrads {
    std::vector<double> d_factor_in;   // (N, r_blk, m)
    std::vector<double> d_factor_out;  // (N, m, r_blk)
    DenseMatrix d_input;               // batch x n
};

// Gradients of sum_b <upstream_b, apply(x_b)>. The shuffles backpropagate
// as the gather that inverts their scatter.
inline AdapterGrads backward(const MonarchAdapter& a, const DenseMatrix& x, const DenseMatrix& upstream) {
    const auto& c = a.config();
    if (x.cols() != c.n() || upstream.cols() != c.n() || upstream.rows() != x.rows()) {
        throw StructuralError("backward: upstream must be " + std::to_string(x.rows()) + "x" + std::to_string(c.n()) +
                              " and inputs must have row length " + std::to_string(c.n()));
    }
    const std::size_t N = c.blocks(), r = c.block_rank(), m = c.block_size(), d = c.inter_dim();
    const auto p2 = p2_map(c);
    const auto p1 = p1_map(c);

    AdapterGrads g{std::vector<double>(c.factor_size(), 0.0), std::vector<double>(c.factor_size(), 0.0),
                   DenseMatrix(x.rows(), c.n())};
    std::vector<double> out(c.n()), gw(c.n()), gz(d), gy(d);
    detail::ApplyTrace t;
    for (std::size_t b = 0; b < x.rows(); ++b) {
        detail::apply_row(a, p2, p1, x.row(b), out, t);
        route_backward(upstream.row(b), p1, gw);
        std::fill(gz.begin(), gz.end(), 0.0);
        for (std::size_t k = 0; k < N; ++k) {
            for (std::size_t s = 0; s < m; ++s) {
                const double gws = gw[k * m + s];
                if (gws == 0.0) continue;
                const double* frow = a.factor_out().data() + (k * m + s) * r;
                double* drow = g.d_factor_out.data() + (k * m + s) * r;
                for (std::size_t j = 0; j < r; ++j) {
                    drow[j] += gws * t.z[k * r + j];
                    gz[k * r + j] += frow[j] * gws;
                }
            }
        }
        route_backward(gz, p2, gy);
        auto xb = x.row(b);
        auto dx = g.d_input.row(b);
        for (std::size_t k = 0; k < N; ++k) {
            for (std::size_t j = 0; j < r; ++j) {
                const double gyj = gy[k * r + j];
                if (gyj == 0.0) continue;
                const double* frow = a.factor_in().data() + (k * r + j) * m;
                double* drow = g.d_factor_in.data() + (k * r + j) * m;
                for (std::size_t i = 0; i < m; ++i) {
                    drow[i] += gyj * xb[k * m + i];
                    dx[k * m + i] += frow[i] * gyj;
                }
            }
        }
    }
    return g;
}

// Factor gradients of <d_dense, to_dense(a)>: the chain rule through the
// merged weight. Each channel p = k*r + j with destination (k', j') adds
// the outer product fout[k'][:, j'] (rows routed by P1) x fin[k][j][:].
inline AdapterGrads backward_dense(const MonarchAdapter& a, const DenseMatrix& d_dense) {
    const auto& c = a.config();
    if (d_dense.rows() != c.n() || d_dense.cols() != c.n()) throw StructuralError("backward_dense: shape mismatch");
    const std::size_t N = c.blocks(), r = c.block_rank(), m = c.block_size();
    AdapterGrads g{std::vector<double>(c.factor_size(), 0.0), std::vector<double>(c.factor_size(), 0.0), {}};
    for (std::size_t k = 0; k < N; ++k) {
        for (std::size_t j = 0; j < r; ++j) {
            const std::size_t q = shuffle_p2(c, k * r + j);
            const std::size_t kd = q / r, jd = q % r;
            for (std::size_t s = 0; s < m; ++s) {
                const std::size_t row = shuffle_p1(c, kd * m + s);
                double acc_out = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double gij = d_dense(row, k * m + i);
                    acc_out += gij * a.in(k, j, i);
                    g.d_factor_in[(k * r + j) * m + i] += gij * a.out(kd, s, jd);
                }
                g.d_factor_out[(kd * m + s) * r + jd] += acc_out;
            }
        }
    }
    return g;
}

// ---- Losses ---------------------------------------------------------------

// Neumaier compensated sum; keeps loss differences at h=1e-6 clear of
// accumulation roundoff.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct LossValue {
    double value = 0.0;
    DenseMatrix grad;  // d loss / d prediction
};

// mean over batch and coordinates of (pred - target)^2
inline LossValue mse_loss(const DenseMatrix& pred, const DenseMatrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw StructuralError("mse_loss: shape mismatch");
    const double denom = static_cast<double>(pred.size());
    LossValue out{0.0, DenseMatrix(pred.rows(), pred.cols())};
    CompensatedSum sum;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred.data()[i] - target.data()[i];
        sum.add(e * e);
        out.grad.data()[i] = 2.0 * e / denom;
    }
    out.value = sum.value() / denom;
    return out;
}

// mean over batch of -log softmax(logits)[label]
inline LossValue softmax_xent_loss(const DenseMatrix& logits, const std::vector<std::size_t>& labels) {
    if (labels.size() != logits.rows()) throw StructuralError("softmax_xent_loss: label count mismatch");
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    LossValue out{0.0, DenseMatrix(logits.rows(), logits.cols())};
    CompensatedSum sum;
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        auto row = logits.row(b);
        if (labels[b] >= row.size()) throw StructuralError("softmax_xent_loss: label out of range");
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double log_z = mx + std::log(z);
        sum.add(mx - row[labels[b]]);
        sum.add(std::log(z));
        auto g = out.grad.row(b);
        for (std::size_t i = 0; i < row.size(); ++i) g[i] = std::exp(row[i] - log_z) * inv_b;
        g[labels[b]] -= inv_b;
    }
    out.value = sum.value() * inv_b;
    return out;
}

// ---- Gradient check -------------------------------------------------------

enum class LossKind { mse, softmax_xent };

// A frozen layer (base weight + bias) carrying the adapter, a batch and the
// loss it feeds. For softmax_xent the layer output goes through a frozen
// readout `head` (C x n) to produce C logits.
struct GradCheckProblem {
    LossKind loss = LossKind::mse;
    DenseMatrix base_weight;
    Vector bias;
    DenseMatrix inputs;
    DenseMatrix targets;
    std::vector<std::size_t> labels;
    DenseMatrix head;
};

struct LossAndGrads {
    double value = 0.0;
    AdapterGrads grads;
};

inline LossAndGrads evaluate(const MonarchAdapter& a, const GradCheckProblem& p) {
    const DenseMatrix layer_out =
        add_bias_rows(add(matmul(p.inputs, transpose(p.base_weight)), apply(a, p.inputs)), p.bias);
    LossValue lv;
    DenseMatrix upstream;
    if (p.loss == LossKind::mse) {
        lv = mse_loss(layer_out, p.targets);
        upstream = std::move(lv.grad);
    } else {
        lv = softmax_xent_loss(matmul(layer_out, transpose(p.head)), p.labels);
        upstream = matmul(lv.grad, p.head);
    }
    if (!std::isfinite(lv.value)) throw NumericalError("loss is not finite");
    return {lv.value, backward(a, p.inputs, upstream)};
}

inline double loss_only(const MonarchAdapter& a, const GradCheckProblem& p) {
    const DenseMatrix layer_out =
        add_bias_rows(add(matmul(p.inputs, transpose(p.base_weight)), apply(a, p.inputs)), p.bias);
    const double v = p.loss == LossKind::mse ? mse_loss(layer_out, p.targets).value
                                             : softmax_xent_loss(matmul(layer_out, transpose(p.head)), p.labels).value;
    if (!std::isfinite(v)) throw NumericalError("loss is not finite");
    return v;
}

struct GradCoordinate {
    bool in_factor_out = false;
    std::size_t index = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    GradCoordinate worst_coordinate;
    std::size_t checked = 0;
};

inline constexpr std::size_t kExhaustiveGradLimit = 10000;
inline constexpr std::size_t kSampledGradCoords = 512;

inline GradCheckReport grad_check(const MonarchAdapter& adapter, const GradCheckProblem& problem, double h = 1e-6,
                                  std::uint64_t seed = 42) {
    if (!(h >= 1e-8 && h <= 1e-4)) throw StructuralError("grad_check: h must lie in [1e-8, 1e-4]");
    const auto analytic = evaluate(adapter, problem).grads;
    const std::size_t half = adapter.config().factor_size();
    const std::size_t total = 2 * half;

    std::vector<std::size_t> coords(total);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (total > kExhaustiveGradLimit) {
        Rng rng(seed);
        for (std::size_t i = 0; i < kSampledGradCoords; ++i) std::swap(coords[i], coords[i + rng.index(total - i)]);
        coords.resize(kSampledGradCoords);
        std::sort(coords.begin(), coords.end());
    }

    GradCheckReport report;
    MonarchAdapter probe = adapter;
    for (std::size_t flat : coords) {
        const bool is_out = flat >= half;
        const std::size_t idx = is_out ? flat - half : flat;
        double& theta = is_out ? probe.factor_out()[idx] : probe.factor_in()[idx];
        const double saved = theta;
        const double hi = saved + h, lo = saved - h;
        theta = hi;
        const double plus = loss_only(probe, problem);
        theta = lo;
        const double minus = loss_only(probe, problem);
        theta = saved;
        const double numeric = (plus - minus) / (hi - lo);
        const double exact = is_out ? analytic.d_factor_out[idx] : analytic.d_factor_in[idx];
        const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
        const double rel = std::abs(exact - numeric) / denom;
        if (report.checked == 0 || rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_coordinate = {is_out, idx};
        }
        ++report.checked;
    }
    return report;
}

}  // namespace more
