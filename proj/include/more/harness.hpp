#pragma once

// Desk-scale fine-tuning experiments: a frozen linear layer with an additive
// MoRe or LoRA adapter, trained by Adam on planted-target tasks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "more/errors.hpp"
#include "more/gradients.hpp"
#include "more/monarch.hpp"
#include "more/numerics.hpp"
#include "more/projection.hpp"
#include "more/rng.hpp"

namespace more {

// ---- LoRA baseline --------------------------------------------------------

// Contributes up * (down * x); down is r x n, up is n x r.
class LoraAdapter {
public:
    LoraAdapter(std::size_t n, std::size_t rank) : n_(n), rank_(rank), down_(n * rank, 0.0), up_(n * rank, 0.0) {
        if (n == 0 || rank == 0) throw StructuralError("LoraAdapter: n and rank must be positive");
        if (rank > n) throw StructuralError("LoraAdapter: rank " + std::to_string(rank) + " exceeds n=" + std::to_string(n));
    }

    std::size_t n() const noexcept { return n_; }
    std::size_t rank() const noexcept { return rank_; }
    std::span<double> down() noexcept { return down_; }
    std::span<const double> down() const noexcept { return down_; }
    std::span<double> up() noexcept { return up_; }
    std::span<const double> up() const noexcept { return up_; }
    std::size_t param_count() const noexcept { return down_.size() + up_.size(); }

    DenseMatrix down_matrix() const { return DenseMatrix(rank_, n_, down_); }
    DenseMatrix up_matrix() const { return DenseMatrix(n_, rank_, up_); }
    DenseMatrix to_dense() const { return matmul(up_matrix(), down_matrix()); }

    DenseMatrix apply(const DenseMatrix& x) const {
        if (x.cols() != n_) throw StructuralError("LoraAdapter::apply: row length mismatch");
        return matmul(matmul(x, transpose(down_matrix())), transpose(up_matrix()));
    }

    // Gradients of sum_b <upstream_b, apply(x_b)>: {d_down, d_up}.
    std::pair<std::vector<double>, std::vector<double>> backward(const DenseMatrix& x, const DenseMatrix& upstream) const {
        const DenseMatrix h = matmul(x, transpose(down_matrix()));           // B x r
        const DenseMatrix d_up = matmul(transpose(upstream), h);             // n x r
        const DenseMatrix d_h = matmul(upstream, up_matrix());               // B x r
        const DenseMatrix d_down = matmul(transpose(d_h), x);                // r x n
        return {std::vector<double>(d_down.data().begin(), d_down.data().end()),
                std::vector<double>(d_up.data().begin(), d_up.data().end())};
    }

private:
    std::size_t n_;
    std::size_t rank_;
    std::vector<double> down_;
    std::vector<double> up_;
};

// down ~ U(-1/sqrt(n), 1/sqrt(n)), up = 0. Draw order matches the N=1
// Monarch zero_out init, so the two start from the same point.
inline LoraAdapter init_lora(std::size_t n, std::size_t rank, std::uint64_t seed) {
    LoraAdapter a(n, rank);
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(n));
    for (double& v : a.down()) v = rng.uniform(-bound, bound);
    return a;
}

// ---- Configuration --------------------------------------------------------

enum class TaskKind { planted_monarch, planted_lowrank, mlp_shift };
enum class AdapterKind { more, lora };

inline std::string to_string(TaskKind t) {
    switch (t) {
        case TaskKind::planted_monarch: return "planted_monarch";
        case TaskKind::planted_lowrank: return "planted_lowrank";
        case TaskKind::mlp_shift: return "mlp_shift";
    }
    return "?";
}

inline std::string to_string(AdapterKind k) { return k == AdapterKind::more ? "more" : "lora"; }

struct AdapterSpec {
    AdapterKind kind = AdapterKind::more;
    std::size_t blocks = 4;
    std::size_t block_rank = 4;
    std::size_t rank = 8;  // LoRA only
    InitMode init = InitMode::zero_out;
};

// Structure of the planted delta. planted_monarch and mlp_shift use
// (blocks, block_rank); planted_lowrank uses rank.
struct TargetSpec {
    std::size_t blocks = 4;
    std::size_t block_rank = 4;
    std::size_t rank = 8;
    double scale = 1.0;
};

struct OptimizerConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool cosine = false;
};

struct TrainConfig {
    TaskKind task = TaskKind::planted_monarch;
    std::size_t n = 64;
    TargetSpec target;
    AdapterSpec adapter;
    OptimizerConfig optimizer;
    std::size_t steps = 3000;
    std::size_t batch = 64;
    std::size_t samples = 4096;
    std::size_t classes = 10;  // mlp_shift only
    std::uint64_t seed = 42;
    bool record_wall_time = true;

    void validate() const {
        if (n == 0 || steps == 0 || batch == 0 || samples == 0 || classes == 0) {
            throw StructuralError("TrainConfig: n, steps, batch, samples and classes must be positive");
        }
        if (!(optimizer.lr > 0.0) || !(optimizer.eps > 0.0) || optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0 ||
            optimizer.beta2 < 0.0 || optimizer.beta2 >= 1.0) {
            throw StructuralError("TrainConfig: invalid optimizer settings");
        }
        if (adapter.kind == AdapterKind::more) {
            MonarchConfig(n, adapter.blocks, adapter.block_rank);
        } else {
            LoraAdapter(n, adapter.rank);
        }
        if (task == TaskKind::planted_lowrank) {
            if (target.rank == 0 || target.rank > n) throw StructuralError("TrainConfig: target rank must lie in [1, n]");
        } else {
            MonarchConfig(n, target.blocks, target.block_rank);
        }
    }
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// ---- Tasks ------------------------------------------------------------------

struct PlantedTask {
    TaskKind kind = TaskKind::planted_monarch;
    DenseMatrix base_weight;    // W, frozen
    Vector bias;                // b, frozen
    DenseMatrix target_weight;  // Wbar = W + planted delta
    DenseMatrix inputs;         // samples x n, Gaussian
    DenseMatrix targets;        // regression: Wbar x + b
    std::vector<std::size_t> labels;  // mlp_shift
    DenseMatrix head;                 // mlp_shift: classes x n, frozen readout
};

inline DenseMatrix planted_delta(const TrainConfig& cfg, Rng& rng) {
    if (cfg.task == TaskKind::planted_lowrank) {
        const double sd = 1.0 / std::sqrt(std::sqrt(static_cast<double>(cfg.n) * cfg.target.rank));
        const DenseMatrix u = random_gaussian(cfg.n, cfg.target.rank, rng, sd);
        const DenseMatrix v = random_gaussian(cfg.target.rank, cfg.n, rng, sd);
        return scale(matmul(u, v), cfg.target.scale);
    }
    const MonarchConfig mc(cfg.n, cfg.target.blocks, cfg.target.block_rank);
    return scale(to_dense(random_adapter(mc, rng)), cfg.target.scale);
}

inline PlantedTask make_planted_task(const TrainConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0));
    const std::size_t n = cfg.n;
    PlantedTask t;
    t.kind = cfg.task;
    t.base_weight = random_gaussian(n, n, rng, 1.0 / std::sqrt(static_cast<double>(n)));
    std::vector<double> b(n);
    for (double& v : b) v = rng.normal(0.0, 0.1);
    t.bias = Vector(std::move(b));
    t.target_weight = add(t.base_weight, planted_delta(cfg, rng));
    t.inputs = random_gaussian(cfg.samples, n, rng);
    const DenseMatrix clean = add_bias_rows(matmul(t.inputs, transpose(t.target_weight)), t.bias);
    if (cfg.task == TaskKind::mlp_shift) {
        t.head = random_gaussian(cfg.classes, n, rng, 1.0 / std::sqrt(static_cast<double>(n)));
        DenseMatrix hidden = clean;
        for (double& v : hidden.data()) v = std::max(v, 0.0);
        const DenseMatrix logits = matmul(hidden, transpose(t.head));
        t.labels.resize(cfg.samples);
        for (std::size_t s = 0; s < cfg.samples; ++s) {
            auto row = logits.row(s);
            t.labels[s] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        }
    } else {
        t.targets = clean;
    }
    return t;
}

// ---- Trainable adapter ------------------------------------------------------

class TrainableAdapter {
public:
    explicit TrainableAdapter(MonarchAdapter a) : impl_(std::move(a)) {}
    explicit TrainableAdapter(LoraAdapter a) : impl_(std::move(a)) {}

    bool is_more() const noexcept { return std::holds_alternative<MonarchAdapter>(impl_); }
    const MonarchAdapter& as_monarch() const { return std::get<MonarchAdapter>(impl_); }
    const LoraAdapter& as_lora() const { return std::get<LoraAdapter>(impl_); }

    DenseMatrix forward(const DenseMatrix& x) const {
        return is_more() ? more::apply(as_monarch(), x) : as_lora().apply(x);
    }

    std::vector<std::vector<double>> backward(const DenseMatrix& x, const DenseMatrix& upstream) const {
        if (is_more()) {
            auto g = more::backward(as_monarch(), x, upstream);
            return {std::move(g.d_factor_in), std::move(g.d_factor_out)};
        }
        auto [d_down, d_up] = as_lora().backward(x, upstream);
        return {std::move(d_down), std::move(d_up)};
    }

    std::vector<std::span<double>> params() {
        if (auto* m = std::get_if<MonarchAdapter>(&impl_)) return {m->factor_in(), m->factor_out()};
        auto& l = std::get<LoraAdapter>(impl_);
        return {l.down(), l.up()};
    }

    DenseMatrix dense() const { return is_more() ? to_dense(as_monarch()) : as_lora().to_dense(); }

    std::uint64_t param_count() const {
        return is_more() ? more::param_count(as_monarch().config()) : lora_param_count(as_lora().n(), as_lora().rank());
    }
    std::uint64_t flops(std::size_t batch) const {
        return is_more() ? apply_flops(as_monarch().config(), batch) : lora_flops(as_lora().n(), as_lora().rank(), batch);
    }

private:
    std::variant<MonarchAdapter, LoraAdapter> impl_;
};

// Adam over a list of parameter blocks.
class Adam {
public:
    explicit Adam(const OptimizerConfig& cfg, const std::vector<std::span<double>>& params) : cfg_(cfg) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    void step(const std::vector<std::span<double>>& params, const std::vector<std::vector<double>>& grads, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t b = 0; b < params.size(); ++b) {
            auto p = params[b];
            const auto& g = grads[b];
            auto& m = m_[b];
            auto& v = v_[b];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
            }
        }
    }

private:
    OptimizerConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

// ---- Training ---------------------------------------------------------------

struct RunRecord {
    std::string task;
    std::string adapter;
    std::size_t n = 0;
    std::size_t blocks = 0;
    std::size_t block_rank = 0;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;  // adapter FLOPs for one forward batch
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    double final_loss = 0.0;  // full-dataset loss after training
    double recovery_error = 0.0;
    double wall_ms = 0.0;
    std::vector<double> loss_curve;  // minibatch loss at steps 0, 50, 100, ...
    double smoothed_final_loss = 0.0;  // mean minibatch loss over the last 100 steps
};

struct TrainResult {
    RunRecord record;
    TrainableAdapter adapter;
    DenseMatrix effective_base;  // frozen weight the adapter was trained against
};

inline constexpr std::size_t kLogEvery = 50;
inline constexpr std::size_t kSmoothWindow = 100;

namespace detail {

inline DenseMatrix gather_rows(const DenseMatrix& src, std::span<const std::size_t> idx) {
    DenseMatrix out(idx.size(), src.cols());
    for (std::size_t b = 0; b < idx.size(); ++b) std::copy_n(src.row(idx[b]).begin(), src.cols(), out.row(b).begin());
    return out;
}

// Loss and d loss / d adapter output for a batch whose frozen-path output
// (W x + b) is already known.
inline LossValue task_loss(const PlantedTask& t, const DenseMatrix& frozen_out, const DenseMatrix& adapter_out,
                           const DenseMatrix& targets, std::span<const std::size_t> label_idx) {
    DenseMatrix pre = add(frozen_out, adapter_out);
    if (t.kind != TaskKind::mlp_shift) return mse_loss(pre, targets);
    DenseMatrix hidden = pre;
    for (double& v : hidden.data()) v = std::max(v, 0.0);
    std::vector<std::size_t> labels(label_idx.size());
    for (std::size_t b = 0; b < label_idx.size(); ++b) labels[b] = t.labels[label_idx[b]];
    LossValue lv = softmax_xent_loss(matmul(hidden, transpose(t.head)), labels);
    DenseMatrix up = matmul(lv.grad, t.head);
    for (std::size_t i = 0; i < up.size(); ++i)
        if (pre.data()[i] <= 0.0) up.data()[i] = 0.0;
    return {lv.value, std::move(up)};
}

inline TrainableAdapter initial_adapter(const TrainConfig& cfg, const DenseMatrix& base, DenseMatrix& effective_base) {
    const std::uint64_t init_seed = derive_seed(cfg.seed, 1);
    effective_base = base;
    if (cfg.adapter.kind == AdapterKind::more) {
        const MonarchConfig mc(cfg.n, cfg.adapter.blocks, cfg.adapter.block_rank);
        if (cfg.adapter.init == InitMode::zero_out) return TrainableAdapter(init_adapter(mc, init_seed));
        // Principal-component init: the adapter takes the Monarch projection
        // of W and the frozen weight keeps the remainder.
        MonarchAdapter a = init_adapter(mc, base);
        effective_base = subtract(base, to_dense(a));
        return TrainableAdapter(std::move(a));
    }
    if (cfg.adapter.init == InitMode::zero_out) return TrainableAdapter(init_lora(cfg.n, cfg.adapter.rank, init_seed));
    const TruncatedSvd t = truncated_svd(base, cfg.adapter.rank);
    LoraAdapter a(cfg.n, cfg.adapter.rank);
    for (std::size_t k = 0; k < cfg.adapter.rank; ++k) {
        const double root = std::sqrt(t.factors.singular_values[k]);
        for (std::size_t i = 0; i < cfg.n; ++i) {
            a.up()[i * cfg.adapter.rank + k] = root * t.factors.u(i, k);
            a.down()[k * cfg.n + i] = root * t.factors.vt(k, i);
        }
    }
    effective_base = subtract(base, a.to_dense());
    return TrainableAdapter(std::move(a));
}

}  // namespace detail

// Adam on the adapter parameters only; W and b never change. Throws
// NumericalError (iterations() = step index) if the loss stops being finite.
inline TrainResult train(const TrainConfig& cfg, const PlantedTask& task) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    DenseMatrix effective_base;
    TrainableAdapter adapter = detail::initial_adapter(cfg, task.base_weight, effective_base);
    const DenseMatrix frozen_all = add_bias_rows(matmul(task.inputs, transpose(effective_base)), task.bias);

    Adam opt(cfg.optimizer, adapter.params());
    Rng batch_rng(derive_seed(cfg.seed, 2));
    std::vector<std::size_t> idx(cfg.batch);
    RunRecord rec;
    std::vector<double> recent;
    recent.reserve(kSmoothWindow);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (auto& i : idx) i = batch_rng.index(cfg.samples);
        const DenseMatrix xb = detail::gather_rows(task.inputs, idx);
        const DenseMatrix fb = detail::gather_rows(frozen_all, idx);
        const DenseMatrix yb = task.kind == TaskKind::mlp_shift ? DenseMatrix() : detail::gather_rows(task.targets, idx);
        const LossValue lv = detail::task_loss(task, fb, adapter.forward(xb), yb, idx);
        if (!std::isfinite(lv.value)) throw NumericalError("train: loss diverged at step " + std::to_string(step), step);
        if (step % kLogEvery == 0) rec.loss_curve.push_back(lv.value);
        if (cfg.steps - step <= kSmoothWindow) recent.push_back(lv.value);

        double lr = cfg.optimizer.lr;
        if (cfg.optimizer.cosine) {
            lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.steps)));
        }
        opt.step(adapter.params(), adapter.backward(xb, lv.grad), lr);
    }

    std::vector<std::size_t> all(cfg.samples);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const LossValue final_lv = detail::task_loss(task, frozen_all, adapter.forward(task.inputs), task.targets, all);
    if (!std::isfinite(final_lv.value)) throw NumericalError("train: final loss is not finite", cfg.steps);

    const DenseMatrix merged = add(effective_base, adapter.dense());
    const double planted = fro_norm(subtract(task.target_weight, task.base_weight));

    rec.task = to_string(cfg.task);
    rec.adapter = to_string(cfg.adapter.kind);
    rec.n = cfg.n;
    rec.blocks = cfg.adapter.kind == AdapterKind::more ? cfg.adapter.blocks : 1;
    rec.block_rank = cfg.adapter.kind == AdapterKind::more ? cfg.adapter.block_rank : cfg.adapter.rank;
    rec.params = adapter.param_count();
    rec.flops = adapter.flops(cfg.batch);
    rec.seed = cfg.seed;
    rec.steps = cfg.steps;
    rec.final_loss = final_lv.value;
    rec.recovery_error = fro_norm(subtract(task.target_weight, merged)) / std::max(planted, 1e-12);
    double acc = 0.0;
    for (double v : recent) acc += v;
    rec.smoothed_final_loss = recent.empty() ? 0.0 : acc / static_cast<double>(recent.size());
    if (cfg.record_wall_time) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    return {std::move(rec), std::move(adapter), std::move(effective_base)};
}

inline TrainResult train(const TrainConfig& cfg) { return train(cfg, make_planted_task(cfg)); }

// ---- Sweeps -----------------------------------------------------------------

struct SweepGrid {
    std::vector<std::size_t> blocks;
    std::vector<std::size_t> block_ranks;
    std::vector<std::size_t> lora_ranks;
    bool square_blocks = false;  // block_rank = n / blocks for every N
};

struct SkippedPoint {
    std::size_t grid_index = 0;
    std::string reason;
};

// N=1 MoRe run against the LoRA run of rank block_rank on the same task.
struct SubsumptionCheck {
    std::size_t block_rank = 0;
    double more_loss = 0.0;
    double lora_loss = 0.0;
    double rel_diff = 0.0;
    bool within_tolerance = false;  // rel_diff <= 5%
};

struct SweepResult {
    std::vector<RunRecord> records;
    std::vector<SkippedPoint> skipped;
    std::vector<SubsumptionCheck> subsumption;
};

inline constexpr double kSubsumptionTolerance = 0.05;

inline std::vector<AdapterSpec> expand_grid(const TrainConfig& base, const SweepGrid& grid) {
    std::vector<AdapterSpec> points;
    for (std::size_t nb : grid.blocks) {
        if (grid.square_blocks) {
            AdapterSpec s = base.adapter;
            s.kind = AdapterKind::more;
            s.blocks = nb;
            s.block_rank = nb == 0 ? 0 : base.n / nb;
            points.push_back(s);
            continue;
        }
        for (std::size_t r : grid.block_ranks) {
            AdapterSpec s = base.adapter;
            s.kind = AdapterKind::more;
            s.blocks = nb;
            s.block_rank = r;
            points.push_back(s);
        }
    }
    for (std::size_t r : grid.lora_ranks) {
        AdapterSpec s = base.adapter;
        s.kind = AdapterKind::lora;
        s.rank = r;
        points.push_back(s);
    }
    return points;
}

// One record per valid grid point, in grid order, all on the same task and
// seed. No ranking is applied.
inline SweepResult sweep(const TrainConfig& base, const SweepGrid& grid) {
    const PlantedTask task = make_planted_task(base);
    SweepResult out;
    const auto points = expand_grid(base, grid);
    std::vector<std::optional<std::size_t>> record_of(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        TrainConfig cfg = base;
        cfg.adapter = points[i];
        try {
            cfg.validate();
        } catch (const StructuralError& e) {
            out.skipped.push_back({i, e.what()});
            continue;
        }
        try {
            out.records.push_back(train(cfg, task).record);
            record_of[i] = out.records.size() - 1;
        } catch (const NumericalError& e) {
            out.skipped.push_back({i, e.what()});
        }
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!record_of[i] || points[i].kind != AdapterKind::more || points[i].blocks != 1) continue;
        for (std::size_t j = 0; j < points.size(); ++j) {
            if (!record_of[j] || points[j].kind != AdapterKind::lora || points[j].rank != points[i].block_rank) continue;
            const double a = out.records[*record_of[i]].final_loss;
            const double b = out.records[*record_of[j]].final_loss;
            const double denom = std::max({std::abs(a), std::abs(b), 1e-300});
            const double rel = std::abs(a - b) / denom;
            out.subsumption.push_back({points[i].block_rank, a, b, rel, rel <= kSubsumptionTolerance});
        }
    }
    return out;
}

// ---- Records ----------------------------------------------------------------

inline const char* kRecordHeader =
    "task,adapter,n,blocks,block_rank,params,flops,seed,steps,final_loss,recovery_error,wall_ms";

inline void write_record(std::ostream& os, const RunRecord& r) {
    os << r.task << ',' << r.adapter << ',' << r.n << ',' << r.blocks << ',' << r.block_rank << ',' << r.params << ','
       << r.flops << ',' << r.seed << ',' << r.steps << ',' << format_double(r.final_loss) << ','
       << format_double(r.recovery_error) << ',' << format_double(r.wall_ms) << '\n';
}

inline void write_records(std::ostream& os, const std::vector<RunRecord>& records) {
    os << kRecordHeader << '\n';
    for (const auto& r : records) write_record(os, r);
}

// Loss curves as `run,step,loss`; `run` indexes `records`.
inline void write_loss_curves(std::ostream& os, const std::vector<RunRecord>& records) {
    os << "run,step,loss\n";
    for (std::size_t i = 0; i < records.size(); ++i)
        for (std::size_t k = 0; k < records[i].loss_curve.size(); ++k)
            os << i << ',' << k * kLogEvery << ',' << format_double(records[i].loss_curve[k]) << '\n';
}

// ---- Weight statistics ------------------------------------------------------

inline constexpr std::size_t kHistogramBins = 64;

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;  // 64 bins over [lo, hi]; one bin if lo == hi
};

struct FactorStats {
    std::string name;
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double excess_kurtosis = 0.0;  // 0 when stddev is 0
    Histogram histogram;
};

struct WeightStats {
    std::vector<FactorStats> factors;
};

inline FactorStats factor_stats(std::string name, std::span<const double> values) {
    FactorStats fs;
    fs.name = std::move(name);
    fs.count = values.size();
    if (values.empty()) return fs;
    const double cnt = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    fs.mean = sum / cnt;
    double m2 = 0.0, m4 = 0.0;
    for (double v : values) {
        const double d = v - fs.mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= cnt;
    m4 /= cnt;
    fs.stddev = std::sqrt(m2);
    fs.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;

    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    fs.histogram.lo = *mn;
    fs.histogram.hi = *mx;
    if (*mn == *mx) {
        fs.histogram.counts.assign(1, values.size());
        return fs;
    }
    fs.histogram.counts.assign(kHistogramBins, 0);
    const double width = (*mx - *mn) / static_cast<double>(kHistogramBins);
    for (double v : values) {
        auto bin = static_cast<std::size_t>((v - *mn) / width);
        fs.histogram.counts[std::min(bin, kHistogramBins - 1)]++;
    }
    return fs;
}

inline WeightStats weight_stats(const MonarchAdapter& a) {
    return {{factor_stats("factor_in", a.factor_in()), factor_stats("factor_out", a.factor_out())}};
}

}  // namespace more
