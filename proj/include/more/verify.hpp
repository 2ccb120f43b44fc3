#pragma once

// Seeded invariant suites run by `more verify`. Each check reports its worst
// metric against a fixed tolerance; reports contain no timing so repeated
// runs are byte-identical.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "more/gradients.hpp"
#include "more/monarch.hpp"
#include "more/numerics.hpp"
#include "more/projection.hpp"
#include "more/rng.hpp"
#include "more/theory.hpp"

namespace more::verify {

struct CheckResult {
    std::string name;
    std::string metric;
    double tolerance = 0.0;
    std::size_t cases = 0;
    std::size_t violations = 0;
    double worst = 0.0;
    std::vector<std::uint64_t> seeds;
    std::string first_failure;
    nlohmann::json extra = nlohmann::json::object();

    CheckResult(std::string name_, std::string metric_, double tolerance_)
        : name(std::move(name_)), metric(std::move(metric_)), tolerance(tolerance_) {}

    // Records one case; `ok` decides the violation, `value` feeds `worst`.
    void record(bool ok, double value, std::uint64_t seed, const std::string& detail = {}) {
        ++cases;
        worst = cases == 1 ? value : std::max(worst, value);
        seeds.push_back(seed);
        if (!ok) {
            ++violations;
            if (first_failure.empty()) first_failure = "seed " + std::to_string(seed) + ": " + detail;
        }
    }
};

struct SuiteReport {
    std::string suite;
    std::uint64_t seed = 42;
    std::vector<CheckResult> checks;

    std::size_t violations() const {
        std::size_t v = 0;
        for (const auto& c : checks) v += c.violations;
        return v;
    }
    std::size_t cases() const {
        std::size_t v = 0;
        for (const auto& c : checks) v += c.cases;
        return v;
    }
};

inline nlohmann::json to_json(const CheckResult& c) {
    nlohmann::json j = {{"name", c.name},        {"metric", c.metric}, {"tolerance", c.tolerance},
                        {"cases", c.cases},      {"violations", c.violations},
                        {"worst", c.worst},      {"seeds", c.seeds}};
    if (!c.first_failure.empty()) j["first_failure"] = c.first_failure;
    if (!c.extra.empty()) j["details"] = c.extra;
    return j;
}

inline nlohmann::json to_json(const SuiteReport& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks) checks.push_back(to_json(c));
    return {{"suite", r.suite}, {"seed", r.seed}, {"cases", r.cases()}, {"violations", r.violations()},
            {"checks", checks}};
}

// ---- core -------------------------------------------------------------------

struct GridConfig {
    MonarchConfig config;
    std::uint64_t seed;
};

// 50 configs: n in {16..256} x N in {1,2,4,8,16} x two draws of r_blk in [1, m].
inline std::vector<GridConfig> dense_equivalence_grid(std::uint64_t base_seed) {
    std::vector<GridConfig> out;
    Rng rng(base_seed);
    for (std::size_t n : {16u, 32u, 64u, 128u, 256u}) {
        for (std::size_t nb : {1u, 2u, 4u, 8u, 16u}) {
            for (int draw = 0; draw < 2; ++draw) {
                const std::size_t m = n / nb;
                const std::size_t r = 1 + rng.index(m);
                out.push_back({MonarchConfig(n, nb, r), base_seed + out.size()});
            }
        }
    }
    return out;
}

inline CheckResult check_dense_equivalence(std::uint64_t base_seed) {
    CheckResult c{"dense_equivalence", "max |apply(x) - to_dense*x|", 1e-10};
    for (const auto& g : dense_equivalence_grid(base_seed)) {
        Rng rng(g.seed);
        const MonarchAdapter a = random_adapter(g.config, rng);
        const DenseMatrix x = random_gaussian(4, g.config.n(), rng);
        const double diff = max_abs_diff(apply(a, x), matmul(x, transpose(to_dense(a))));
        c.record(diff < c.tolerance, diff, g.seed,
                 "n=" + std::to_string(g.config.n()) + " N=" + std::to_string(g.config.blocks()) +
                     " r=" + std::to_string(g.config.block_rank()) + " diff=" + format_double(diff));
    }
    return c;
}

inline bool is_bijection(std::span<const std::size_t> map) {
    std::vector<bool> hit(map.size(), false);
    for (std::size_t v : map) {
        if (v >= map.size() || hit[v]) return false;
        hit[v] = true;
    }
    return true;
}

inline CheckResult check_bijectivity(std::uint64_t base_seed) {
    CheckResult c{"shuffle_bijectivity", "non-bijective maps", 0.0};
    for (const auto& g : dense_equivalence_grid(base_seed)) {
        const bool ok = is_bijection(p1_map(g.config)) && is_bijection(p2_map(g.config));
        c.record(ok, ok ? 0.0 : 1.0, g.seed, "shuffle is not a bijection");
    }
    return c;
}

inline CheckResult check_lora_subsumption(std::uint64_t base_seed) {
    CheckResult c{"lora_subsumption", "max |to_dense - factor_out*factor_in|", 1e-12};
    std::uint64_t seed = base_seed;
    for (std::size_t n : {16u, 32u, 64u}) {
        for (std::size_t r : {1u, 4u, 8u}) {
            const MonarchConfig cfg(n, 1, r);
            Rng rng(seed);
            const MonarchAdapter a = random_adapter(cfg, rng);
            const DenseMatrix lo(n, r, {a.factor_out().begin(), a.factor_out().end()});
            const DenseMatrix hi(r, n, {a.factor_in().begin(), a.factor_in().end()});
            const DenseMatrix dense = to_dense(a);
            const double diff = max_abs_diff(dense, matmul(lo, hi));
            const std::size_t rank = numerical_rank(dense, 1e-10);
            c.record(diff < c.tolerance && rank <= r, diff, seed,
                     "n=" + std::to_string(n) + " r=" + std::to_string(r) + " rank=" + std::to_string(rank));
            ++seed;
        }
    }
    return c;
}

struct RankProbe {
    double sigma_ratio_last_kept = 0.0;    // sigma_{N r} / sigma_1
    double sigma_ratio_first_null = 0.0;   // sigma_{N r + 1} / sigma_1
    std::size_t rank = 0;
};

inline RankProbe probe_rank(const MonarchAdapter& a) {
    const auto s = svd(to_dense(a)).singular_values;
    const std::size_t d = a.config().inter_dim();
    RankProbe p;
    p.sigma_ratio_last_kept = s[d - 1] / s[0];
    p.sigma_ratio_first_null = d < s.size() ? s[d] / s[0] : 0.0;
    p.rank = numerical_rank(to_dense(a), 1e-10);
    return p;
}

// (n=64, N=4, r_blk=8): rank exactly 32.
inline CheckResult check_rank_capacity(std::uint64_t base_seed, std::size_t seeds = 20) {
    CheckResult c{"rank_capacity", "sigma_33/sigma_1", 1e-10};
    const MonarchConfig cfg(64, 4, 8);
    double min_kept = 1.0;
    for (std::size_t i = 0; i < seeds; ++i) {
        Rng rng(base_seed + i);
        const RankProbe p = probe_rank(random_adapter(cfg, rng));
        min_kept = std::min(min_kept, p.sigma_ratio_last_kept);
        const bool ok = p.sigma_ratio_last_kept > 1e-8 && p.sigma_ratio_first_null < 1e-10 && p.rank == 32;
        c.record(ok, p.sigma_ratio_first_null, base_seed + i,
                 "rank=" + std::to_string(p.rank) + " s32/s1=" + format_double(p.sigma_ratio_last_kept));
    }
    c.extra["min_sigma32_over_sigma1"] = min_kept;
    return c;
}

inline CheckResult check_rank_cap(std::uint64_t base_seed) {
    CheckResult c{"rank_cap", "rank - min(N r_blk, n)", 0.0};
    for (const auto& g : dense_equivalence_grid(base_seed)) {
        if (g.config.n() > 64) continue;
        Rng rng(g.seed);
        const std::size_t rank = monarch_rank(random_adapter(g.config, rng));
        const std::size_t cap = std::min(g.config.inter_dim(), g.config.n());
        c.record(rank <= cap, static_cast<double>(rank) - static_cast<double>(cap), g.seed,
                 "rank " + std::to_string(rank) + " above cap " + std::to_string(cap));
    }
    return c;
}

inline CheckResult check_param_identity(std::uint64_t base_seed) {
    CheckResult c{"param_identity", "mismatching configs", 0.0};
    for (const auto& g : dense_equivalence_grid(base_seed)) {
        const auto& cfg = g.config;
        const bool ok = param_count(cfg) * cfg.blocks() == lora_param_count(cfg.n(), cfg.inter_dim()) &&
                        param_count(cfg) == 2ull * cfg.n() * cfg.block_rank();
        c.record(ok, ok ? 0.0 : 1.0, g.seed, "param identity fails");
    }
    return c;
}

inline CheckResult check_linearity(std::uint64_t base_seed) {
    CheckResult c{"linearity", "max |apply(ax+by) - a apply(x) - b apply(y)|", 1e-10};
    for (const auto& g : dense_equivalence_grid(base_seed)) {
        if (g.config.n() > 64) continue;
        Rng rng(g.seed);
        const MonarchAdapter a = random_adapter(g.config, rng);
        const DenseMatrix x = random_gaussian(2, g.config.n(), rng);
        const DenseMatrix y = random_gaussian(2, g.config.n(), rng);
        const double alpha = rng.normal(), beta = rng.normal();
        const DenseMatrix lhs = apply(a, add(scale(x, alpha), y, beta));
        const DenseMatrix rhs = add(scale(apply(a, x), alpha), apply(a, y), beta);
        const double diff = max_abs_diff(lhs, rhs);
        c.record(diff < c.tolerance, diff, g.seed, "diff=" + format_double(diff));
    }
    return c;
}

inline AdapterLayer random_layer(const MonarchConfig& cfg, Rng& rng) {
    DenseMatrix w = random_gaussian(cfg.n(), cfg.n(), rng, 1.0 / std::sqrt(static_cast<double>(cfg.n())));
    std::vector<double> b(cfg.n());
    for (double& v : b) v = rng.normal();
    return AdapterLayer(std::move(w), Vector(std::move(b)), random_adapter(cfg, rng));
}

inline CheckResult check_merge_consistency(std::uint64_t base_seed) {
    CheckResult c{"merge_consistency", "max |merged path - additive path|", 1e-10};
    const MonarchConfig configs[] = {{16, 4, 2}, {64, 4, 8}, {64, 8, 3}, {32, 1, 4}};
    std::uint64_t seed = base_seed;
    for (const auto& cfg : configs) {
        Rng rng(seed);
        const AdapterLayer layer = random_layer(cfg, rng);
        const DenseMatrix x = random_gaussian(100, cfg.n(), rng);
        const double diff = max_abs_diff(forward_merged(merge(layer), layer.bias(), x), forward_additive(layer, x));
        c.record(diff < c.tolerance, diff, seed, "diff=" + format_double(diff));
        ++seed;
    }
    return c;
}

inline SuiteReport run_core(std::uint64_t seed) {
    return {"core",
            seed,
            {check_dense_equivalence(seed), check_bijectivity(seed), check_lora_subsumption(seed),
             check_rank_capacity(seed), check_rank_cap(seed), check_param_identity(seed), check_linearity(seed),
             check_merge_consistency(seed)}};
}

// ---- theory -----------------------------------------------------------------

template <typename F>
CheckResult bound_check(std::string name, std::uint64_t base_seed, std::size_t seeds, F&& run) {
    CheckResult c{std::move(name), "max lhs/rhs", 1.0};
    for (std::size_t i = 0; i < seeds; ++i) {
        const BoundReport b = run(base_seed + i);
        const double ratio = b.rhs > 0.0 ? b.lhs / b.rhs : (b.lhs > 0.0 ? INFINITY : 0.0);
        c.record(!b.violated, ratio, b.instance_seed,
                 "lhs=" + format_double(b.lhs) + " rhs=" + format_double(b.rhs));
    }
    return c;
}

inline CheckResult check_estimation(std::string name, std::uint64_t base_seed, std::size_t seeds,
                                    const MonarchConfig& cfg, Regime regime, std::size_t layers = 3) {
    CheckResult c{std::move(name), "max lhs/rhs", 1.0};
    double worst_identity = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < seeds; ++i) {
        const auto rep = check_estimation_error(base_seed + i, layers, cfg, regime);
        worst_identity = std::max(worst_identity, rep.identity_rel_err);
        start = rep.truncation_start;
        const double ratio = rep.bound.rhs > 0.0 ? rep.bound.lhs / rep.bound.rhs : 0.0;
        c.record(!rep.bound.violated && rep.identity_holds, ratio, rep.bound.instance_seed,
                 "lhs=" + format_double(rep.bound.lhs) + " rhs=" + format_double(rep.bound.rhs) +
                     " identity_rel_err=" + format_double(rep.identity_rel_err));
    }
    c.extra = {{"truncation_start", start}, {"max_identity_rel_err", worst_identity},
               {"n", cfg.n()}, {"blocks", cfg.blocks()}, {"block_rank", cfg.block_rank()}, {"layers", layers}};
    return c;
}

inline SuiteReport run_theory(std::uint64_t seed) {
    SuiteReport r{"theory", seed, {}};
    r.checks.push_back(bound_check("lemma_submatrix", seed, 100, [](std::uint64_t s) { return check_lemma_submatrix(s, 4); }));
    r.checks.push_back(
        bound_check("corollary_spectral", seed, 100, [](std::uint64_t s) { return check_corollary_spectral(s, 4); }));
    r.checks.push_back(check_estimation("estimation_error_square", seed, 50, MonarchConfig(16, 4, 4), Regime::square_q1));
    r.checks.push_back(check_estimation("estimation_error_rect", seed, 50, MonarchConfig(16, 2, 4), Regime::rect));
    return r;
}

// ---- grad -------------------------------------------------------------------

inline GradCheckProblem random_problem(const MonarchConfig& cfg, LossKind loss, std::size_t batch, Rng& rng,
                                       std::size_t classes = 10) {
    GradCheckProblem p;
    p.loss = loss;
    p.base_weight = random_gaussian(cfg.n(), cfg.n(), rng, 1.0 / std::sqrt(static_cast<double>(cfg.n())));
    std::vector<double> b(cfg.n());
    for (double& v : b) v = rng.normal(0.0, 0.1);
    p.bias = Vector(std::move(b));
    p.inputs = random_gaussian(batch, cfg.n(), rng);
    if (loss == LossKind::mse) {
        p.targets = random_gaussian(batch, cfg.n(), rng);
    } else {
        p.head = random_gaussian(classes, cfg.n(), rng, 1.0 / std::sqrt(static_cast<double>(cfg.n())));
        for (std::size_t i = 0; i < batch; ++i) p.labels.push_back(rng.index(classes));
    }
    return p;
}

struct GradCase {
    MonarchConfig config;
    LossKind loss;
};

inline std::vector<GradCase> grad_cases() {
    return {{{16, 4, 2}, LossKind::mse},          {{16, 4, 2}, LossKind::softmax_xent}, {{16, 1, 4}, LossKind::mse},
            {{32, 4, 8}, LossKind::softmax_xent}, {{32, 8, 2}, LossKind::mse},          {{24, 3, 5}, LossKind::mse},
            {{64, 4, 8}, LossKind::softmax_xent}, {{64, 16, 4}, LossKind::mse},         {{48, 2, 7}, LossKind::softmax_xent},
            {{16, 16, 1}, LossKind::mse}};
}

inline CheckResult check_gradients(std::uint64_t base_seed) {
    CheckResult c{"grad_check", "max relative error (central differences, h=1e-6)", 1e-5};
    std::uint64_t seed = base_seed;
    for (const auto& gc : grad_cases()) {
        Rng rng(seed);
        const MonarchAdapter a = random_adapter(gc.config, rng);
        const GradCheckProblem p = random_problem(gc.config, gc.loss, 8, rng);
        const GradCheckReport rep = grad_check(a, p, 1e-6, seed);
        c.record(rep.max_rel_err < c.tolerance, rep.max_rel_err, seed,
                 std::string(rep.worst_coordinate.in_factor_out ? "factor_out[" : "factor_in[") +
                     std::to_string(rep.worst_coordinate.index) + "] rel=" + format_double(rep.max_rel_err));
        ++seed;
    }
    return c;
}

inline CheckResult check_route_roundtrip(std::uint64_t base_seed) {
    CheckResult c{"route_roundtrip", "entries not bit-equal", 0.0};
    for (const auto& g : dense_equivalence_grid(base_seed)) {
        Rng rng(g.seed);
        bool ok = true;
        for (const auto& map : {p1_map(g.config), p2_map(g.config)}) {
            std::vector<double> v(map.size()), routed(map.size()), back(map.size());
            for (double& e : v) e = rng.normal();
            route_forward(v, map, routed);
            route_backward(routed, map, back);
            ok = ok && back == v;
        }
        c.record(ok, ok ? 0.0 : 1.0, g.seed, "route_backward(route_forward(v)) != v");
    }
    return c;
}

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline CheckResult check_upstream_linearity(std::uint64_t base_seed) {
    CheckResult c{"backward_linearity", "max relative deviation", 1e-10};
    std::uint64_t seed = base_seed;
    for (const auto& gc : grad_cases()) {
        Rng rng(seed);
        const MonarchAdapter a = random_adapter(gc.config, rng);
        const DenseMatrix x = random_gaussian(4, gc.config.n(), rng);
        const DenseMatrix g1 = random_gaussian(4, gc.config.n(), rng);
        const DenseMatrix g2 = random_gaussian(4, gc.config.n(), rng);
        const double alpha = rng.normal(), beta = rng.normal();
        const auto combined = backward(a, x, add(scale(g1, alpha), g2, beta));
        const auto b1 = backward(a, x, g1);
        const auto b2 = backward(a, x, g2);
        std::vector<double> expect_in(b1.d_factor_in.size()), expect_out(b1.d_factor_out.size());
        for (std::size_t i = 0; i < expect_in.size(); ++i) expect_in[i] = alpha * b1.d_factor_in[i] + beta * b2.d_factor_in[i];
        for (std::size_t i = 0; i < expect_out.size(); ++i)
            expect_out[i] = alpha * b1.d_factor_out[i] + beta * b2.d_factor_out[i];
        const double scale_ref = std::max({1.0, max_abs(expect_in), max_abs(expect_out)});
        const double dev = std::max(max_abs_diff(combined.d_factor_in, expect_in),
                                    max_abs_diff(combined.d_factor_out, expect_out)) / scale_ref;
        c.record(dev < c.tolerance, dev, seed, "dev=" + format_double(dev));
        ++seed;
    }
    return c;
}

// d/dtheta through W + to_dense(M) must equal d/dtheta through W x + apply(x).
inline CheckResult check_merged_gradient(std::uint64_t base_seed) {
    CheckResult c{"merged_vs_additive_gradient", "max relative deviation", 1e-9};
    std::uint64_t seed = base_seed;
    for (const auto& gc : grad_cases()) {
        Rng rng(seed);
        const MonarchAdapter a = random_adapter(gc.config, rng);
        const DenseMatrix x = random_gaussian(6, gc.config.n(), rng);
        const DenseMatrix up = random_gaussian(6, gc.config.n(), rng);
        const auto additive = backward(a, x, up);
        const auto merged = backward_dense(a, matmul(transpose(up), x));
        const double scale_ref = std::max({1.0, max_abs(additive.d_factor_in), max_abs(additive.d_factor_out)});
        const double dev = std::max(max_abs_diff(additive.d_factor_in, merged.d_factor_in),
                                    max_abs_diff(additive.d_factor_out, merged.d_factor_out)) / scale_ref;
        c.record(dev < c.tolerance, dev, seed, "dev=" + format_double(dev));
        ++seed;
    }
    return c;
}

inline SuiteReport run_grad(std::uint64_t seed) {
    return {"grad",
            seed,
            {check_gradients(seed), check_route_roundtrip(seed), check_upstream_linearity(seed),
             check_merged_gradient(seed)}};
}

// ---- projection -------------------------------------------------------------

struct OptimalityOutcome {
    double error_sq = 0.0;
    double best_candidate = 0.0;
    double identity_rel_err = 0.0;
};

inline OptimalityOutcome projection_optimality(const DenseMatrix& a, const MonarchConfig& cfg, std::size_t candidates,
                                               Rng& rng) {
    const ProjectionReport rep = project(a, cfg);
    const double dense_residual = fro_norm_sq(subtract(a, to_dense(rep.adapter)));
    OptimalityOutcome o;
    o.error_sq = rep.error_sq;
    o.identity_rel_err = std::abs(rep.error_sq - dense_residual) / std::max(dense_residual, 1e-300);
    o.best_candidate = INFINITY;
    for (std::size_t i = 0; i < candidates; ++i) {
        o.best_candidate = std::min(o.best_candidate, fro_norm_sq(subtract(a, to_dense(random_adapter(cfg, rng)))));
    }
    return o;
}

inline CheckResult check_projection_optimality(std::uint64_t base_seed, std::size_t inputs = 20,
                                               std::size_t candidates = 1000) {
    CheckResult c{"projection_optimality", "error_sq / best random candidate", 1.0};
    double worst_identity = 0.0;
    const MonarchConfig cfg(16, 4, 4);
    for (std::size_t i = 0; i < inputs; ++i) {
        Rng rng(base_seed + i);
        const DenseMatrix a = random_gaussian(16, 16, rng);
        const auto o = projection_optimality(a, cfg, candidates, rng);
        worst_identity = std::max(worst_identity, o.identity_rel_err);
        c.record(o.error_sq <= o.best_candidate && o.identity_rel_err <= 1e-9, o.error_sq / o.best_candidate,
                 base_seed + i,
                 "error_sq=" + format_double(o.error_sq) + " best=" + format_double(o.best_candidate) +
                     " identity_rel_err=" + format_double(o.identity_rel_err));
    }
    c.extra["max_identity_rel_err"] = worst_identity;
    return c;
}

inline double worst_case_ratio(std::size_t m, std::uint64_t seed) {
    // blocks == block_rank == m gives one channel per pair with square blocks.
    const MonarchConfig cfg(m * m, m, m);
    const DenseMatrix a = worst_case_instance(cfg, seed);
    return project(a, cfg).error_sq / fro_norm_sq(a);
}

inline CheckResult check_worst_case(std::uint64_t base_seed) {
    CheckResult c{"worst_case_ratio", "|ratio - (m-1)/m|", 1e-9};
    for (std::size_t m : {1u, 2u, 3u, 4u}) {
        const double ratio = worst_case_ratio(m, base_seed + m);
        const double expected = static_cast<double>(m - 1) / static_cast<double>(m);
        const double dev = std::abs(ratio - expected);
        c.extra["m=" + std::to_string(m)] = ratio;
        c.record(dev <= c.tolerance, dev, base_seed + m, "m=" + std::to_string(m) + " ratio=" + format_double(ratio));
    }
    return c;
}

inline CheckResult check_projection_fixed_point(std::uint64_t base_seed) {
    CheckResult c{"projection_fixed_point", "error_sq / ||a||_F^2", 1e-18};
    const MonarchConfig configs[] = {{16, 4, 2}, {16, 4, 4}, {32, 2, 8}, {64, 4, 8}, {24, 4, 3}, {64, 8, 2}};
    std::uint64_t seed = base_seed;
    for (const auto& cfg : configs) {
        Rng rng(seed);
        const DenseMatrix a = to_dense(random_adapter(cfg, rng));
        const double rel = project(a, cfg).error_sq / fro_norm_sq(a);
        c.record(rel < c.tolerance, rel, seed, "rel=" + format_double(rel));
        ++seed;
    }
    return c;
}

struct GapOutcome {
    double monarch_rel = 0.0;   // Monarch projection error / ||M*||^2
    double lowrank_rel = 0.0;   // best rank-8 error / ||M*||^2
};

// Planted (n=64, N=4, r_blk=8) target against equal-budget rank-8 LoRA.
inline GapOutcome expressivity_gap(std::uint64_t seed) {
    const MonarchConfig cfg(64, 4, 8);
    Rng rng(seed);
    const DenseMatrix target = to_dense(random_adapter(cfg, rng));
    const double mass = fro_norm_sq(target);
    return {project(target, cfg).error_sq / mass, truncated_svd(target, 8).residual / mass};
}

inline CheckResult check_expressivity_gap(std::uint64_t base_seed, std::size_t seeds = 10) {
    CheckResult c{"expressivity_gap", "Monarch projection error / ||M*||^2", 1e-18};
    double min_lowrank = INFINITY;
    for (std::size_t i = 0; i < seeds; ++i) {
        const GapOutcome g = expressivity_gap(base_seed + i);
        min_lowrank = std::min(min_lowrank, g.lowrank_rel);
        c.record(g.monarch_rel < 1e-18 && g.lowrank_rel > 1e-3, g.monarch_rel, base_seed + i,
                 "monarch_rel=" + format_double(g.monarch_rel) + " lowrank_rel=" + format_double(g.lowrank_rel));
    }
    c.extra["min_rank8_error_rel"] = min_lowrank;
    return c;
}

inline SuiteReport run_projection(std::uint64_t seed) {
    return {"projection",
            seed,
            {check_projection_optimality(seed), check_worst_case(seed), check_projection_fixed_point(seed),
             check_expressivity_gap(seed)}};
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"core", "theory", "grad", "projection", "all"};
    return names;
}

inline std::vector<SuiteReport> run_suite(const std::string& name, std::uint64_t seed) {
    if (name == "core") return {run_core(seed)};
    if (name == "theory") return {run_theory(seed)};
    if (name == "grad") return {run_grad(seed)};
    if (name == "projection") return {run_projection(seed)};
    if (name == "all") return {run_core(seed), run_theory(seed), run_grad(seed), run_projection(seed)};
    throw StructuralError("unknown suite '" + name + "'");
}

}  // namespace more::verify
