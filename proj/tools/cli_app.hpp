#pragma once

// `more` command-line tool. Exit codes: 0 success, 1 invariant or runtime
// violation, 2 input or configuration error.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "more/checkpoint.hpp"
#include "more/config.hpp"
#include "more/errors.hpp"
#include "more/harness.hpp"
#include "more/monarch.hpp"
#include "more/numerics.hpp"
#include "more/projection.hpp"
#include "more/verify.hpp"

namespace more::cli {

inline constexpr int kOk = 0;
inline constexpr int kViolation = 1;
inline constexpr int kInputError = 2;

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw StructuralError("cannot open '" + path + "' for writing");
    os << text;
}

// ---- verify -----------------------------------------------------------------

inline int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_path, Streams s) {
    const auto& names = verify::suite_names();
    if (std::find(names.begin(), names.end(), suite) == names.end()) {
        s.err << "unknown suite '" << suite << "'; usage: more verify --suite {core|theory|grad|projection|all}\n";
        return kInputError;
    }
    const auto reports = verify::run_suite(suite, seed);
    nlohmann::json doc = {{"format_version", 1}, {"seed", seed}, {"suites", nlohmann::json::array()}};
    std::size_t violations = 0;
    std::string first_failure;
    for (const auto& r : reports) {
        doc["suites"].push_back(verify::to_json(r));
        violations += r.violations();
        for (const auto& c : r.checks) {
            s.out << r.suite << '/' << c.name << ": " << c.cases << " cases, " << c.violations
                  << " violations, worst " << c.metric << " = " << format_double(c.worst) << '\n';
            if (c.violations && first_failure.empty()) first_failure = r.suite + "/" + c.name + ": " + c.first_failure;
        }
    }
    doc["violations"] = violations;
    const std::string text = doc.dump(2) + "\n";
    if (out_path.empty()) {
        s.out << text;
    } else {
        write_text_file(out_path, text);
    }
    if (violations) {
        s.err << "verification failed: " << first_failure << '\n';
        return kViolation;
    }
    return kOk;
}

// ---- project ----------------------------------------------------------------

inline int cmd_project(const std::string& input, std::size_t blocks, std::size_t block_rank, const std::string& out_path,
                       std::uint64_t seed, Streams s) {
    std::ifstream is(input);
    if (!is) throw StructuralError("cannot open '" + input + "'");
    const DenseMatrix a = read_matrix_text(is);
    if (a.rows() != a.cols()) throw StructuralError("project: input must be square");
    const MonarchConfig cfg(a.rows(), blocks, block_rank);
    const ProjectionReport rep = project(a, cfg);
    const double mass = fro_norm_sq(a);
    const double ratio = mass > 0.0 ? rep.error_sq / mass : 0.0;
    const ChannelSet chans = channel_set(cfg);

    s.out << "config n=" << cfg.n() << " blocks=" << cfg.blocks() << " block_rank=" << cfg.block_rank() << '\n';
    s.out << "seed " << seed << '\n';
    s.out << "error_sq " << format_double(rep.error_sq) << '\n';
    s.out << "fro_norm_sq " << format_double(mass) << '\n';
    s.out << "ratio " << fixed(ratio, 9) << '\n';
    s.out << "ratio_exact " << format_double(ratio) << '\n';
    s.out << "k_out,k_in,channels,residual\n";
    for (std::size_t ko = 0; ko < cfg.blocks(); ++ko)
        for (std::size_t ki = 0; ki < cfg.blocks(); ++ki)
            s.out << ko << ',' << ki << ',' << chans.channels(ko, ki).size() << ',' << format_double(rep.residual(ko, ki))
                  << '\n';
    if (!out_path.empty()) save_checkpoint(out_path, rep.adapter, seed);
    return kOk;
}

// ---- train / sweep ----------------------------------------------------------

inline void print_summary(std::ostream& os, const RunRecord& r) {
    os << "run task=" << r.task << " adapter=" << r.adapter << " n=" << r.n << " blocks=" << r.blocks
       << " block_rank=" << r.block_rank << " params=" << r.params << " seed=" << r.seed
       << " final_loss=" << format_double(r.final_loss) << " recovery_error=" << format_double(r.recovery_error)
       << '\n';
}

inline std::string records_text(const std::vector<RunRecord>& records) {
    std::ostringstream os;
    write_records(os, records);
    return os.str();
}

inline void write_curves(const std::string& path, const std::vector<RunRecord>& records) {
    if (path.empty()) return;
    std::ostringstream os;
    write_loss_curves(os, records);
    write_text_file(path, os.str());
}

inline int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out_path,
                     const std::string& checkpoint_path, const std::string& curve_path, Streams s) {
    TrainConfig cfg = train_config_from_json(load_json_file(config_path), overrides);
    TrainResult res = [&] {
        try {
            return train(cfg);
        } catch (const NumericalError& e) {
            s.err << "training diverged at step " << e.iterations() << ": " << e.what() << '\n';
            throw;
        }
    }();
    print_summary(s.out, res.record);
    const std::string text = records_text({res.record});
    if (out_path.empty()) {
        s.out << text;
    } else {
        write_text_file(out_path, text);
    }
    write_curves(curve_path, {res.record});
    if (!checkpoint_path.empty()) {
        if (!res.adapter.is_more()) throw StructuralError("--checkpoint needs a MoRe adapter");
        save_checkpoint(checkpoint_path, res.adapter.as_monarch(), cfg.seed);
    }
    return kOk;
}

inline int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out_path,
                     const std::string& curve_path, Streams s) {
    const SweepConfig sc = sweep_config_from_json(load_json_file(config_path), overrides);
    const SweepResult res = sweep(sc.base, sc.grid);
    s.out << "seed " << sc.base.seed << '\n';
    for (const auto& r : res.records) print_summary(s.out, r);
    for (const auto& sk : res.skipped) s.out << "skipped grid point " << sk.grid_index << ": " << sk.reason << '\n';
    bool subsumption_ok = true;
    for (const auto& c : res.subsumption) {
        s.out << "subsumption block_rank=" << c.block_rank << " more_loss=" << format_double(c.more_loss)
              << " lora_loss=" << format_double(c.lora_loss) << " rel_diff=" << format_double(c.rel_diff)
              << (c.within_tolerance ? " ok" : " FAILED") << '\n';
        subsumption_ok = subsumption_ok && c.within_tolerance;
    }
    const std::string text = records_text(res.records);
    if (out_path.empty()) {
        s.out << text;
    } else {
        write_text_file(out_path, text);
    }
    write_curves(curve_path, res.records);
    if (!subsumption_ok) {
        s.err << "N=1 runs differ from the matching LoRA runs by more than 5%\n";
        return kViolation;
    }
    return kOk;
}

// ---- bench ------------------------------------------------------------------

template <typename F>
double median_ms(std::size_t repeats, F&& f) {
    std::vector<double> t;
    for (std::size_t i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(t.begin(), t.end());
    return t.size() % 2 ? t[t.size() / 2] : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
}

inline std::string flop_ratio_fraction(std::uint64_t num, std::uint64_t den) {
    const std::uint64_t g = std::gcd(num, den);
    return std::to_string(num / g) + "/" + std::to_string(den / g);
}

inline int cmd_bench(std::size_t n, std::size_t blocks, std::size_t block_rank, std::size_t batch, std::size_t repeats,
                     std::uint64_t seed, Streams s) {
    if (repeats == 0) throw StructuralError("bench: --repeats must be positive");
    if (batch == 0) throw StructuralError("bench: --batch must be positive");
    const MonarchConfig cfg(n, blocks, block_rank);
    const std::uint64_t mf = apply_flops(cfg, batch);
    const std::uint64_t df = dense_flops(n, batch);
    s.out << "config n=" << n << " blocks=" << blocks << " block_rank=" << block_rank << " batch=" << batch
          << " repeats=" << repeats << " seed=" << seed << '\n';
    s.out << "monarch_flops " << mf << '\n';
    s.out << "dense_flops " << df << '\n';
    s.out << "flop_ratio " << flop_ratio_fraction(mf, df) << " (" << format_double(static_cast<double>(mf) / df)
          << ")\n";

    Rng rng(seed);
    const MonarchAdapter a = random_adapter(cfg, rng);
    const DenseMatrix w = random_gaussian(n, n, rng);
    const DenseMatrix x = random_gaussian(batch, n, rng);
    double sink = 0.0;
    const double t_m = median_ms(repeats, [&] { sink += apply(a, x)(0, 0); });
    const double t_d = median_ms(repeats, [&] {
        for (std::size_t b = 0; b < batch; ++b) sink += matvec(w, x.row(b))[0];
    });
    s.out << "monarch_median_ms " << fixed(t_m, 3) << '\n';
    s.out << "dense_median_ms " << fixed(t_d, 3) << '\n';
    s.out << "monarch_gflops " << fixed(t_m > 0 ? mf / (t_m * 1e6) : 0.0, 3) << '\n';
    s.out << "dense_gflops " << fixed(t_d > 0 ? df / (t_d * 1e6) : 0.0, 3) << '\n';
    if (!std::isfinite(sink)) s.err << "warning: non-finite benchmark output\n";
    return kOk;
}

// ---- stats ------------------------------------------------------------------

inline int cmd_stats(const std::string& path, Streams s) {
    const Checkpoint ck = load_checkpoint(path);
    const auto& c = ck.adapter.config();
    s.out << "config n=" << c.n() << " blocks=" << c.blocks() << " block_rank=" << c.block_rank() << '\n';
    s.out << "seed " << ck.seed << '\n';
    std::size_t total = 0;
    for (const auto& f : weight_stats(ck.adapter).factors) {
        s.out << f.name << " count=" << f.count << " mean=" << format_double(f.mean) << " std=" << format_double(f.stddev)
              << " excess_kurtosis=" << format_double(f.excess_kurtosis) << '\n';
        s.out << f.name << " histogram lo=" << format_double(f.histogram.lo) << " hi=" << format_double(f.histogram.hi)
              << " counts=";
        for (std::size_t i = 0; i < f.histogram.counts.size(); ++i) {
            s.out << (i ? "," : "") << f.histogram.counts[i];
            total += f.histogram.counts[i];
        }
        s.out << '\n';
    }
    s.out << "histogram_total " << total << " param_count " << ck.adapter.param_count() << '\n';
    return kOk;
}

// ---- entry point ------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"MoRe: Monarch adapters, projection, verification and desk-scale training"};
    app.require_subcommand(1);
    std::uint64_t seed = 42;
    std::string suite = "all", out_path, config_path, input_path, checkpoint_path, curve_path;
    std::size_t blocks = 4, block_rank = 4, n = 4096, batch = 16, repeats = 5;
    std::vector<std::string> overrides;

    auto* verify_cmd = app.add_subcommand("verify", "run invariant suites");
    verify_cmd->add_option("--suite", suite, "core|theory|grad|projection|all");
    verify_cmd->add_option("--seed", seed);
    verify_cmd->add_option("--out", out_path, "write the JSON report here");

    auto* project_cmd = app.add_subcommand("project", "project a dense matrix onto the Monarch class");
    project_cmd->add_option("--input", input_path, "matrix text file")->required();
    project_cmd->add_option("--blocks", blocks);
    project_cmd->add_option("--block-rank", block_rank);
    project_cmd->add_option("--out", out_path, "checkpoint output");
    project_cmd->add_option("--seed", seed);

    auto* train_cmd = app.add_subcommand("train", "train one adapter on a planted task");
    train_cmd->add_option("--config", config_path)->required();
    train_cmd->add_option("--seed", seed);
    train_cmd->add_option("--out", out_path, "records file");
    train_cmd->add_option("--checkpoint", checkpoint_path, "save the trained adapter");
    train_cmd->add_option("--set", overrides, "dotted-key=value override");
    train_cmd->add_option("--curve", curve_path, "loss curve file");

    auto* sweep_cmd = app.add_subcommand("sweep", "train a grid of adapters on one task");
    sweep_cmd->add_option("--config", config_path)->required();
    sweep_cmd->add_option("--seed", seed);
    sweep_cmd->add_option("--out", out_path, "records file");
    sweep_cmd->add_option("--set", overrides, "dotted-key=value override");
    sweep_cmd->add_option("--curve", curve_path, "loss curve file");

    auto* bench_cmd = app.add_subcommand("bench", "FLOP model and wall time, Monarch vs dense");
    bench_cmd->add_option("--n", n);
    bench_cmd->add_option("--blocks", blocks);
    bench_cmd->add_option("--block-rank", block_rank);
    bench_cmd->add_option("--batch", batch);
    bench_cmd->add_option("--repeats", repeats);
    bench_cmd->add_option("--seed", seed);

    auto* stats_cmd = app.add_subcommand("stats", "weight statistics of a checkpoint");
    stats_cmd->add_option("--checkpoint", checkpoint_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kInputError;
    }

    const Streams s{out, err};
    const bool seed_given = [&] {
        for (auto* sub : {verify_cmd, project_cmd, train_cmd, sweep_cmd, bench_cmd})
            if (sub->parsed() && sub->count("--seed")) return true;
        return false;
    }();
    if (seed_given && (train_cmd->parsed() || sweep_cmd->parsed())) {
        overrides.insert(overrides.begin(), "seed=" + std::to_string(seed));
    }
    try {
        if (verify_cmd->parsed()) return cmd_verify(suite, seed, out_path, s);
        if (project_cmd->parsed()) return cmd_project(input_path, blocks, block_rank, out_path, seed, s);
        if (train_cmd->parsed()) return cmd_train(config_path, overrides, out_path, checkpoint_path, curve_path, s);
        if (sweep_cmd->parsed()) return cmd_sweep(config_path, overrides, out_path, curve_path, s);
        if (bench_cmd->parsed()) return cmd_bench(n, blocks, block_rank, batch, repeats, seed, s);
        if (stats_cmd->parsed()) return cmd_stats(checkpoint_path, s);
    } catch (const StructuralError& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return kViolation;
    }
    return kInputError;
}

}  // namespace more::cli
