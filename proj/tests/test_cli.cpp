#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli_app.hpp"

using namespace more;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "more");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string temp(const std::string& name) { return (fs::temp_directory_path() / ("more_cli_" + name)).string(); }

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_matrix(const std::string& path, const DenseMatrix& a) {
    std::ofstream os(path);
    write_matrix_text(os, a);
}

std::string config(const std::string& name) { return std::string(MORE_SOURCE_DIR) + "/configs/" + name; }

}  // namespace

TEST(Cli, HelpAndMissingSubcommand) {
    EXPECT_EQ(run_cli({"--help"}).code, 0);
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"bench", "--n", "abc"}).code, 2);
}

TEST(Cli, VerifyCore) {
    const auto r = run_cli({"verify", "--suite", "core"});
    EXPECT_EQ(r.code, 0) << r.err;
    const auto doc = nlohmann::json::parse(r.out.substr(r.out.find('{')));
    EXPECT_EQ(doc["violations"], 0);
    EXPECT_EQ(doc["seed"], 42);
    const auto& dense = doc["suites"][0]["checks"][0];
    EXPECT_EQ(dense["name"], "dense_equivalence");
    EXPECT_LT(dense["worst"].get<double>(), 1e-10);
}

TEST(Cli, VerifyUnknownSuite) {
    const auto r = run_cli({"verify", "--suite", "everything"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("usage"), std::string::npos);
}

TEST(Cli, VerifyReportFileIsReproducible) {
    const std::string a = temp("verify_a.json"), b = temp("verify_b.json");
    EXPECT_EQ(run_cli({"verify", "--suite", "grad", "--seed", "5", "--out", a}).code, 0);
    EXPECT_EQ(run_cli({"verify", "--suite", "grad", "--seed", "5", "--out", b}).code, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_EQ(nlohmann::json::parse(slurp(a))["seed"], 5);
    fs::remove(a);
    fs::remove(b);
}

TEST(Cli, ProjectWorstCase) {
    const std::string in = temp("worst.txt"), ck = temp("worst_ckpt.json");
    write_matrix(in, worst_case_instance(MonarchConfig(16, 4, 4)));
    const auto r = run_cli({"project", "--input", in, "--blocks", "4", "--block-rank", "4", "--out", ck});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("ratio 0.750000000\n"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("k_out,k_in,channels,residual"), std::string::npos);
    EXPECT_EQ(load_checkpoint(ck).adapter.config().n(), 16u);
    fs::remove(in);
    fs::remove(ck);
}

TEST(Cli, ProjectRealizable) {
    const std::string in = temp("realizable.txt");
    Rng rng(3);
    write_matrix(in, to_dense(random_adapter(MonarchConfig(32, 4, 4), rng)));
    const auto r = run_cli({"project", "--input", in, "--blocks", "4", "--block-rank", "4"});
    EXPECT_EQ(r.code, 0);
    const auto pos = r.out.find("ratio_exact ");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_LT(std::stod(r.out.substr(pos + 12)), 1e-15);
    fs::remove(in);
}

TEST(Cli, ProjectInputErrors) {
    const std::string in = temp("odd.txt");
    write_matrix(in, DenseMatrix::identity(15));
    EXPECT_EQ(run_cli({"project", "--input", in, "--blocks", "4", "--block-rank", "2"}).code, 2);
    std::ofstream(in) << "2,2\n1,2\n3,oops\n";
    EXPECT_EQ(run_cli({"project", "--input", in}).code, 2);
    EXPECT_EQ(run_cli({"project", "--input", "/nonexistent/m.txt"}).code, 2);
    EXPECT_EQ(run_cli({"project"}).code, 2);
    fs::remove(in);
}

TEST(Cli, TrainDemoConfig) {
    const std::string out = temp("train.csv"), curve = temp("curve.csv"), ck = temp("train_ckpt.json");
    const auto r = run_cli({"train", "--config", config("planted_monarch.json"), "--out", out, "--curve", curve,
                            "--checkpoint", ck});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto pos = r.out.find("recovery_error=");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_LT(std::stod(r.out.substr(pos + 15)), 1e-2);
    EXPECT_EQ(slurp(out).substr(0, 4), "task");
    EXPECT_EQ(slurp(curve).substr(0, 14), "run,step,loss\n");

    const auto stats = run_cli({"stats", "--checkpoint", ck});
    EXPECT_EQ(stats.code, 0);
    EXPECT_NE(stats.out.find("histogram_total 512 param_count 512"), std::string::npos) << stats.out;
    for (const char* path : {out.c_str(), curve.c_str(), ck.c_str()}) fs::remove(path);
}

TEST(Cli, TrainIsByteReproducible) {
    const std::string a = temp("det_a.csv"), b = temp("det_b.csv");
    const std::vector<std::string> base{"train", "--config", config("planted_monarch.json"), "--set", "steps=200",
                                        "--set", "record_wall_time=false"};
    auto args_a = base, args_b = base;
    args_a.insert(args_a.end(), {"--out", a});
    args_b.insert(args_b.end(), {"--out", b});
    const auto ra = run_cli(args_a), rb = run_cli(args_b);
    EXPECT_EQ(ra.code, 0);
    EXPECT_EQ(ra.out, rb.out);
    EXPECT_EQ(slurp(a), slurp(b));
    fs::remove(a);
    fs::remove(b);
}

TEST(Cli, TrainSeedFlagIsEchoed) {
    const auto r = run_cli({"train", "--config", config("planted_monarch.json"), "--set", "steps=5", "--seed", "9"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("seed=9 "), std::string::npos);
}

TEST(Cli, TrainErrors) {
    EXPECT_EQ(run_cli({"train", "--config", "/nonexistent/cfg.json"}).code, 2);
    EXPECT_EQ(run_cli({"train", "--config", config("planted_monarch.json"), "--set", "adapter.blocks=5"}).code, 2);
    EXPECT_EQ(run_cli({"train", "--config", config("planted_monarch.json"), "--set", "nope=1"}).code, 2);
    const auto r = run_cli({"train", "--config", config("planted_monarch.json"), "--set", "optimizer.lr=1e300"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("step"), std::string::npos);
}

TEST(Cli, SweepBlocks) {
    const std::string out = temp("sweep.csv");
    const auto r = run_cli({"sweep", "--config", config("sweep_blocks.json"), "--set", "steps=20", "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string text = slurp(out);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
    fs::remove(out);
    EXPECT_EQ(run_cli({"sweep", "--config", "/nonexistent/sweep.json"}).code, 2);
}

TEST(Cli, BenchFlopRatio) {
    const auto r = run_cli({"bench", "--n", "4096", "--blocks", "4", "--block-rank", "8", "--batch", "1", "--repeats",
                            "1"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("flop_ratio 1/256 "), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("monarch_flops 131072\n"), std::string::npos);
    EXPECT_NE(r.out.find("dense_flops 33554432\n"), std::string::npos);
}

TEST(Cli, BenchTinyAndValidation) {
    EXPECT_EQ(run_cli({"bench", "--n", "64", "--repeats", "3"}).code, 0);
    EXPECT_EQ(run_cli({"bench", "--n", "64", "--repeats", "0"}).code, 2);
    EXPECT_EQ(run_cli({"bench", "--n", "63"}).code, 2);
}

TEST(Cli, StatsZeroOutCheckpoint) {
    const std::string ck = temp("zero_ckpt.json");
    save_checkpoint(ck, init_adapter(MonarchConfig(16, 4, 2), 42), 42);
    const auto r = run_cli({"stats", "--checkpoint", ck});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("factor_out count=32 mean=0 std=0 "), std::string::npos) << r.out;
    fs::remove(ck);
}

TEST(Cli, StatsCorruptedCheckpoint) {
    const std::string ck = temp("bad_ckpt.json");
    auto j = checkpoint_to_json(init_adapter(MonarchConfig(16, 4, 2), 42), 42);
    j["factor_in"].erase(0);
    std::ofstream(ck) << j.dump();
    const auto r = run_cli({"stats", "--checkpoint", ck});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("factor_in"), std::string::npos);
    fs::remove(ck);
}
