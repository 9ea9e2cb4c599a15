#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sambo/harness.hpp"

using namespace sambo;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("sambo_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

ExperimentConfig tiny_model_bias(const fs::path& dir) {
    auto c = default_config(ExperimentKind::ToyModelBias);
    c.train.iterations = 6;
    c.train.rollouts_per_update = 4;
    c.train.horizon = 15;
    c.seeds = {0, 1};
    c.output_dir = dir.string();
    return c;
}

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST(Config, MinimalConfigTakesKindDefaults) {
    const auto c = parse("[experiment]\nkind = toy_policy_shift\n");
    const auto d = default_config(ExperimentKind::ToyPolicyShift);
    EXPECT_EQ(c.kind, ExperimentKind::ToyPolicyShift);
    EXPECT_EQ(format_config(c), format_config(d));
}

TEST(Config, OverridesAndComments) {
    const auto c = parse(
        "# comment\n[experiment]\nkind = sambo ; trailing\nseeds = 3, 5\n\n[sar]\nalpha = 0.5\n"
        "[grid]\nrewards = 3:2.0, 0:0.1\nn_cells = 4\n[train]\nstart_mode = dataset\n");
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 5}));
    EXPECT_DOUBLE_EQ(c.sar.alpha, 0.5);
    ASSERT_EQ(c.grid.reward_placements.size(), 2u);
    EXPECT_EQ(c.grid.reward_placements[0].state, 3u);
    EXPECT_DOUBLE_EQ(c.grid.reward_placements[0].value, 2.0);
    EXPECT_EQ(c.grid.n_cells, 4u);
    EXPECT_EQ(c.train.start_mode, StartMode::Dataset);
}

TEST(Config, ErrorsCarryLineAndField) {
    try {
        parse("[experiment]\nkind = sambo\n[sar]\nalpha = abc\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 4u);
        EXPECT_EQ(e.field(), "sar.alpha");
    }
    try {
        parse("[experiment]\nkind = sambo\n[train]\nwarp = 9\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 4u);
        EXPECT_EQ(e.field(), "train.warp");
    }
    try {
        parse("[experiment]\nkind = sambo\nkind = verify\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(parse("[sar]\nalpha = 1\n"), ConfigError);
    EXPECT_THROW(parse("[experiment]\nkind = nonsense\n"), ConfigError);
    EXPECT_THROW(parse("[experiment\nkind = sambo\n"), ConfigError);
    EXPECT_THROW(parse("kind = sambo\n"), ConfigError);
    EXPECT_THROW(parse("[experiment]\nkind = sambo\n[sar]\nalpha = -1\n"), ConfigError);
}

TEST(Config, FormatRoundTripsEveryKind) {
    for (auto kind : {ExperimentKind::ToyModelBias, ExperimentKind::ToyPolicyShift, ExperimentKind::Sambo,
                      ExperimentKind::Verify, ExperimentKind::Ablation}) {
        auto c = default_config(kind);
        c.sar.beta = 0.3;
        c.gamma = 0.93;
        const std::string text = format_config(c);
        EXPECT_EQ(format_config(parse(text)), text) << to_string(kind);
        EXPECT_EQ(text.find("0.29999"), std::string::npos);
    }
}

TEST(OutputDir, ConfigThenEnvironmentThenDefault) {
    ExperimentConfig c;
    ::unsetenv("SAMBO_OUTPUT_DIR");
    EXPECT_EQ(resolve_output_dir(c), fs::path("results"));
    ::setenv("SAMBO_OUTPUT_DIR", "/tmp/elsewhere", 1);
    EXPECT_EQ(resolve_output_dir(c), fs::path("/tmp/elsewhere"));
    c.output_dir = "mine";
    EXPECT_EQ(resolve_output_dir(c), fs::path("mine"));
    ::unsetenv("SAMBO_OUTPUT_DIR");
}

TEST(Csv, SchemaAndRowCount) {
    TrainingCurve curve;
    curve.records = {{1.5, 2.0, 0.1, -0.3}, {1.75, 2.5, 0.2, -0.25}};
    const std::string csv = curve_to_csv(curve);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kCsvHeader);
    EXPECT_EQ(count(csv, "\n"), 3u);
    EXPECT_NE(csv.find("\n1,1.5,2,0.1,-0.3\n"), std::string::npos);

    const auto dir = fresh_dir("csv");
    fs::create_directories(dir);
    std::ofstream(dir / "a.csv") << csv;
    const auto table = read_curve_csv(dir / "a.csv");
    ASSERT_EQ(table.rows.size(), 2u);
    EXPECT_DOUBLE_EQ(table.rows[1][0], 2.0);
    EXPECT_DOUBLE_EQ(table.rows[1][1], 1.75);
    std::ofstream(dir / "bad.csv") << "iteration,return\n1,2\n";
    EXPECT_THROW(read_curve_csv(dir / "bad.csv"), InvalidInput);
}

TEST(Run, ModelBiasWritesOneCsvPerModeAndSeed) {
    const auto dir = fresh_dir("run");
    std::ostringstream log;
    const auto outcome = run_experiment(tiny_model_bias(dir), log);
    EXPECT_EQ(outcome.exit_code, exit_code::kOk);
    const auto modes = experiment_modes(ExperimentKind::ToyModelBias);
    EXPECT_EQ(modes, (std::vector<std::string>{"om", "sar-om", "um", "sar-um"}));
    EXPECT_EQ(outcome.cells.size(), 8u);
    for (const auto& mode : modes)
        for (int seed : {0, 1}) {
            const auto path = dir / ("toy_model_bias_" + mode + "_seed" + std::to_string(seed) + ".csv");
            ASSERT_TRUE(fs::exists(path)) << path;
            EXPECT_EQ(read_curve_csv(path).rows.size(), 6u);
        }
    const auto summary = nlohmann::json::parse(slurp(outcome.summary));
    EXPECT_TRUE(summary.contains("optimal_return"));
    ASSERT_EQ(summary["modes"].size(), 4u);
    EXPECT_EQ(summary["modes"][1]["mode"], "sar-om");
    EXPECT_TRUE(summary["modes"][1]["final_true_env_return"].contains("std"));
}

TEST(Run, RepeatedAndThreadedRunsAreByteIdentical) {
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    std::ostringstream log;
    auto ca = tiny_model_bias(a), cb = tiny_model_bias(b);
    cb.threads = 3;
    run_experiment(ca, log);
    run_experiment(cb, log);
    for (const auto& entry : fs::directory_iterator(a))
        EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path().filename();
}

TEST(Run, CellsMatchTheStandaloneTrainer) {
    auto c = tiny_model_bias(fresh_dir("cell"));
    const auto curve = run_cell(c, "sar-om", 1);
    EXPECT_EQ(curve.size(), 6u);
    EXPECT_EQ(run_cell(c, "sar-om", 1), curve);
    EXPECT_THROW(run_cell(c, "no-such-mode", 1), std::exception);
}

TEST(Run, SmallVerifyPassesWithFourReports) {
    auto c = default_config(ExperimentKind::Verify);
    c.verify.theorem1_instances = 5;
    c.verify.is_instances = 5;
    c.verify.kl_rows = 50;
    c.verify.classifier_samples = 40000;
    c.verify.classifier_steps = 2000;
    c.output_dir = fresh_dir("verify").string();
    std::ostringstream log;
    const auto outcome = run_experiment(c, log);
    EXPECT_EQ(outcome.exit_code, exit_code::kOk) << log.str();
    ASSERT_EQ(outcome.reports.size(), 4u);
    for (const auto& r : outcome.reports) EXPECT_TRUE(r.passed) << r.to_record();
    EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "verify_reports.txt"));
}

TEST(Plot, SingleCsvGivesOnePolylineWithTwoPoints) {
    const auto dir = fresh_dir("plot");
    fs::create_directories(dir);
    TrainingCurve curve;
    curve.records = {{1.0, 0, 0, 0}, {2.0, 0, 0, 0}};
    std::ofstream(dir / "one.csv") << curve_to_csv(curve);
    std::ostringstream err;
    ASSERT_EQ(plot_csvs({dir / "one.csv"}, dir / "one.svg", "true_env_return", err), exit_code::kOk) << err.str();
    const std::string svg = slurp(dir / "one.svg");
    EXPECT_EQ(count(svg, "<polyline"), 1u);
    const auto start = svg.find("points=\"") + 8;
    const std::string points = svg.substr(start, svg.find('"', start) - start);
    EXPECT_EQ(count(points, ","), 2u);
    EXPECT_NE(svg.find("true_env_return"), std::string::npos);
    EXPECT_NE(svg.find("iteration"), std::string::npos);

    ASSERT_EQ(plot_csvs({dir / "one.csv"}, dir / "two.svg", "true_env_return", err), exit_code::kOk);
    EXPECT_EQ(slurp(dir / "two.svg"), svg);
}

TEST(Plot, UsageAndSchemaErrors) {
    const auto dir = fresh_dir("plot_err");
    fs::create_directories(dir);
    std::ostringstream err;
    EXPECT_EQ(plot_csvs({}, dir / "x.svg", "true_env_return", err), exit_code::kUsage);
    std::ofstream(dir / "bad.csv") << "a,b\n1,2\n";
    EXPECT_EQ(plot_csvs({dir / "bad.csv"}, dir / "x.svg", "true_env_return", err), exit_code::kParse);
    EXPECT_FALSE(fs::exists(dir / "x.svg"));
}
