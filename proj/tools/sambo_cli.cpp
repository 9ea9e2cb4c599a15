#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sambo/harness.hpp"

using namespace sambo;

namespace {

int execute(ExperimentConfig config, std::optional<std::size_t> threads, const std::string& output) {
    if (threads) config.threads = *threads;
    if (!output.empty()) config.output_dir = output;
    try {
        const auto outcome = run_experiment(config, std::cout);
        std::cout << "summary: " << outcome.summary.string() << "\n";
        return outcome.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::kRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shifts-aware model-based offline RL experiments on tabular MDPs"};
    app.require_subcommand(1);

    std::string config_path, output;
    std::size_t threads = 0;

    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", config_path, "Config file")->required();
    run->add_option("--threads", threads, "Worker threads for independent cells");
    run->add_option("--output", output, "Output directory (overrides config and SAMBO_OUTPUT_DIR)");

    auto* verify = app.add_subcommand("verify", "Run the numerical verification suites");
    verify->add_option("--config", config_path, "Config file with a [verify] section");
    verify->add_option("--threads", threads, "Worker threads for instance suites");
    verify->add_option("--output", output, "Output directory");

    std::vector<std::string> csvs;
    std::string svg_path = "plot.svg", column = "true_env_return";
    auto* plot = app.add_subcommand("plot", "Render result CSVs as an SVG line chart");
    plot->add_option("csv", csvs, "Result CSV files");
    plot->add_option("-o,--output", svg_path, "SVG file to write");
    plot->add_option("--column", column, "Column plotted against iteration");

    std::string kind_name = "toy_model_bias";
    auto* defaults = app.add_subcommand("print-defaults", "Print the default config of an experiment kind");
    defaults->add_option("--kind", kind_name, "toy_model_bias, toy_policy_shift, sambo, ablation or verify");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_code::kOk : exit_code::kUsage;
    }

    const std::optional<std::size_t> thread_override = threads ? std::optional(threads) : std::nullopt;

    if (*defaults) {
        try {
            std::cout << format_config(default_config(experiment_kind_from_string(kind_name)));
            return exit_code::kOk;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return exit_code::kUsage;
        }
    }
    if (*plot) return plot_csvs({csvs.begin(), csvs.end()}, svg_path, column, std::cerr);

    ExperimentConfig config;
    try {
        config = *run || !config_path.empty() ? load_config(config_path) : default_config(ExperimentKind::Verify);
    } catch (const ConfigError& e) {
        std::cerr << config_path << ": " << e.what() << "\n";
        return exit_code::kParse;
    }
    if (*verify && config.kind != ExperimentKind::Verify) {
        std::cerr << config_path << ": verify needs a config of kind verify\n";
        return exit_code::kParse;
    }
    return execute(config, thread_override, output);
}
