#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "sambo/environments.hpp"
#include "sambo/sar.hpp"
#include "sambo/trainers.hpp"
#include "sambo/verification.hpp"

namespace sambo {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kParse = 2;
inline constexpr int kVerifyFail = 3;
inline constexpr int kRuntime = 4;
}  // namespace exit_code

enum class ExperimentKind { ToyModelBias, ToyPolicyShift, Sambo, Verify, Ablation };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

struct VerifySettings {
    std::size_t theorem1_instances = 100;
    std::size_t is_instances = 50;
    std::size_t kl_rows = 1000;
    std::size_t classifier_instances = 1;
    std::size_t classifier_samples = 100'000;
    std::size_t classifier_steps = 4000;
    std::uint64_t seed = 0;
};

/// Policy that generates the environment dataset of Sambo and Ablation runs.
enum class DataPolicy { Uniform, Optimal, AntiOptimal };

std::string to_string(DataPolicy policy);
DataPolicy data_policy_from_string(const std::string& name);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::ToyModelBias;
    GridSpec grid;
    double gamma = kDefaultGridGamma;
    BiasSpec bias;
    SarConfig sar;
    TrainConfig train;
    VerifySettings verify;
    DataPolicy data_policy = DataPolicy::Uniform;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3};
    /// Empty means SAMBO_OUTPUT_DIR, then "results".
    std::string output_dir;
    std::size_t threads = 1;

    void validate() const;
};

/// Parse failure with the offending line (0 when not tied to one) and field.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::size_t line, std::string field, const std::string& message);

    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

  private:
    std::size_t line_;
    std::string field_;
};

/// Defaults for every section, tuned per experiment kind.
ExperimentConfig default_config(ExperimentKind kind);
/// INI-style text: [section] headers, `key = value` lines, `#` or `;` comments.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Text that parse_config maps back to the same configuration.
std::string format_config(const ExperimentConfig& config);

std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

inline constexpr const char* kCsvHeader = "iteration,true_env_return,model_estimated_return,kl_to_behavior,mean_sar";

std::string curve_to_csv(const TrainingCurve& curve);

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

/// Reads a result CSV; throws InvalidInput when the header differs from kCsvHeader.
CsvTable read_curve_csv(const std::filesystem::path& path);

/// Mode names of an experiment, in output order.
std::vector<std::string> experiment_modes(ExperimentKind kind);

struct CellResult {
    std::string mode;
    std::uint64_t seed = 0;
    TrainingCurve curve;
    std::filesystem::path csv;
};

struct RunOutcome {
    int exit_code = exit_code::kOk;
    std::vector<CellResult> cells;
    std::vector<VerificationReport> reports;
    std::filesystem::path summary;
};

/// Runs every (mode, seed) cell, writes one CSV per cell and a JSON summary.
RunOutcome run_experiment(const ExperimentConfig& config, std::ostream& log);

/// Trains one cell without touching the filesystem.
TrainingCurve run_cell(const ExperimentConfig& config, const std::string& mode, std::uint64_t seed);

/// One polyline per table of `column` against iteration.
std::string render_svg(const std::vector<std::string>& labels, const std::vector<CsvTable>& tables,
                       const std::string& column);
int plot_csvs(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out_svg,
              const std::string& column, std::ostream& err);

}  // namespace sambo
