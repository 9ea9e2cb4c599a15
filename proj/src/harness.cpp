#include "sambo/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "sambo/parallel.hpp"

namespace sambo {

namespace fs = std::filesystem;

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::ToyModelBias: return "toy_model_bias";
        case ExperimentKind::ToyPolicyShift: return "toy_policy_shift";
        case ExperimentKind::Sambo: return "sambo";
        case ExperimentKind::Verify: return "verify";
        case ExperimentKind::Ablation: return "ablation";
    }
    return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
    for (auto kind : {ExperimentKind::ToyModelBias, ExperimentKind::ToyPolicyShift, ExperimentKind::Sambo,
                      ExperimentKind::Verify, ExperimentKind::Ablation})
        if (name == to_string(kind)) return kind;
    throw InvalidInput("unknown experiment kind '" + name + "'");
}

std::string to_string(DataPolicy policy) {
    switch (policy) {
        case DataPolicy::Uniform: return "uniform";
        case DataPolicy::Optimal: return "optimal";
        case DataPolicy::AntiOptimal: return "anti_optimal";
    }
    return "?";
}

DataPolicy data_policy_from_string(const std::string& name) {
    if (name == "uniform") return DataPolicy::Uniform;
    if (name == "optimal") return DataPolicy::Optimal;
    if (name == "anti_optimal") return DataPolicy::AntiOptimal;
    throw InvalidInput("unknown data policy '" + name + "'");
}

void ExperimentConfig::validate() const {
    grid.validate();
    bias.validate();
    sar.validate();
    train.validate();
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("gamma must lie in (0,1)");
    if (seeds.empty()) throw InvalidInput("at least one seed is required");
    if (threads == 0) throw InvalidInput("threads must be at least 1");
}

ConfigError::ConfigError(std::size_t line, std::string field, const std::string& message)
    : std::runtime_error((line ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? std::string() : field + ": ") + message),
      line_(line),
      field_(std::move(field)) {}

ExperimentConfig default_config(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    switch (kind) {
        case ExperimentKind::ToyModelBias:
            c.bias.epsilon = 0.9;
            c.sar.alpha = 1.0;
            c.sar.beta = 0.0;
            c.train.iterations = 200;
            c.train.learning_rate = 0.1;
            break;
        case ExperimentKind::ToyPolicyShift:
            c.sar.alpha = 0.0;
            c.sar.beta = 0.3;
            c.train.iterations = 200;
            c.train.learning_rate = 0.05;
            break;
        case ExperimentKind::Sambo:
        case ExperimentKind::Ablation:
            c.train.iterations = 30;
            c.train.learning_rate = 1.0;
            break;
        case ExperimentKind::Verify:
            c.seeds = {0};
            break;
    }
    return c;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::string value;
    std::size_t line = 0;
};

class FieldReader {
  public:
    FieldReader(std::string field, const Entry& entry) : field_(std::move(field)), entry_(entry) {}

    double real() const {
        double x = 0.0;
        const auto& v = entry_.value;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x)) fail("expected a number");
        return x;
    }
    std::uint64_t count() const {
        std::uint64_t x = 0;
        const auto& v = entry_.value;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || ptr != v.data() + v.size()) fail("expected a non-negative integer");
        return x;
    }
    const std::string& text() const { return entry_.value; }
    std::vector<std::string> list() const {
        std::vector<std::string> out;
        std::stringstream ss(entry_.value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) fail("empty list element");
            out.push_back(item);
        }
        return out;
    }
    template <class F>
    auto parsed(F&& f) const {
        try {
            return f(entry_.value);
        } catch (const InvalidInput& e) {
            fail(e.what());
        }
    }
    [[noreturn]] void fail(const std::string& message) const {
        throw ConfigError(entry_.line, field_, message + " (got '" + entry_.value + "')");
    }

  private:
    std::string field_;
    const Entry& entry_;
};

std::uint64_t parse_count(const std::string& v) {
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw InvalidInput("expected a non-negative integer");
    return x;
}

double parse_real(const std::string& v) {
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw InvalidInput("expected a number");
    return x;
}

/// Shortest text that reads back to the same double.
std::string format_real(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

using Setter = void (*)(ExperimentConfig&, const FieldReader&);

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"experiment.seeds",
         [](ExperimentConfig& c, const FieldReader& f) {
             c.seeds.clear();
             for (const auto& s : f.list()) c.seeds.push_back(f.parsed([&](const std::string&) { return parse_count(s); }));
         }},
        {"experiment.output_dir", [](ExperimentConfig& c, const FieldReader& f) { c.output_dir = f.text(); }},
        {"experiment.threads", [](ExperimentConfig& c, const FieldReader& f) { c.threads = f.count(); }},
        {"experiment.data_policy",
         [](ExperimentConfig& c, const FieldReader& f) { c.data_policy = f.parsed(data_policy_from_string); }},
        {"grid.n_cells", [](ExperimentConfig& c, const FieldReader& f) { c.grid.n_cells = f.count(); }},
        {"grid.base_reward", [](ExperimentConfig& c, const FieldReader& f) { c.grid.base_reward = f.real(); }},
        {"grid.gamma", [](ExperimentConfig& c, const FieldReader& f) { c.gamma = f.real(); }},
        {"grid.rewards",
         [](ExperimentConfig& c, const FieldReader& f) {
             c.grid.reward_placements.clear();
             for (const auto& item : f.list()) {
                 const auto colon = item.find(':');
                 if (colon == std::string::npos) f.fail("expected state:value pairs");
                 c.grid.reward_placements.push_back(f.parsed([&](const std::string&) {
                     return RewardPlacement{parse_count(trim(item.substr(0, colon))),
                                            parse_real(trim(item.substr(colon + 1)))};
                 }));
             }
         }},
        {"bias.kind", [](ExperimentConfig& c, const FieldReader& f) { c.bias.kind = f.parsed(bias_kind_from_string); }},
        {"bias.epsilon", [](ExperimentConfig& c, const FieldReader& f) { c.bias.epsilon = f.real(); }},
        {"sar.alpha", [](ExperimentConfig& c, const FieldReader& f) { c.sar.alpha = f.real(); }},
        {"sar.beta", [](ExperimentConfig& c, const FieldReader& f) { c.sar.beta = f.real(); }},
        {"sar.c", [](ExperimentConfig& c, const FieldReader& f) { c.sar.c = f.real(); }},
        {"sar.floor", [](ExperimentConfig& c, const FieldReader& f) { c.sar.floor = f.real(); }},
        {"sar.term_clamp", [](ExperimentConfig& c, const FieldReader& f) { c.sar.term_clamp = f.real(); }},
        {"sar.mode", [](ExperimentConfig& c, const FieldReader& f) { c.sar.mode = f.parsed(sar_mode_from_string); }},
        {"train.iterations", [](ExperimentConfig& c, const FieldReader& f) { c.train.iterations = f.count(); }},
        {"train.rollouts_per_update",
         [](ExperimentConfig& c, const FieldReader& f) { c.train.rollouts_per_update = f.count(); }},
        {"train.horizon", [](ExperimentConfig& c, const FieldReader& f) { c.train.horizon = f.count(); }},
        {"train.learning_rate", [](ExperimentConfig& c, const FieldReader& f) { c.train.learning_rate = f.real(); }},
        {"train.entropy_coeff", [](ExperimentConfig& c, const FieldReader& f) { c.train.entropy_coeff = f.real(); }},
        {"train.real_ratio", [](ExperimentConfig& c, const FieldReader& f) { c.train.real_ratio = f.real(); }},
        {"train.batch_size", [](ExperimentConfig& c, const FieldReader& f) { c.train.batch_size = f.count(); }},
        {"train.rollout_h", [](ExperimentConfig& c, const FieldReader& f) { c.train.rollout_h = f.count(); }},
        {"train.rollout_b", [](ExperimentConfig& c, const FieldReader& f) { c.train.rollout_b = f.count(); }},
        {"train.policy_updates", [](ExperimentConfig& c, const FieldReader& f) { c.train.policy_updates = f.count(); }},
        {"train.critic_lr", [](ExperimentConfig& c, const FieldReader& f) { c.train.critic_lr = f.real(); }},
        {"train.ensemble_size", [](ExperimentConfig& c, const FieldReader& f) { c.train.ensemble_size = f.count(); }},
        {"train.model_smoothing", [](ExperimentConfig& c, const FieldReader& f) { c.train.model_smoothing = f.real(); }},
        {"train.model_buffer_capacity",
         [](ExperimentConfig& c, const FieldReader& f) { c.train.model_buffer_capacity = f.count(); }},
        {"train.start_mode",
         [](ExperimentConfig& c, const FieldReader& f) { c.train.start_mode = f.parsed(start_mode_from_string); }},
        {"train.dataset_size", [](ExperimentConfig& c, const FieldReader& f) { c.train.dataset_size = f.count(); }},
        {"classifier.steps", [](ExperimentConfig& c, const FieldReader& f) { c.train.classifier_steps = f.count(); }},
        {"classifier.learning_rate",
         [](ExperimentConfig& c, const FieldReader& f) { c.train.classifier_lr = f.real(); }},
        {"verify.theorem1_instances",
         [](ExperimentConfig& c, const FieldReader& f) { c.verify.theorem1_instances = f.count(); }},
        {"verify.is_instances", [](ExperimentConfig& c, const FieldReader& f) { c.verify.is_instances = f.count(); }},
        {"verify.kl_rows", [](ExperimentConfig& c, const FieldReader& f) { c.verify.kl_rows = f.count(); }},
        {"verify.classifier_instances",
         [](ExperimentConfig& c, const FieldReader& f) { c.verify.classifier_instances = f.count(); }},
        {"verify.classifier_samples",
         [](ExperimentConfig& c, const FieldReader& f) { c.verify.classifier_samples = f.count(); }},
        {"verify.classifier_steps",
         [](ExperimentConfig& c, const FieldReader& f) { c.verify.classifier_steps = f.count(); }},
        {"verify.seed", [](ExperimentConfig& c, const FieldReader& f) { c.verify.seed = f.count(); }},
    };
    return table;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
    std::vector<std::pair<std::string, Entry>> entries;
    std::map<std::string, std::size_t> seen;
    std::string section, raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto comment = raw.find_first_of("#;");
        const std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(line_no, "", "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError(line_no, "", "empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(line_no, "", "expected 'key = value'");
        if (section.empty()) throw ConfigError(line_no, "", "key outside of any section");
        const std::string key = section + "." + trim(line.substr(0, eq));
        if (seen.count(key)) throw ConfigError(line_no, key, "duplicate key (first on line " + std::to_string(seen[key]) + ")");
        seen[key] = line_no;
        entries.push_back({key, {trim(line.substr(eq + 1)), line_no}});
    }

    ExperimentConfig config;
    bool have_kind = false;
    for (const auto& [key, entry] : entries)
        if (key == "experiment.kind") {
            config = default_config(FieldReader(key, entry).parsed(experiment_kind_from_string));
            have_kind = true;
        }
    if (!have_kind) throw ConfigError(0, "experiment.kind", "missing experiment kind");

    for (const auto& [key, entry] : entries) {
        if (key == "experiment.kind") continue;
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError(entry.line, key, "unknown key");
        it->second(config, FieldReader(key, entry));
    }
    try {
        config.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(0, "", e.what());
    }
    return config;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "", "cannot open config file '" + path.string() + "'");
    return parse_config(in);
}

std::string format_config(const ExperimentConfig& c) {
    std::ostringstream out;
    out << "[experiment]\nkind = " << to_string(c.kind) << "\nseeds = ";
    for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
    out << "\nthreads = " << c.threads << "\ndata_policy = " << to_string(c.data_policy) << "\n";
    if (!c.output_dir.empty()) out << "output_dir = " << c.output_dir << "\n";
    out << "\n[grid]\nn_cells = " << c.grid.n_cells << "\nrewards = ";
    for (std::size_t i = 0; i < c.grid.reward_placements.size(); ++i)
        out << (i ? "," : "") << c.grid.reward_placements[i].state << ":" << format_real(c.grid.reward_placements[i].value);
    out << "\nbase_reward = " << format_real(c.grid.base_reward) << "\ngamma = " << format_real(c.gamma) << "\n";
    out << "\n[bias]\nkind = " << to_string(c.bias.kind) << "\nepsilon = " << format_real(c.bias.epsilon) << "\n";
    out << "\n[sar]\nalpha = " << format_real(c.sar.alpha) << "\nbeta = " << format_real(c.sar.beta)
        << "\nc = " << format_real(c.sar.c) << "\nfloor = " << format_real(c.sar.floor)
        << "\nterm_clamp = " << format_real(c.sar.term_clamp) << "\nmode = " << to_string(c.sar.mode) << "\n";
    const auto& t = c.train;
    out << "\n[train]\niterations = " << t.iterations << "\nrollouts_per_update = " << t.rollouts_per_update
        << "\nhorizon = " << t.horizon << "\nlearning_rate = " << format_real(t.learning_rate)
        << "\nentropy_coeff = " << format_real(t.entropy_coeff) << "\nreal_ratio = " << format_real(t.real_ratio)
        << "\nbatch_size = " << t.batch_size << "\nrollout_h = " << t.rollout_h << "\nrollout_b = " << t.rollout_b
        << "\npolicy_updates = " << t.policy_updates << "\ncritic_lr = " << format_real(t.critic_lr)
        << "\nensemble_size = " << t.ensemble_size << "\nmodel_smoothing = " << format_real(t.model_smoothing)
        << "\nmodel_buffer_capacity = " << t.model_buffer_capacity << "\nstart_mode = " << to_string(t.start_mode)
        << "\ndataset_size = " << t.dataset_size << "\n";
    out << "\n[classifier]\nsteps = " << t.classifier_steps << "\nlearning_rate = " << format_real(t.classifier_lr)
        << "\n";
    const auto& v = c.verify;
    out << "\n[verify]\ntheorem1_instances = " << v.theorem1_instances << "\nis_instances = " << v.is_instances
        << "\nkl_rows = " << v.kl_rows << "\nclassifier_instances = " << v.classifier_instances
        << "\nclassifier_samples = " << v.classifier_samples << "\nclassifier_steps = " << v.classifier_steps
        << "\nseed = " << v.seed << "\n";
    return out.str();
}

fs::path resolve_output_dir(const ExperimentConfig& config) {
    if (!config.output_dir.empty()) return config.output_dir;
    if (const char* env = std::getenv("SAMBO_OUTPUT_DIR"); env && *env) return env;
    return "results";
}

std::string curve_to_csv(const TrainingCurve& curve) {
    std::string out = kCsvHeader;
    out += '\n';
    char buf[160];
    for (std::size_t i = 0; i < curve.records.size(); ++i) {
        const auto& r = curve.records[i];
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g\n", i + 1, r.true_env_return,
                      r.model_estimated_return, r.kl_to_behavior, r.mean_sar);
        out += buf;
    }
    return out;
}

CsvTable read_curve_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || trim(line) != kCsvHeader)
        throw InvalidInput("'" + path.string() + "' does not have the result column schema");
    CsvTable table;
    std::stringstream header(kCsvHeader);
    for (std::string col; std::getline(header, col, ',');) table.columns.push_back(col);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<double> row;
        std::stringstream ss(trim(line));
        for (std::string cell; std::getline(ss, cell, ',');) {
            try {
                row.push_back(parse_real(cell));
            } catch (const InvalidInput&) {
                throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
            }
        }
        if (row.size() != table.columns.size())
            throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::vector<std::string> experiment_modes(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::ToyModelBias: return {"om", "sar-om", "um", "sar-um"};
        case ExperimentKind::ToyPolicyShift: return {"uniform-vanilla", "uniform-sar", "anti-vanilla", "anti-sar"};
        case ExperimentKind::Sambo: return {"sambo"};
        case ExperimentKind::Ablation: return {"sambo", "wo-mb", "wo-ps", "logr"};
        case ExperimentKind::Verify: return {};
    }
    return {};
}

namespace {

SoftmaxPolicy data_policy(const ExperimentConfig& config, const TabularMdp& env) {
    switch (config.data_policy) {
        case DataPolicy::Uniform: return uniform_behavior(env.n_states());
        case DataPolicy::AntiOptimal: return anti_optimal_behavior(env.n_states());
        case DataPolicy::Optimal: {
            // Soft enough that every cell still shows up in the data.
            const auto best = exhaustive_optimum(env);
            return SoftmaxPolicy::greedy(best.actions, env.n_actions(), 3.0);
        }
    }
    throw InvalidInput("unknown data policy");
}

bool mode_is(const std::string& mode, std::initializer_list<const char*> names) {
    return std::any_of(names.begin(), names.end(), [&](const char* n) { return mode == n; });
}

}  // namespace

TrainingCurve run_cell(const ExperimentConfig& config, const std::string& mode, std::uint64_t seed) {
    TrainConfig train = config.train;
    train.seed = seed;
    const TabularMdp env = build_grid(config.grid, config.gamma);
    switch (config.kind) {
        case ExperimentKind::ToyModelBias: {
            if (!mode_is(mode, {"om", "sar-om", "um", "sar-um"})) break;
            BiasSpec bias = config.bias;
            bias.kind = mode.ends_with("om") ? BiasKind::Overestimating : BiasKind::Underestimating;
            const auto model = make_biased_model(env.transition(), config.grid, bias);
            const auto reward = mode.starts_with("sar") ? RewardMode::Sar : RewardMode::Vanilla;
            return train_pg_model_bias(env, model, reward, config.sar, train);
        }
        case ExperimentKind::ToyPolicyShift: {
            if (!mode_is(mode, {"uniform-vanilla", "uniform-sar", "anti-vanilla", "anti-sar"})) break;
            const auto pi_b =
                mode.starts_with("uniform") ? uniform_behavior(env.n_states()) : anti_optimal_behavior(env.n_states());
            const auto reward = mode.ends_with("sar") ? RewardMode::Sar : RewardMode::Vanilla;
            return train_pg_policy_shift(env, pi_b, reward, config.sar, train);
        }
        case ExperimentKind::Sambo:
        case ExperimentKind::Ablation: {
            if (!mode_is(mode, {"sambo", "wo-mb", "wo-ps", "logr"})) break;
            if (config.kind == ExperimentKind::Sambo && mode != "sambo") break;
            SarConfig sar = config.sar;
            if (mode == "wo-mb" || mode == "logr") sar.alpha = 0.0;
            if (mode == "wo-ps" || mode == "logr") sar.beta = 0.0;
            const auto d_env =
                collect_dataset(env, data_policy(config, env), train.dataset_size, train.horizon, mix_seed(seed, 99));
            return sambo_train(d_env, env, sar, train).curve;
        }
        case ExperimentKind::Verify: break;
    }
    throw InvalidInput("mode '" + mode + "' does not belong to experiment " + to_string(config.kind));
}

namespace {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    if (xs.empty()) return out;
    for (double x : xs) out.mean += x;
    out.mean /= double(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(ss / double(xs.size() - 1));
    }
    return out;
}

nlohmann::ordered_json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

RunOutcome run_verify(const ExperimentConfig& config, const fs::path& dir, std::ostream& log) {
    const auto& v = config.verify;
    SuiteOptions options;
    options.seed = v.seed;
    options.threads = config.threads;

    RunOutcome outcome;
    options.instances = v.theorem1_instances;
    outcome.reports.push_back(theorem1_suite(options));
    options.instances = v.is_instances;
    outcome.reports.push_back(is_identity_suite(options));
    options.instances = v.kl_rows;
    outcome.reports.push_back(kl_forms_suite(options));
    options.instances = v.classifier_instances;
    ClassifierCheckOptions check;
    check.n_env = check.n_model = check.n_policy = v.classifier_samples;
    check.train.steps = v.classifier_steps;
    const auto classifier = classifier_suite(options, 0.05, check);
    log << "  " << classifier.transition.to_record() << "\n  " << classifier.action.to_record() << "\n";
    VerificationReport odds = classifier.transition;
    odds.check_name = "classifier_odds";
    odds.merge(classifier.action);
    outcome.reports.push_back(odds);

    std::string text;
    nlohmann::ordered_json summary;
    summary["experiment"] = to_string(config.kind);
    for (const auto& r : outcome.reports) {
        text += r.to_record() + "\n";
        log << r.to_record() << "\n";
        if (!r.passed) {
            log << "  worst instance: " << r.worst_instance << "\n";
            outcome.exit_code = exit_code::kVerifyFail;
        }
        summary["reports"].push_back({{"check", r.check_name},
                                      {"instances", r.instances_run},
                                      {"worst_margin", r.worst_margin},
                                      {"tolerance", r.tolerance},
                                      {"passed", r.passed}});
    }
    write_file(dir / "verify_reports.txt", text);
    outcome.summary = dir / "verify_summary.json";
    write_file(outcome.summary, summary.dump(2) + "\n");
    return outcome;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, std::ostream& log) {
    config.validate();
    const fs::path dir = resolve_output_dir(config);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory '" + dir.string() + "'");

    if (config.kind == ExperimentKind::Verify) return run_verify(config, dir, log);

    const auto modes = experiment_modes(config.kind);
    RunOutcome outcome;
    for (const auto& mode : modes)
        for (auto seed : config.seeds) {
            CellResult cell;
            cell.mode = mode;
            cell.seed = seed;
            cell.csv = dir / (to_string(config.kind) + "_" + mode + "_seed" + std::to_string(seed) + ".csv");
            outcome.cells.push_back(std::move(cell));
        }
    parallel_for(outcome.cells.size(), config.threads, [&](std::size_t i) {
        auto& cell = outcome.cells[i];
        cell.curve = run_cell(config, cell.mode, cell.seed);
        write_file(cell.csv, curve_to_csv(cell.curve));
    });

    nlohmann::ordered_json summary;
    summary["experiment"] = to_string(config.kind);
    summary["seeds"] = config.seeds;
    if (config.kind != ExperimentKind::Verify)
        summary["optimal_return"] = exhaustive_optimum(build_grid(config.grid, config.gamma)).expected_return;
    for (const auto& mode : modes) {
        std::vector<double> final_true, final_model, mean_kl, final_sar, to_95;
        for (const auto& cell : outcome.cells) {
            if (cell.mode != mode) continue;
            final_true.push_back(cell.curve.back().true_env_return);
            final_model.push_back(cell.curve.back().model_estimated_return);
            mean_kl.push_back(cell.curve.mean_kl());
            final_sar.push_back(cell.curve.back().mean_sar);
            to_95.push_back(double(cell.curve.updates_to_fraction(0.95)));
        }
        nlohmann::ordered_json entry;
        entry["mode"] = mode;
        entry["final_true_env_return"] = to_json(mean_std(final_true));
        entry["final_model_estimated_return"] = to_json(mean_std(final_model));
        entry["mean_kl_to_behavior"] = to_json(mean_std(mean_kl));
        entry["final_mean_sar"] = to_json(mean_std(final_sar));
        entry["updates_to_95_percent"] = to_json(mean_std(to_95));
        summary["modes"].push_back(entry);
        const auto m = mean_std(final_true);
        char buf[200];
        std::snprintf(buf, sizeof buf, "%-16s final true return %.6f +- %.6f\n", mode.c_str(), m.mean, m.std);
        log << buf;
    }
    outcome.summary = dir / (to_string(config.kind) + "_summary.json");
    write_file(outcome.summary, summary.dump(2) + "\n");
    return outcome;
}

std::string render_svg(const std::vector<std::string>& labels, const std::vector<CsvTable>& tables,
                       const std::string& column) {
    if (tables.empty()) throw InvalidInput("nothing to plot");
    if (labels.size() != tables.size()) throw InvalidInput("one label per table is required");
    const auto& columns = tables.front().columns;
    const auto col_it = std::find(columns.begin(), columns.end(), column);
    if (col_it == columns.end()) throw InvalidInput("unknown column '" + column + "'");
    const std::size_t col = std::size_t(col_it - columns.begin());
    for (const auto& t : tables)
        if (t.columns != columns) throw InvalidInput("tables do not share a column schema");

    double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
    bool first = true;
    for (const auto& t : tables)
        for (const auto& row : t.rows) {
            if (first) {
                x_lo = x_hi = row[0];
                y_lo = y_hi = row[col];
                first = false;
            }
            x_lo = std::min(x_lo, row[0]);
            x_hi = std::max(x_hi, row[0]);
            y_lo = std::min(y_lo, row[col]);
            y_hi = std::max(y_hi, row[col]);
        }
    if (x_hi == x_lo) x_hi = x_lo + 1.0;
    if (y_hi == y_lo) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }

    constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 170, kTop = 20, kBottom = 50;
    const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
    auto py = [&](double y) { return kTop + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h; };
    static const char* const palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

    std::string svg;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                  kWidth, kHeight, kWidth, kHeight);
    svg += buf;
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n"
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n",
                  kLeft, kTop + plot_h, kLeft + plot_w, kTop + plot_h, kLeft, kTop, kLeft, kTop + plot_h);
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" font-size=\"12\">%s</text>\n",
                  kLeft + plot_w / 2, kHeight - 12, columns[0].c_str());
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"14\" y=\"%.2f\" text-anchor=\"middle\" font-size=\"12\" "
                  "transform=\"rotate(-90 14 %.2f)\">%s</text>\n",
                  kTop + plot_h / 2, kTop + plot_h / 2, column.c_str());
    svg += buf;
    for (double frac : {0.0, 0.5, 1.0}) {
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\" font-size=\"10\">%.4g</text>\n", kLeft - 4,
                      py(y_lo + frac * (y_hi - y_lo)) + 3, y_lo + frac * (y_hi - y_lo));
        svg += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" font-size=\"10\">%.4g</text>\n",
                      px(x_lo + frac * (x_hi - x_lo)), kTop + plot_h + 14, x_lo + frac * (x_hi - x_lo));
        svg += buf;
    }
    for (std::size_t i = 0; i < tables.size(); ++i) {
        const char* color = palette[i % std::size(palette)];
        svg += "<polyline fill=\"none\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < tables[i].rows.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", k ? " " : "", px(tables[i].rows[k][0]),
                          py(tables[i].rows[k][col]));
            svg += buf;
        }
        svg += "\"/>\n";
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" fill=\"%s\">%s</text>\n",
                      kLeft + plot_w + 10, kTop + 14.0 * double(i + 1), color, labels[i].c_str());
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

int plot_csvs(const std::vector<fs::path>& csvs, const fs::path& out_svg, const std::string& column,
              std::ostream& err) {
    if (csvs.empty()) {
        err << "plot: at least one CSV is required\n";
        return exit_code::kUsage;
    }
    std::vector<CsvTable> tables;
    std::vector<std::string> labels;
    try {
        for (const auto& p : csvs) {
            tables.push_back(read_curve_csv(p));
            labels.push_back(p.stem().string());
        }
        write_file(out_svg, render_svg(labels, tables, column));
    } catch (const InvalidInput& e) {
        err << "plot: " << e.what() << "\n";
        return exit_code::kParse;
    } catch (const std::exception& e) {
        err << "plot: " << e.what() << "\n";
        return exit_code::kRuntime;
    }
    return exit_code::kOk;
}

}  // namespace sambo
