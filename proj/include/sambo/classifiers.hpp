#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sambo/model_learning.hpp"

namespace sambo {

struct ClassifierTrainConfig {
    std::size_t steps = 200;
    double learning_rate = 0.2;
    std::size_t batch_size = 256;
    double logit_clamp = 10.0;
    /// Largest change of a single logit in one step.
    double max_step = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Full-data cross-entropy recorded along training.
struct ClassifierTrace {
    std::vector<double> loss;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// One logistic parameter per discrete cell; C = sigmoid(logit).
class LogitTable {
  public:
    LogitTable() = default;
    LogitTable(std::size_t n_cells, double clamp);

    std::size_t size() const { return logits_.size(); }
    double clamp() const { return clamp_; }
    /// Stored logit limited to [-clamp, clamp].
    double log_odds(std::size_t cell) const;
    double probability(std::size_t cell) const;
    const std::vector<double>& raw() const { return logits_; }
    void set(std::size_t cell, double logit) { logits_[cell] = logit; }

  private:
    std::vector<double> logits_;
    double clamp_ = 10.0;
};

/// C_phi(s,a,s'): probability that a transition came from the environment.
class TransitionClassifier {
  public:
    TransitionClassifier() = default;
    TransitionClassifier(std::size_t n_states, std::size_t n_actions, double clamp = 10.0);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    std::size_t cell(std::size_t s, std::size_t a, std::size_t next) const {
        return (s * n_actions_ + a) * n_states_ + next;
    }
    double log_odds(std::size_t s, std::size_t a, std::size_t next) const { return table_.log_odds(cell(s, a, next)); }
    double probability(std::size_t s, std::size_t a, std::size_t next) const {
        return table_.probability(cell(s, a, next));
    }
    LogitTable& table() { return table_; }
    const LogitTable& table() const { return table_; }

    /// log(|D_env| / |D_m|) of the last training call; the additive offset
    /// between these log-odds and log(p/q).
    double size_log_ratio = 0.0;
    ClassifierTrace trace;

  private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    LogitTable table_;
};

/// C_psi(s,a): probability that a state-action pair came from the current policy.
class ActionClassifier {
  public:
    ActionClassifier() = default;
    ActionClassifier(std::size_t n_states, std::size_t n_actions, double clamp = 10.0);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    std::size_t cell(std::size_t s, std::size_t a) const { return s * n_actions_ + a; }
    double log_odds(std::size_t s, std::size_t a) const { return table_.log_odds(cell(s, a)); }
    double probability(std::size_t s, std::size_t a) const { return table_.probability(cell(s, a)); }
    LogitTable& table() { return table_; }
    const LogitTable& table() const { return table_; }

    /// log(|D_pi| / |D_env|) of the last training call.
    double size_log_ratio = 0.0;
    ClassifierTrace trace;

  private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    LogitTable table_;
};

/// Minimizes -E_{D_env}[log C] - E_{D_m}[log(1-C)] over minibatches drawn from the
/// pooled data. Starts from `warm_start` when given.
TransitionClassifier train_transition_classifier(const ReplayBuffer& d_env, const ReplayBuffer& d_m,
                                                 std::size_t n_states, std::size_t n_actions,
                                                 const ClassifierTrainConfig& cfg,
                                                 const TransitionClassifier* warm_start = nullptr);

/// Minimizes -E_{D_pi}[log C] - E_{D_env}[log(1-C)] on (s,a) cells.
ActionClassifier train_action_classifier(const ReplayBuffer& d_pi, const ReplayBuffer& d_env, std::size_t n_states,
                                         std::size_t n_actions, const ClassifierTrainConfig& cfg,
                                         const ActionClassifier* warm_start = nullptr);

inline constexpr double kOracleLaplace = 0.5;

/// Count-based Bayes classifier: logit = log((n_env + lambda) / (n_m + lambda)).
TransitionClassifier closed_form_transition_oracle(const ReplayBuffer& d_env, const ReplayBuffer& d_m,
                                                   std::size_t n_states, std::size_t n_actions,
                                                   double lambda = kOracleLaplace, double clamp = 10.0);
ActionClassifier closed_form_action_oracle(const ReplayBuffer& d_pi, const ReplayBuffer& d_env, std::size_t n_states,
                                           std::size_t n_actions, double lambda = kOracleLaplace,
                                           double clamp = 10.0);

/// Per-cell counts of (s,a,s') and (s,a) occurrences in a buffer.
std::vector<double> transition_counts(const ReplayBuffer& data, std::size_t n_states, std::size_t n_actions);
std::vector<double> state_action_counts(const ReplayBuffer& data, std::size_t n_states, std::size_t n_actions);

}  // namespace sambo
