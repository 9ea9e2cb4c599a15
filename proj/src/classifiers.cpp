#include "sambo/classifiers.hpp"

#include <algorithm>
#include <cmath>

namespace sambo {

namespace {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double pooled_loss(const LogitTable& table, const std::vector<double>& n_pos, const std::vector<double>& n_neg,
                   double total) {
    double loss = 0.0;
    for (std::size_t c = 0; c < table.size(); ++c) {
        if (n_pos[c] == 0.0 && n_neg[c] == 0.0) continue;
        const double z = table.log_odds(c);
        loss += n_pos[c] * softplus(-z) + n_neg[c] * softplus(z);
    }
    return loss / total;
}

/// Minibatch SGD on the pooled cross-entropy, each touched logit stepped along
/// its gradient scaled by the inverse Fisher information sigma(1-sigma) of its
/// cell. Iterates from the second half of training are averaged.
ClassifierTrace train_logits(LogitTable& table, const std::vector<std::size_t>& pos,
                             const std::vector<std::size_t>& neg, const ClassifierTrainConfig& cfg) {
    cfg.validate();
    const std::size_t n_cells = table.size();
    std::vector<double> n_pos(n_cells, 0.0), n_neg(n_cells, 0.0);
    for (auto c : pos) n_pos[c] += 1.0;
    for (auto c : neg) n_neg[c] += 1.0;
    const double total = double(pos.size() + neg.size());

    std::vector<double> theta(n_cells);
    for (std::size_t c = 0; c < n_cells; ++c) theta[c] = table.log_odds(c);
    auto store = [&](const std::vector<double>& values) {
        for (std::size_t c = 0; c < n_cells; ++c) table.set(c, std::clamp(values[c], -cfg.logit_clamp, cfg.logit_clamp));
    };

    ClassifierTrace trace;
    trace.initial_loss = pooled_loss(table, n_pos, n_neg, total);
    trace.loss.push_back(trace.initial_loss);
    const std::size_t eval_every = std::max<std::size_t>(1, cfg.steps / 100);

    Rng rng = make_rng(cfg.seed);
    std::vector<double> batch_count(n_cells, 0.0), batch_pos(n_cells, 0.0);
    std::vector<std::size_t> touched;
    std::vector<double> average(n_cells, 0.0);
    const std::size_t average_from = cfg.steps / 2;
    std::size_t averaged = 0;

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        touched.clear();
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            const std::size_t k = uniform_index(pos.size() + neg.size(), rng);
            const bool positive = k < pos.size();
            const std::size_t c = positive ? pos[k] : neg[k - pos.size()];
            if (batch_count[c] == 0.0) touched.push_back(c);
            batch_count[c] += 1.0;
            if (positive) batch_pos[c] += 1.0;
        }
        for (auto c : touched) {
            const double sig = sigmoid(theta[c]);
            const double target = batch_pos[c] / batch_count[c];
            const double fisher = std::max(sig * (1.0 - sig), 1e-12);
            const double delta = std::clamp(cfg.learning_rate * (target - sig) / fisher, -cfg.max_step, cfg.max_step);
            theta[c] = std::clamp(theta[c] + delta, -cfg.logit_clamp, cfg.logit_clamp);
            batch_count[c] = 0.0;
            batch_pos[c] = 0.0;
        }
        if (step >= average_from) {
            for (std::size_t c = 0; c < n_cells; ++c) average[c] += theta[c];
            ++averaged;
        }
        if ((step + 1) % eval_every == 0) {
            store(theta);
            trace.loss.push_back(pooled_loss(table, n_pos, n_neg, total));
        }
    }
    if (averaged > 0) {
        for (auto& x : average) x /= double(averaged);
        store(average);
    } else {
        store(theta);
    }
    trace.final_loss = pooled_loss(table, n_pos, n_neg, total);
    return trace;
}

}  // namespace

void ClassifierTrainConfig::validate() const {
    if (steps == 0 || batch_size == 0) throw InvalidInput("classifier steps and batch size must be positive");
    if (!(learning_rate > 0.0)) throw InvalidInput("classifier learning rate must be positive");
    if (!(logit_clamp > 0.0)) throw InvalidInput("logit clamp must be positive");
    if (!(max_step > 0.0)) throw InvalidInput("classifier max step must be positive");
}

LogitTable::LogitTable(std::size_t n_cells, double clamp) : logits_(n_cells, 0.0), clamp_(clamp) {
    if (!(clamp > 0.0)) throw InvalidInput("logit clamp must be positive");
}

double LogitTable::log_odds(std::size_t cell) const { return std::clamp(logits_[cell], -clamp_, clamp_); }

double LogitTable::probability(std::size_t cell) const { return sigmoid(log_odds(cell)); }

TransitionClassifier::TransitionClassifier(std::size_t n_states, std::size_t n_actions, double clamp)
    : n_states_(n_states), n_actions_(n_actions), table_(n_states * n_actions * n_states, clamp) {}

ActionClassifier::ActionClassifier(std::size_t n_states, std::size_t n_actions, double clamp)
    : n_states_(n_states), n_actions_(n_actions), table_(n_states * n_actions, clamp) {}

std::vector<double> transition_counts(const ReplayBuffer& data, std::size_t n_states, std::size_t n_actions) {
    data.validate(n_states, n_actions);
    std::vector<double> counts(n_states * n_actions * n_states, 0.0);
    for (const auto& s : data.samples()) counts[(s.state * n_actions + s.action) * n_states + s.next_state] += 1.0;
    return counts;
}

std::vector<double> state_action_counts(const ReplayBuffer& data, std::size_t n_states, std::size_t n_actions) {
    data.validate(n_states, n_actions);
    std::vector<double> counts(n_states * n_actions, 0.0);
    for (const auto& s : data.samples()) counts[s.state * n_actions + s.action] += 1.0;
    return counts;
}

TransitionClassifier train_transition_classifier(const ReplayBuffer& d_env, const ReplayBuffer& d_m,
                                                 std::size_t n_states, std::size_t n_actions,
                                                 const ClassifierTrainConfig& cfg,
                                                 const TransitionClassifier* warm_start) {
    if (d_env.empty() || d_m.empty()) throw InvalidInput("transition classifier needs two non-empty buffers");
    d_env.validate(n_states, n_actions);
    d_m.validate(n_states, n_actions);
    TransitionClassifier clf = warm_start ? *warm_start : TransitionClassifier(n_states, n_actions, cfg.logit_clamp);
    if (clf.n_states() != n_states || clf.n_actions() != n_actions)
        throw InvalidInput("warm-start classifier has the wrong shape");
    std::vector<std::size_t> pos, neg;
    pos.reserve(d_env.size());
    neg.reserve(d_m.size());
    for (const auto& s : d_env.samples()) pos.push_back(clf.cell(s.state, s.action, s.next_state));
    for (const auto& s : d_m.samples()) neg.push_back(clf.cell(s.state, s.action, s.next_state));
    clf.trace = train_logits(clf.table(), pos, neg, cfg);
    clf.size_log_ratio = std::log(double(d_env.size()) / double(d_m.size()));
    return clf;
}

ActionClassifier train_action_classifier(const ReplayBuffer& d_pi, const ReplayBuffer& d_env, std::size_t n_states,
                                         std::size_t n_actions, const ClassifierTrainConfig& cfg,
                                         const ActionClassifier* warm_start) {
    if (d_pi.empty() || d_env.empty()) throw InvalidInput("action classifier needs two non-empty buffers");
    d_pi.validate(n_states, n_actions);
    d_env.validate(n_states, n_actions);
    ActionClassifier clf = warm_start ? *warm_start : ActionClassifier(n_states, n_actions, cfg.logit_clamp);
    if (clf.n_states() != n_states || clf.n_actions() != n_actions)
        throw InvalidInput("warm-start classifier has the wrong shape");
    std::vector<std::size_t> pos, neg;
    pos.reserve(d_pi.size());
    neg.reserve(d_env.size());
    for (const auto& s : d_pi.samples()) pos.push_back(clf.cell(s.state, s.action));
    for (const auto& s : d_env.samples()) neg.push_back(clf.cell(s.state, s.action));
    clf.trace = train_logits(clf.table(), pos, neg, cfg);
    clf.size_log_ratio = std::log(double(d_pi.size()) / double(d_env.size()));
    return clf;
}

TransitionClassifier closed_form_transition_oracle(const ReplayBuffer& d_env, const ReplayBuffer& d_m,
                                                   std::size_t n_states, std::size_t n_actions, double lambda,
                                                   double clamp) {
    if (d_env.empty() || d_m.empty()) throw InvalidInput("oracle needs two non-empty buffers");
    const auto n_env = transition_counts(d_env, n_states, n_actions);
    const auto n_m = transition_counts(d_m, n_states, n_actions);
    TransitionClassifier clf(n_states, n_actions, clamp);
    for (std::size_t c = 0; c < n_env.size(); ++c) clf.table().set(c, std::log((n_env[c] + lambda) / (n_m[c] + lambda)));
    clf.size_log_ratio = std::log(double(d_env.size()) / double(d_m.size()));
    return clf;
}

ActionClassifier closed_form_action_oracle(const ReplayBuffer& d_pi, const ReplayBuffer& d_env, std::size_t n_states,
                                           std::size_t n_actions, double lambda, double clamp) {
    if (d_pi.empty() || d_env.empty()) throw InvalidInput("oracle needs two non-empty buffers");
    const auto n_pi = state_action_counts(d_pi, n_states, n_actions);
    const auto n_env = state_action_counts(d_env, n_states, n_actions);
    ActionClassifier clf(n_states, n_actions, clamp);
    for (std::size_t c = 0; c < n_pi.size(); ++c) clf.table().set(c, std::log((n_pi[c] + lambda) / (n_env[c] + lambda)));
    clf.size_log_ratio = std::log(double(d_pi.size()) / double(d_env.size()));
    return clf;
}

}  // namespace sambo
