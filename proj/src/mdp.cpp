#include "sambo/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sambo {

namespace {

void check_simplex(std::span<const double> row, const std::string& what) {
    double total = 0.0;
    for (double x : row) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidInput(what + ": negative or non-finite probability");
        total += x;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance)
        throw InvalidInput(what + ": probabilities sum to " + std::to_string(total));
}

Eigen::VectorXd reward_under_policy(const Table& reward, const Table& action_probs) {
    return reward.cwiseProduct(action_probs).rowwise().sum();
}

void check_shapes(const TabularMdp& mdp, const Table& action_probs) {
    validate_action_probs(action_probs, mdp.n_states(), mdp.n_actions());
}

PolicyValues q_from_v(const TabularMdp& mdp, Eigen::VectorXd v) {
    const std::size_t ns = mdp.n_states();
    const std::size_t na = mdp.n_actions();
    Table q(ns, na);
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            const auto row = mdp.transition().row(s, a);
            double next = 0.0;
            for (std::size_t s2 = 0; s2 < ns; ++s2) next += row[s2] * v[s2];
            q(s, a) = mdp.reward()(s, a) + mdp.gamma() * next;
        }
    }
    return {std::move(v), std::move(q)};
}

}  // namespace

// ---------------------------------------------------------------------------
// TransitionKernel

TransitionKernel::TransitionKernel(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
    if (n_states == 0 || n_actions == 0) throw InvalidInput("transition kernel needs states and actions");
    if (probs_.size() != n_states * n_actions * n_states)
        throw InvalidInput("transition kernel has " + std::to_string(probs_.size()) + " entries, expected " +
                           std::to_string(n_states * n_actions * n_states));
    for (std::size_t s = 0; s < n_states; ++s)
        for (std::size_t a = 0; a < n_actions; ++a)
            check_simplex(row(s, a), "transition row (" + std::to_string(s) + "," + std::to_string(a) + ")");
}

TransitionKernel TransitionKernel::uniform(std::size_t n_states, std::size_t n_actions) {
    return {n_states, n_actions, std::vector<double>(n_states * n_actions * n_states, 1.0 / double(n_states))};
}

Eigen::MatrixXd TransitionKernel::under_policy(const Table& action_probs) const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_states_, n_states_);
    for (std::size_t s = 0; s < n_states_; ++s)
        for (std::size_t a = 0; a < n_actions_; ++a) {
            const double w = action_probs(s, a);
            if (w == 0.0) continue;
            const auto r = row(s, a);
            for (std::size_t s2 = 0; s2 < n_states_; ++s2) p(s, s2) += w * r[s2];
        }
    return p;
}

double TransitionKernel::max_abs_diff(const TransitionKernel& other) const {
    if (other.n_states_ != n_states_ || other.n_actions_ != n_actions_)
        throw InvalidInput("kernel shapes differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) worst = std::max(worst, std::abs(probs_[i] - other.probs_[i]));
    return worst;
}

// ---------------------------------------------------------------------------
// TabularMdp

TabularMdp::TabularMdp(TransitionKernel transition, Table reward, Eigen::VectorXd mu0, double gamma)
    : transition_(std::move(transition)), reward_(std::move(reward)), mu0_(std::move(mu0)), gamma_(gamma) {
    const auto ns = transition_.n_states();
    const auto na = transition_.n_actions();
    if (ns == 0) throw InvalidInput("MDP needs a transition kernel");
    if (std::size_t(reward_.rows()) != ns || std::size_t(reward_.cols()) != na)
        throw InvalidInput("reward table shape does not match the kernel");
    if (std::size_t(mu0_.size()) != ns) throw InvalidInput("initial distribution has wrong length");
    check_simplex({mu0_.data(), ns}, "initial distribution");
    if (!(reward_.array() > 0.0).all() || !reward_.allFinite())
        throw InvalidInput("rewards must be finite and strictly positive");
    if (!(gamma_ > 0.0 && gamma_ < 1.0)) throw InvalidInput("discount must lie in (0,1)");
}

TabularMdp TabularMdp::with_transition(TransitionKernel transition) const {
    return {std::move(transition), reward_, mu0_, gamma_};
}

bool TabularMdp::operator==(const TabularMdp& other) const {
    return transition_ == other.transition_ && reward_ == other.reward_ && mu0_ == other.mu0_ &&
           gamma_ == other.gamma_;
}

// ---------------------------------------------------------------------------
// SoftmaxPolicy

SoftmaxPolicy::SoftmaxPolicy(Table logits) : logits_(std::move(logits)) {
    if (logits_.rows() == 0 || logits_.cols() == 0) throw InvalidInput("policy needs states and actions");
    if (!logits_.allFinite()) throw InvalidInput("policy logits must be finite");
    probs_.resize(logits_.rows(), logits_.cols());
    log_probs_.resize(logits_.rows(), logits_.cols());
    for (Eigen::Index s = 0; s < logits_.rows(); ++s) {
        const double m = logits_.row(s).maxCoeff();
        const double lse = m + std::log((logits_.row(s).array() - m).exp().sum());
        log_probs_.row(s) = logits_.row(s).array() - lse;
        probs_.row(s) = log_probs_.row(s).array().exp();
        probs_.row(s) /= probs_.row(s).sum();
    }
}

SoftmaxPolicy SoftmaxPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
    return SoftmaxPolicy(Table::Zero(n_states, n_actions));
}

SoftmaxPolicy SoftmaxPolicy::greedy(std::span<const std::size_t> actions, std::size_t n_actions, double sharpness) {
    Table logits = Table::Zero(actions.size(), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] >= n_actions) throw InvalidInput("greedy action out of range");
        logits(s, actions[s]) = sharpness;
    }
    return SoftmaxPolicy(std::move(logits));
}

// ---------------------------------------------------------------------------
// Trajectories

bool Trajectory::is_chained() const {
    for (std::size_t t = 0; t + 1 < steps.size(); ++t)
        if (steps[t].next_state != steps[t + 1].state) return false;
    return true;
}

double Trajectory::discounted_return(double gamma) const {
    double g = 0.0;
    double discount = 1.0;
    for (const auto& step : steps) {
        g += discount * step.reward;
        discount *= gamma;
    }
    return g;
}

double EnumeratedTrajectorySet::total_probability() const {
    double total = 0.0;
    for (const auto& e : entries) total += e.probability;
    return total;
}

double EnumeratedTrajectorySet::expected_return() const {
    double total = 0.0;
    for (const auto& e : entries) total += e.probability * e.discounted_return;
    return total;
}

// ---------------------------------------------------------------------------
// Evaluation

void validate_action_probs(const Table& action_probs, std::size_t n_states, std::size_t n_actions) {
    if (std::size_t(action_probs.rows()) != n_states || std::size_t(action_probs.cols()) != n_actions)
        throw InvalidInput("policy shape does not match the MDP");
    for (std::size_t s = 0; s < n_states; ++s)
        check_simplex({action_probs.data() + s * n_actions, n_actions}, "policy row " + std::to_string(s));
}

PolicyValues policy_evaluate_linear(const TabularMdp& mdp, const Table& action_probs) {
    check_shapes(mdp, action_probs);
    const auto ns = mdp.n_states();
    const Eigen::MatrixXd p_pi = mdp.transition().under_policy(action_probs);
    const Eigen::VectorXd r_pi = reward_under_policy(mdp.reward(), action_probs);
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(ns, ns) - mdp.gamma() * p_pi;
    Eigen::VectorXd v = system.partialPivLu().solve(r_pi);
    return q_from_v(mdp, std::move(v));
}

PolicyValues policy_evaluate_iterative(const TabularMdp& mdp, const Table& action_probs, double tol) {
    check_shapes(mdp, action_probs);
    if (!(tol > 0.0)) throw InvalidInput("tolerance must be positive");
    const Eigen::MatrixXd p_pi = mdp.transition().under_policy(action_probs);
    const Eigen::VectorXd r_pi = reward_under_policy(mdp.reward(), action_probs);
    const double gamma = mdp.gamma();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.n_states());
    // ||V_k - V*|| <= gamma/(1-gamma) ||V_k - V_{k-1}||
    for (;;) {
        Eigen::VectorXd next = r_pi + gamma * p_pi * v;
        const double delta = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (delta * gamma / (1.0 - gamma) < tol) break;
    }
    return q_from_v(mdp, std::move(v));
}

PolicyValues policy_evaluate(const TabularMdp& mdp, const Table& action_probs, double tol) {
    if (!(tol > 0.0)) throw InvalidInput("tolerance must be positive");
    if (mdp.n_states() * mdp.n_actions() <= kDirectSolveLimit) return policy_evaluate_linear(mdp, action_probs);
    return policy_evaluate_iterative(mdp, action_probs, tol);
}

PolicyValues policy_evaluate(const TabularMdp& mdp, const SoftmaxPolicy& policy, double tol) {
    return policy_evaluate(mdp, policy.probabilities(), tol);
}

double expected_return(const TabularMdp& mdp, const Table& action_probs) {
    return mdp.mu0().dot(policy_evaluate(mdp, action_probs).v);
}

double expected_return(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
    return expected_return(mdp, policy.probabilities());
}

std::vector<Eigen::VectorXd> forward_state_marginals(const TransitionKernel& dynamics, const Eigen::VectorXd& mu0,
                                                     const Table& action_probs, std::size_t horizon) {
    validate_action_probs(action_probs, dynamics.n_states(), dynamics.n_actions());
    const Eigen::MatrixXd p_pi_t = dynamics.under_policy(action_probs).transpose();
    std::vector<Eigen::VectorXd> marginals;
    marginals.reserve(horizon);
    Eigen::VectorXd rho = mu0;
    for (std::size_t t = 0; t < horizon; ++t) {
        marginals.push_back(rho);
        rho = p_pi_t * rho;
    }
    return marginals;
}

double truncated_return(const TabularMdp& mdp, const SoftmaxPolicy& policy, std::size_t horizon) {
    const auto marginals = forward_state_marginals(mdp.transition(), mdp.mu0(), policy.probabilities(), horizon);
    const Eigen::VectorXd r_pi = reward_under_policy(mdp.reward(), policy.probabilities());
    double total = 0.0;
    double discount = 1.0;
    for (const auto& rho : marginals) {
        total += discount * rho.dot(r_pi);
        discount *= mdp.gamma();
    }
    return total;
}

Eigen::VectorXd state_occupancy(const TabularMdp& mdp, const Table& action_probs, double tol) {
    check_shapes(mdp, action_probs);
    const auto ns = mdp.n_states();
    const Eigen::MatrixXd p_pi = mdp.transition().under_policy(action_probs);
    const double gamma = mdp.gamma();
    if (ns * mdp.n_actions() <= kDirectSolveLimit) {
        // d = (1-gamma) mu0 + gamma P_pi^T d
        const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(ns, ns) - gamma * p_pi.transpose();
        return (1.0 - gamma) * system.partialPivLu().solve(mdp.mu0());
    }
    Eigen::VectorXd d = mdp.mu0();
    for (;;) {
        Eigen::VectorXd next = (1.0 - gamma) * mdp.mu0() + gamma * p_pi.transpose() * d;
        const double delta = (next - d).lpNorm<1>();
        d = std::move(next);
        if (delta * gamma / (1.0 - gamma) < tol) break;
    }
    return d;
}

Table occupancy(const TabularMdp& mdp, const Table& action_probs, double tol) {
    const Eigen::VectorXd d_s = state_occupancy(mdp, action_probs, tol);
    Table d(mdp.n_states(), mdp.n_actions());
    for (std::size_t s = 0; s < mdp.n_states(); ++s) d.row(s) = d_s[s] * action_probs.row(s);
    return d;
}

Table occupancy(const TabularMdp& mdp, const SoftmaxPolicy& policy, double tol) {
    return occupancy(mdp, policy.probabilities(), tol);
}

// ---------------------------------------------------------------------------
// Sampling

Trajectory sample_trajectory_from(const TransitionKernel& dynamics, const Table& reward, std::size_t start,
                                  const SoftmaxPolicy& policy, std::size_t horizon, Rng& rng) {
    if (horizon == 0) throw InvalidInput("horizon must be at least 1");
    Trajectory traj;
    traj.steps.reserve(horizon);
    std::size_t s = start;
    for (std::size_t t = 0; t < horizon; ++t) {
        const std::size_t a = sample_categorical(policy.row(s), rng);
        const std::size_t next = sample_categorical(dynamics.row(s, a), rng);
        traj.steps.push_back({s, a, reward(s, a), next});
        s = next;
    }
    return traj;
}

Trajectory sample_trajectory(const TransitionKernel& dynamics, const Table& reward, const Eigen::VectorXd& mu0,
                             const SoftmaxPolicy& policy, std::size_t horizon, Rng& rng) {
    const std::size_t s0 = sample_categorical({mu0.data(), std::size_t(mu0.size())}, rng);
    return sample_trajectory_from(dynamics, reward, s0, policy, horizon, rng);
}

Trajectory sample_trajectory(const TransitionKernel& dynamics, const Table& reward, const Eigen::VectorXd& mu0,
                             const SoftmaxPolicy& policy, std::size_t horizon, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return sample_trajectory(dynamics, reward, mu0, policy, horizon, rng);
}

// ---------------------------------------------------------------------------
// Enumeration

double enumeration_size(std::size_t n_states, std::size_t n_actions, std::size_t horizon) {
    return double(n_states) * std::pow(double(n_states * n_actions), double(horizon));
}

void for_each_trajectory(const TransitionKernel& dynamics, const Table& reward, const Eigen::VectorXd& mu0,
                         const SoftmaxPolicy& policy, std::size_t horizon, const TrajectoryVisitor& visit) {
    const std::size_t ns = dynamics.n_states();
    const std::size_t na = dynamics.n_actions();
    if (enumeration_size(ns, na, horizon) > double(kEnumerationLimit))
        throw SizeError("trajectory enumeration would exceed " + std::to_string(kEnumerationLimit) + " entries");
    if (horizon == 0) throw InvalidInput("horizon must be at least 1");

    std::vector<Step> prefix(horizon);
    // Depth-first over (a_t, s_{t+1}) with the running prefix probability.
    std::function<void(std::size_t, std::size_t, double)> extend = [&](std::size_t t, std::size_t s, double prob) {
        for (std::size_t a = 0; a < na; ++a) {
            const double pa = prob * policy.prob(s, a);
            if (pa == 0.0) continue;
            const auto row = dynamics.row(s, a);
            for (std::size_t next = 0; next < ns; ++next) {
                if (row[next] == 0.0) continue;
                prefix[t] = {s, a, reward(s, a), next};
                const double p = pa * row[next];
                if (t + 1 == horizon)
                    visit(std::span<const Step>(prefix), p);
                else
                    extend(t + 1, next, p);
            }
        }
    };
    for (std::size_t s0 = 0; s0 < ns; ++s0)
        if (mu0[s0] > 0.0) extend(0, s0, mu0[s0]);
}

EnumeratedTrajectorySet enumerate_trajectories(const TransitionKernel& dynamics, const Table& reward,
                                               const Eigen::VectorXd& mu0, const SoftmaxPolicy& policy,
                                               double gamma, std::size_t horizon) {
    EnumeratedTrajectorySet set;
    set.horizon = horizon;
    set.tail_bound = tail_bound(gamma, horizon, reward.maxCoeff());
    for_each_trajectory(dynamics, reward, mu0, policy, horizon, [&](std::span<const Step> steps, double p) {
        Trajectory traj{{steps.begin(), steps.end()}};
        const double g = traj.discounted_return(gamma);
        set.entries.push_back({std::move(traj), p, g});
    });
    return set;
}

double trajectory_probability(std::span<const Step> steps, const TransitionKernel& dynamics,
                              const Eigen::VectorXd& mu0, const SoftmaxPolicy& policy) {
    if (steps.empty()) return 1.0;
    double p = mu0[steps.front().state];
    for (const auto& step : steps) p *= policy.prob(step.state, step.action) * dynamics(step.state, step.action, step.next_state);
    return p;
}

double tail_bound(double gamma, std::size_t horizon, double r_max) {
    return std::pow(gamma, double(horizon)) * r_max / (1.0 - gamma);
}

std::size_t horizon_for_tail(double gamma, double r_max, double tolerance) {
    if (!(tolerance > 0.0)) throw InvalidInput("tolerance must be positive");
    std::size_t h = 0;
    while (tail_bound(gamma, h, r_max) >= tolerance) ++h;
    return h;
}

double kl_policies(const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_b, std::span<const double> state_weights) {
    if (pi.n_states() != pi_b.n_states() || pi.n_actions() != pi_b.n_actions())
        throw InvalidInput("policies differ in shape");
    if (state_weights.size() != pi.n_states()) throw InvalidInput("state weights have wrong length");
    check_simplex(state_weights, "state weights");
    double kl = 0.0;
    for (std::size_t s = 0; s < pi.n_states(); ++s) {
        if (state_weights[s] == 0.0) continue;
        double row = 0.0;
        for (std::size_t a = 0; a < pi.n_actions(); ++a)
            row += pi.prob(s, a) * (pi.log_prob(s, a) - pi_b.log_prob(s, a));
        kl += state_weights[s] * row;
    }
    return kl;
}

Table deterministic_probs(std::span<const std::size_t> actions, std::size_t n_actions) {
    Table probs = Table::Zero(actions.size(), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) probs(s, actions[s]) = 1.0;
    return probs;
}

DeterministicOptimum exhaustive_optimum(const TabularMdp& mdp) {
    const std::size_t ns = mdp.n_states();
    const std::size_t na = mdp.n_actions();
    if (std::pow(double(na), double(ns)) > double(kEnumerationLimit))
        throw SizeError("too many deterministic policies to enumerate");
    std::vector<std::size_t> actions(ns, 0);
    DeterministicOptimum best{actions, -std::numeric_limits<double>::infinity()};
    for (;;) {
        const double j = expected_return(mdp, deterministic_probs(actions, na));
        if (j > best.expected_return) best = {actions, j};
        std::size_t i = 0;
        while (i < ns && ++actions[i] == na) actions[i++] = 0;
        if (i == ns) break;
    }
    return best;
}

}  // namespace sambo
