#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sambo/random.hpp"

namespace sambo {

class InvalidInput : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an exact oracle would exceed its desk-scale budget.
class SizeError : public std::length_error {
  public:
    using std::length_error::length_error;
};

/// A trajectory has positive probability under the data distribution but zero
/// probability under the true one, so a density ratio is undefined.
class SupportViolation : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Row-major so that per-state rows are contiguous spans.
using Table = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kSimplexTolerance = 1e-12;

/// Dense transition tensor P[s][a][s'].
class TransitionKernel {
  public:
    TransitionKernel() = default;
    TransitionKernel(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);

    static TransitionKernel uniform(std::size_t n_states, std::size_t n_actions);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }

    double operator()(std::size_t s, std::size_t a, std::size_t next) const {
        return probs_[index(s, a) + next];
    }
    std::span<const double> row(std::size_t s, std::size_t a) const {
        return {probs_.data() + index(s, a), n_states_};
    }
    const std::vector<double>& data() const { return probs_; }

    /// State-to-state matrix P_pi[s][s'] = sum_a pi(a|s) P[s][a][s'].
    Eigen::MatrixXd under_policy(const Table& action_probs) const;

    /// Largest absolute entry difference; kernels must share shape.
    double max_abs_diff(const TransitionKernel& other) const;

    bool operator==(const TransitionKernel&) const = default;

  private:
    std::size_t index(std::size_t s, std::size_t a) const { return (s * n_actions_ + a) * n_states_; }

    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    std::vector<double> probs_;
};

/// Finite discounted MDP with strictly positive rewards.
class TabularMdp {
  public:
    TabularMdp(TransitionKernel transition, Table reward, Eigen::VectorXd mu0, double gamma);

    std::size_t n_states() const { return transition_.n_states(); }
    std::size_t n_actions() const { return transition_.n_actions(); }
    const TransitionKernel& transition() const { return transition_; }
    const Table& reward() const { return reward_; }
    const Eigen::VectorXd& mu0() const { return mu0_; }
    double gamma() const { return gamma_; }
    double reward_max() const { return reward_.maxCoeff(); }
    double reward_min() const { return reward_.minCoeff(); }

    /// Same rewards, initial distribution and discount under different dynamics.
    TabularMdp with_transition(TransitionKernel transition) const;

    bool operator==(const TabularMdp& other) const;

  private:
    TransitionKernel transition_;
    Table reward_;
    Eigen::VectorXd mu0_;
    double gamma_;
};

/// pi(a|s) = softmax(logits[s][.]); full support by construction.
class SoftmaxPolicy {
  public:
    explicit SoftmaxPolicy(Table logits);

    static SoftmaxPolicy uniform(std::size_t n_states, std::size_t n_actions);
    /// Near-one-hot policy choosing actions[s] with logit gap `sharpness`.
    static SoftmaxPolicy greedy(std::span<const std::size_t> actions, std::size_t n_actions,
                                double sharpness = 30.0);

    std::size_t n_states() const { return logits_.rows(); }
    std::size_t n_actions() const { return logits_.cols(); }
    const Table& logits() const { return logits_; }
    const Table& probabilities() const { return probs_; }
    double prob(std::size_t s, std::size_t a) const { return probs_(s, a); }
    double log_prob(std::size_t s, std::size_t a) const { return log_probs_(s, a); }
    std::span<const double> row(std::size_t s) const { return {probs_.data() + s * n_actions(), n_actions()}; }

  private:
    Table logits_;
    Table probs_;
    Table log_probs_;
};

struct Step {
    std::size_t state = 0;
    std::size_t action = 0;
    double reward = 0.0;
    std::size_t next_state = 0;

    bool operator==(const Step&) const = default;
};

struct Trajectory {
    std::vector<Step> steps;

    std::size_t horizon() const { return steps.size(); }
    /// next_state of step t equals state of step t+1.
    bool is_chained() const;
    double discounted_return(double gamma) const;

    bool operator==(const Trajectory&) const = default;
};

struct EnumeratedEntry {
    Trajectory trajectory;
    double probability = 0.0;
    double discounted_return = 0.0;
};

struct EnumeratedTrajectorySet {
    std::vector<EnumeratedEntry> entries;
    std::size_t horizon = 0;
    double tail_bound = 0.0;

    double total_probability() const;
    double expected_return() const;
};

struct PolicyValues {
    Eigen::VectorXd v;
    Table q;
};

inline constexpr std::size_t kEnumerationLimit = 10'000'000;
inline constexpr std::size_t kDirectSolveLimit = 10'000;

/// Checks a probability table over actions (rows sum to one, entries >= 0).
void validate_action_probs(const Table& action_probs, std::size_t n_states, std::size_t n_actions);

/// V and Q of a stochastic action-probability table; direct solve for small problems.
PolicyValues policy_evaluate(const TabularMdp& mdp, const Table& action_probs, double tol = 1e-10);
PolicyValues policy_evaluate(const TabularMdp& mdp, const SoftmaxPolicy& policy, double tol = 1e-10);
/// Solves (I - gamma P_pi) V = r_pi.
PolicyValues policy_evaluate_linear(const TabularMdp& mdp, const Table& action_probs);
/// Bellman evaluation iterates until the sup-norm error bound drops below tol.
PolicyValues policy_evaluate_iterative(const TabularMdp& mdp, const Table& action_probs, double tol);

double expected_return(const TabularMdp& mdp, const Table& action_probs);
double expected_return(const TabularMdp& mdp, const SoftmaxPolicy& policy);

/// Expected discounted return over the first `horizon` steps, computed exactly.
double truncated_return(const TabularMdp& mdp, const SoftmaxPolicy& policy, std::size_t horizon);

/// State distributions rho_0..rho_{horizon-1} of the chain under the policy.
std::vector<Eigen::VectorXd> forward_state_marginals(const TransitionKernel& dynamics,
                                                     const Eigen::VectorXd& mu0,
                                                     const Table& action_probs, std::size_t horizon);

/// (1-gamma)-normalized discounted state-action visitation d[s][a].
Table occupancy(const TabularMdp& mdp, const SoftmaxPolicy& policy, double tol = 1e-12);
Table occupancy(const TabularMdp& mdp, const Table& action_probs, double tol = 1e-12);
/// Marginal of `occupancy` over actions.
Eigen::VectorXd state_occupancy(const TabularMdp& mdp, const Table& action_probs, double tol = 1e-12);

Trajectory sample_trajectory(const TransitionKernel& dynamics, const Table& reward, const Eigen::VectorXd& mu0,
                             const SoftmaxPolicy& policy, std::size_t horizon, std::uint64_t seed);
Trajectory sample_trajectory(const TransitionKernel& dynamics, const Table& reward, const Eigen::VectorXd& mu0,
                             const SoftmaxPolicy& policy, std::size_t horizon, Rng& rng);
/// Same as above with the initial state fixed.
Trajectory sample_trajectory_from(const TransitionKernel& dynamics, const Table& reward, std::size_t start,
                                  const SoftmaxPolicy& policy, std::size_t horizon, Rng& rng);

/// Upper bound on the number of length-`horizon` trajectories.
double enumeration_size(std::size_t n_states, std::size_t n_actions, std::size_t horizon);

using TrajectoryVisitor = std::function<void(std::span<const Step>, double probability)>;

/// Visits every positive-probability length-`horizon` trajectory with its probability.
/// Throws SizeError when the trajectory count could exceed kEnumerationLimit.
void for_each_trajectory(const TransitionKernel& dynamics, const Table& reward, const Eigen::VectorXd& mu0,
                         const SoftmaxPolicy& policy, std::size_t horizon, const TrajectoryVisitor& visit);

EnumeratedTrajectorySet enumerate_trajectories(const TransitionKernel& dynamics, const Table& reward,
                                               const Eigen::VectorXd& mu0, const SoftmaxPolicy& policy,
                                               double gamma, std::size_t horizon);

/// mu0(s_0) * prod_t pi(a_t|s_t) P(s_{t+1}|s_t,a_t).
double trajectory_probability(std::span<const Step> steps, const TransitionKernel& dynamics,
                              const Eigen::VectorXd& mu0, const SoftmaxPolicy& policy);

/// gamma^H * r_max / (1 - gamma).
double tail_bound(double gamma, std::size_t horizon, double r_max);
/// Smallest H with tail_bound(gamma, H, r_max) < tolerance.
std::size_t horizon_for_tail(double gamma, double r_max, double tolerance = 1e-6);

/// sum_s w(s) KL(pi(.|s) || pi_b(.|s)).
double kl_policies(const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_b, std::span<const double> state_weights);

struct DeterministicOptimum {
    std::vector<std::size_t> actions;
    double expected_return = 0.0;
};

/// Best deterministic policy by evaluating all A^S of them (guarded by kEnumerationLimit).
DeterministicOptimum exhaustive_optimum(const TabularMdp& mdp);

/// Action-probability table of a deterministic policy.
Table deterministic_probs(std::span<const std::size_t> actions, std::size_t n_actions);

}  // namespace sambo
