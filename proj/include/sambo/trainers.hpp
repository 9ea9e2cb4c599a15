#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sambo/classifiers.hpp"
#include "sambo/mdp.hpp"
#include "sambo/model_learning.hpp"
#include "sambo/sar.hpp"

namespace sambo {

enum class RewardMode { Vanilla, Sar };
/// Behavior data of the policy-shift trainer: fresh episodes of pi_b every
/// update, or a fixed pool of them drawn once.
enum class StartMode { Exact, Dataset };

std::string to_string(RewardMode mode);
std::string to_string(StartMode mode);
StartMode start_mode_from_string(const std::string& name);

struct TrainConfig {
    std::size_t iterations = 200;
    /// Trajectories per policy-gradient update.
    std::size_t rollouts_per_update = 32;
    /// Episode length of policy-gradient trajectories.
    std::size_t horizon = 60;
    double learning_rate = 0.1;
    double entropy_coeff = 0.01;
    double real_ratio = 0.05;
    std::size_t batch_size = 256;
    std::size_t rollout_h = 5;
    std::size_t rollout_b = 100;
    std::uint64_t seed = 0;

    // Actor-critic loop.
    std::size_t policy_updates = 10;
    std::size_t classifier_steps = 200;
    double classifier_lr = 0.2;
    double critic_lr = 0.2;
    std::size_t ensemble_size = kDefaultEnsembleSize;
    double model_smoothing = kDefaultSmoothing;
    std::size_t model_buffer_capacity = 50'000;

    // Offline policy-shift trainer.
    StartMode start_mode = StartMode::Exact;
    std::size_t dataset_size = 10'000;

    void validate() const;
};

struct CurveRecord {
    double true_env_return = 0.0;
    double model_estimated_return = 0.0;
    double kl_to_behavior = 0.0;
    double mean_sar = 0.0;

    bool operator==(const CurveRecord&) const = default;
};

/// One record per policy update (policy-gradient trainers) or outer iteration (SAMBO).
struct TrainingCurve {
    std::vector<CurveRecord> records;

    std::size_t size() const { return records.size(); }
    const CurveRecord& back() const { return records.back(); }
    /// First index whose true return reaches `fraction` of the final one.
    std::size_t updates_to_fraction(double fraction) const;
    double mean_kl() const;

    bool operator==(const TrainingCurve&) const = default;
};

/// Per-coordinate mean and standard error of a Monte Carlo gradient on the logits.
struct GradientEstimate {
    Table mean;
    Table std_error;
};

using StepReward = std::function<double(const Step&)>;

/// Score-function estimate of grad_theta E[sum_{t<H} gamma^t r_t] from `n_traj`
/// trajectories started from `start`, using reward-to-go.
GradientEstimate estimate_policy_gradient(const TransitionKernel& dynamics, const Table& reward,
                                          const Eigen::VectorXd& start, const SoftmaxPolicy& policy, double gamma,
                                          std::size_t horizon, std::size_t n_traj, std::uint64_t seed);

/// Policy gradient on trajectories from `model_kernel`. SAR mode relabels with
/// practical_sar_exact (p = env kernel, q = model, pi_c = pi).
TrainingCurve train_pg_model_bias(const TabularMdp& env, const TransitionKernel& model_kernel, RewardMode mode,
                                  const SarConfig& sar, const TrainConfig& cfg);

/// Policy gradient on the offline objective E_{s~d^{p,pi_b}}[V^pi(s)] from
/// episodes of pi_b started at d^{p,pi_b}, starting at pi = pi_b. SAR mode adds
/// beta log(pi/pi_b) to the raw reward.
TrainingCurve train_pg_policy_shift(const TabularMdp& env, const SoftmaxPolicy& pi_b, RewardMode mode,
                                    const SarConfig& sar, const TrainConfig& cfg);

struct SamboResult {
    SoftmaxPolicy policy;
    TrainingCurve curve;
    std::size_t env_samples_consumed = 0;
    std::size_t model_samples_consumed = 0;
};

/// Model rollouts, classifier updates and an entropy-regularized tabular
/// actor-critic on classifier-relabeled rewards. `env_for_eval` is only used to
/// score the policy iterates.
SamboResult sambo_train(const ReplayBuffer& d_env, const TabularMdp& env_for_eval, const SarConfig& sar,
                        const TrainConfig& cfg);

}  // namespace sambo
