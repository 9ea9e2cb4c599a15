#pragma once

#include <span>
#include <string>

#include "sambo/classifiers.hpp"
#include "sambo/mdp.hpp"
#include "sambo/model_learning.hpp"

namespace sambo {

enum class SarMode { Theoretical, PracticalExact, PracticalClassifier };

std::string to_string(SarMode mode);
SarMode sar_mode_from_string(const std::string& name);

struct SarConfig {
    double alpha = 0.01;
    double beta = 0.01;
    /// Truncation coefficient; the reward is shifted by -c (r_max - r_min).
    double c = -0.2;
    double floor = 1e-8;
    /// Bound on every log-ratio term before it is scaled by alpha or beta.
    double term_clamp = 10.0;
    SarMode mode = SarMode::PracticalExact;

    void validate() const;
};

struct RewardScale {
    double r_max = 1.0;
    double r_min = 0.0;

    static RewardScale of(const TabularMdp& mdp) { return {mdp.reward_max(), mdp.reward_min()}; }
};

/// max(floor, r - c (r_max - r_min) + 1e-8).
double translate_reward(double r, double r_max, double r_min, const SarConfig& cfg);
inline double translate_reward(double r, const RewardScale& scale, const SarConfig& cfg) {
    return translate_reward(r, scale.r_max, scale.r_min, cfg);
}

/// Table of log(translated r) over (s,a).
Table log_translated_rewards(const TabularMdp& mdp, const SarConfig& cfg);

/// prod_t q/p * pi_c/pi along the steps. Throws SupportViolation where p or pi
/// vanishes while q and pi_c do not.
double shift_weighting(std::span<const Step> steps, const TransitionKernel& p, const TransitionKernel& q,
                       const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_c);

/// log r + (log(p/q) + log(pi/pi_c)) / ((1-gamma) gamma^t), r already translated.
double theoretical_sar(std::size_t t, std::size_t s, std::size_t a, std::size_t next, const TransitionKernel& p,
                       const TransitionKernel& q, const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_c, double gamma,
                       double translated_r);

/// clamp(log(p/q), +-limit); an impossible environment transition maps to -limit.
double clamped_log_ratio(double p, double q, double limit);

/// log r' + alpha clamp(log p/q) + beta clamp(log pi/pi_c) with r' = translate(reward).
double practical_sar_exact(std::size_t s, std::size_t a, std::size_t next, double reward, const RewardScale& scale,
                           const TransitionKernel& p, const TransitionKernel& q, const SoftmaxPolicy& pi,
                           const SoftmaxPolicy& pi_c, const SarConfig& cfg);

/// Model samples: log r' + alpha log_odds(C_phi); environment samples: log r' + beta log_odds(C_psi).
double practical_sar_classifier(const TransitionSample& sample, const TransitionClassifier& c_phi,
                                const ActionClassifier& c_psi, const RewardScale& scale, const SarConfig& cfg);

/// KL(a || b) of two discrete rows.
double kl_divergence(std::span<const double> a, std::span<const double> b);

/// sum_{s,a} d(s,a) [log r'(s,a) - alpha KL(q(.|s,a) || p(.|s,a))], terms clamped as in practical_sar_exact.
double expected_model_bias_objective(const Table& sa_distribution, const TabularMdp& env, const TransitionKernel& q,
                                     const SarConfig& cfg);

/// sum_s d(s) [E_{a~pi} log r'(s,a) + beta KL(pi(.|s) || pi_b(.|s))].
double expected_policy_shift_objective(std::span<const double> state_distribution, const TabularMdp& env,
                                       const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_b, const SarConfig& cfg);

}  // namespace sambo
