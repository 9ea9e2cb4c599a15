#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "sambo/classifiers.hpp"
#include "sambo/mdp.hpp"
#include "sambo/sar.hpp"

namespace sambo {

enum class CheckKind { Inequality, Identity };

struct VerificationReport {
    std::string check_name;
    std::size_t instances_run = 0;
    /// Smallest margin for inequalities, largest absolute error for identities.
    double worst_margin = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    CheckKind kind = CheckKind::Identity;
    /// Serialized worst instance, for replay.
    std::string worst_instance;

    /// Recomputes `passed` from the margin and tolerance.
    void settle();
    /// Folds another report of the same check into this one.
    void merge(const VerificationReport& other);
    /// One-line `key=value` record.
    std::string to_record() const;
};

enum class Theorem1Route { Auto, Enumeration, Marginals };

/// log E_{p^pi}[R_H] against (1-gamma) E_{q^{pi_c}}[sum_t gamma^t theoretical_sar] at horizon H.
/// The enumeration route visits every trajectory; the marginal route sums the
/// same per-step expectations over exact forward state marginals.
VerificationReport check_theorem1(const TabularMdp& mdp, const TransitionKernel& q_kernel, const SoftmaxPolicy& pi,
                                  const SoftmaxPolicy& pi_c, std::size_t horizon, double tolerance,
                                  Theorem1Route route = Theorem1Route::Auto);

/// E_{q^{pi_c}}[(p^pi / q^{pi_c}) R_H] against E_{p^pi}[R_H], both by enumeration.
VerificationReport check_is_identity(const TabularMdp& mdp, const TransitionKernel& q_kernel,
                                     const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_c, std::size_t horizon,
                                     double tolerance = 1e-10);

/// Per-row E_q[alpha log p/q] = -alpha KL(q||p) and E_pi[beta log pi/pi_b] = beta KL(pi||pi_b).
VerificationReport check_kl_forms(const TabularMdp& mdp, const TransitionKernel& q_kernel, const SoftmaxPolicy& pi,
                                  const SoftmaxPolicy& pi_b, double alpha, double beta, double tolerance = 1e-12);

struct ClassifierCheckOptions {
    std::size_t n_env = 100'000;
    std::size_t n_model = 100'000;
    std::size_t n_policy = 100'000;
    std::size_t min_visits = 100;
    ClassifierTrainConfig train{4000, 0.2, 256, 10.0, 1.0, 0};
    std::uint64_t seed = 0;
};

struct ClassifierCheckResult {
    VerificationReport transition;
    VerificationReport action;
};

/// Samples (s,a) from uniform states and pi_b, then D_env with p and D_m with q;
/// D_pi draws actions from pi instead. Trained log-odds are compared with the
/// analytic log-ratios plus the dataset-size constants on well-visited cells.
ClassifierCheckResult check_classifier_oracle(const TransitionKernel& p_kernel, const TransitionKernel& q_kernel,
                                              const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_b,
                                              double tolerance, const ClassifierCheckOptions& options = {});

// Random instances.
TransitionKernel random_kernel(std::size_t n_states, std::size_t n_actions, Rng& rng, double uniform_mix = 0.2);
SoftmaxPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng, double scale = 1.0);
/// Random dynamics and mu0, uniform raw rewards in [0,1] translated with `sar`.
TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng,
                      const SarConfig& sar = {});

std::string describe_instance(const TabularMdp& mdp, const TransitionKernel& q, const SoftmaxPolicy& pi,
                              const SoftmaxPolicy& pi_c);

struct SuiteOptions {
    std::size_t instances = 100;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::size_t max_states = 4;
    std::size_t n_actions = 2;
    double gamma = 0.9;
};

/// Lower-bound check on random instances with H the smallest horizon whose tail bound is below tolerance/10.
VerificationReport theorem1_suite(const SuiteOptions& options, double tolerance = 1e-6);
/// IS identity on random instances at the largest horizon keeping enumeration under `max_entries`.
VerificationReport is_identity_suite(const SuiteOptions& options, double tolerance = 1e-10,
                                     std::size_t max_entries = 200'000);
/// KL forms on `options.instances` random rows of each kind.
VerificationReport kl_forms_suite(const SuiteOptions& options, double tolerance = 1e-12);
/// Classifier identity on one random instance per entry of `options.instances`.
ClassifierCheckResult classifier_suite(const SuiteOptions& options, double tolerance = 0.05,
                                       const ClassifierCheckOptions& check = {});

}  // namespace sambo
