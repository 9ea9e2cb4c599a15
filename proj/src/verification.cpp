#include "sambo/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "sambo/parallel.hpp"

namespace sambo {

namespace {

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

template <class Range>
std::string join(const Range& values) {
    std::string out = "[";
    bool first = true;
    for (double v : values) {
        if (!first) out += ',';
        out += format_double(v);
        first = false;
    }
    return out + "]";
}

void check_same_shape(const TabularMdp& mdp, const TransitionKernel& q, const SoftmaxPolicy& pi,
                      const SoftmaxPolicy& pi_c) {
    const auto ns = mdp.n_states(), na = mdp.n_actions();
    if (q.n_states() != ns || q.n_actions() != na) throw InvalidInput("model kernel does not match the MDP");
    for (const auto* p : {&pi, &pi_c})
        if (p->n_states() != ns || p->n_actions() != na) throw InvalidInput("policy does not match the MDP");
}

double exponential(Rng& rng) { return std::exponential_distribution<double>(1.0)(rng); }

}  // namespace

void VerificationReport::settle() {
    passed = kind == CheckKind::Inequality ? worst_margin >= -tolerance : std::abs(worst_margin) <= tolerance;
}

void VerificationReport::merge(const VerificationReport& other) {
    const bool other_worse = instances_run == 0 || (kind == CheckKind::Inequality
                                                        ? other.worst_margin < worst_margin
                                                        : std::abs(other.worst_margin) > std::abs(worst_margin));
    if (other_worse) {
        worst_margin = other.worst_margin;
        worst_instance = other.worst_instance;
    }
    instances_run += other.instances_run;
    settle();
}

std::string VerificationReport::to_record() const {
    return "check=" + check_name + " instances=" + std::to_string(instances_run) +
           " worst_margin=" + format_double(worst_margin) + " tolerance=" + format_double(tolerance) +
           " passed=" + (passed ? "1" : "0");
}

VerificationReport check_theorem1(const TabularMdp& mdp, const TransitionKernel& q_kernel, const SoftmaxPolicy& pi,
                                  const SoftmaxPolicy& pi_c, std::size_t horizon, double tolerance,
                                  Theorem1Route route) {
    check_same_shape(mdp, q_kernel, pi, pi_c);
    if (horizon == 0) throw InvalidInput("horizon must be at least 1");
    const auto& p = mdp.transition();
    const double gamma = mdp.gamma();
    const auto ns = mdp.n_states(), na = mdp.n_actions();
    if (route == Theorem1Route::Auto)
        route = enumeration_size(ns, na, horizon) <= double(kEnumerationLimit) ? Theorem1Route::Enumeration
                                                                               : Theorem1Route::Marginals;

    double expected_r = 0.0;
    double expected_sar = 0.0;
    if (route == Theorem1Route::Enumeration) {
        for_each_trajectory(p, mdp.reward(), mdp.mu0(), pi, horizon, [&](std::span<const Step> steps, double prob) {
            double ret = 0.0, discount = 1.0;
            for (const auto& st : steps) {
                ret += discount * st.reward;
                discount *= gamma;
            }
            expected_r += prob * ret;
        });
        for_each_trajectory(q_kernel, mdp.reward(), mdp.mu0(), pi_c, horizon,
                            [&](std::span<const Step> steps, double prob) {
                                double total = 0.0, discount = 1.0;
                                for (std::size_t t = 0; t < steps.size(); ++t) {
                                    const auto& st = steps[t];
                                    total += discount * theoretical_sar(t, st.state, st.action, st.next_state, p,
                                                                        q_kernel, pi, pi_c, gamma, st.reward);
                                    discount *= gamma;
                                }
                                expected_sar += prob * total;
                            });
    } else {
        expected_r = truncated_return(mdp, pi, horizon);
        // gamma^t * sar_t = gamma^t log r + (log p/q + log pi/pi_c) / (1-gamma); the per-step
        // expectation only needs the state marginal at t.
        std::vector<double> log_r_pi(ns, 0.0), adjustment(ns, 0.0);
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) {
                const double w = pi_c.prob(s, a);
                log_r_pi[s] += w * std::log(mdp.reward()(s, a));
                double model_term = 0.0;
                for (std::size_t next = 0; next < ns; ++next) {
                    const double qq = q_kernel(s, a, next);
                    if (qq == 0.0) continue;
                    const double pp = p(s, a, next);
                    if (pp == 0.0) throw SupportViolation("true transition density is zero on model support");
                    model_term += qq * std::log(pp / qq);
                }
                adjustment[s] += w * (model_term + pi.log_prob(s, a) - pi_c.log_prob(s, a));
            }
        const auto marginals = forward_state_marginals(q_kernel, mdp.mu0(), pi_c.probabilities(), horizon);
        double discount = 1.0;
        for (const auto& rho : marginals) {
            for (std::size_t s = 0; s < ns; ++s)
                expected_sar += rho[s] * (discount * log_r_pi[s] + adjustment[s] / (1.0 - gamma));
            discount *= gamma;
        }
    }

    VerificationReport report;
    report.check_name = "theorem1";
    report.kind = CheckKind::Inequality;
    report.instances_run = 1;
    report.tolerance = tolerance;
    report.worst_margin = std::log(expected_r) - (1.0 - gamma) * expected_sar;
    report.worst_instance = describe_instance(mdp, q_kernel, pi, pi_c) + " H=" + std::to_string(horizon);
    report.settle();
    return report;
}

VerificationReport check_is_identity(const TabularMdp& mdp, const TransitionKernel& q_kernel,
                                     const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_c, std::size_t horizon,
                                     double tolerance) {
    check_same_shape(mdp, q_kernel, pi, pi_c);
    const auto& p = mdp.transition();
    const auto ns = mdp.n_states(), na = mdp.n_actions();
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a) {
            if (pi.prob(s, a) > 0.0 && pi_c.prob(s, a) == 0.0)
                throw SupportViolation("policy support exceeds data-collection policy support");
            for (std::size_t next = 0; next < ns; ++next)
                if (p(s, a, next) > 0.0 && q_kernel(s, a, next) == 0.0)
                    throw SupportViolation("environment support exceeds model support");
        }
    const double gamma = mdp.gamma();
    auto discounted = [gamma](std::span<const Step> steps) {
        double ret = 0.0, discount = 1.0;
        for (const auto& st : steps) {
            ret += discount * st.reward;
            discount *= gamma;
        }
        return ret;
    };

    double weighted = 0.0;
    for_each_trajectory(q_kernel, mdp.reward(), mdp.mu0(), pi_c, horizon,
                        [&](std::span<const Step> steps, double prob) {
                            const double w = shift_weighting(steps, p, q_kernel, pi, pi_c);
                            weighted += prob * discounted(steps) / w;
                        });
    double direct = 0.0;
    for_each_trajectory(p, mdp.reward(), mdp.mu0(), pi, horizon,
                        [&](std::span<const Step> steps, double prob) { direct += prob * discounted(steps); });

    VerificationReport report;
    report.check_name = "is_identity";
    report.kind = CheckKind::Identity;
    report.instances_run = 1;
    report.tolerance = tolerance;
    report.worst_margin = std::abs(weighted - direct);
    report.worst_instance = describe_instance(mdp, q_kernel, pi, pi_c) + " H=" + std::to_string(horizon);
    report.settle();
    return report;
}

VerificationReport check_kl_forms(const TabularMdp& mdp, const TransitionKernel& q_kernel, const SoftmaxPolicy& pi,
                                  const SoftmaxPolicy& pi_b, double alpha, double beta, double tolerance) {
    check_same_shape(mdp, q_kernel, pi, pi_b);
    const auto& p = mdp.transition();
    const auto ns = mdp.n_states(), na = mdp.n_actions();
    double worst = 0.0;
    std::size_t rows = 0;
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            double expectation = 0.0, cross = 0.0, entropy = 0.0;
            for (std::size_t next = 0; next < ns; ++next) {
                const double qq = q_kernel(s, a, next);
                if (qq == 0.0) continue;
                expectation += qq * alpha * std::log(p(s, a, next) / qq);
                cross -= qq * std::log(p(s, a, next));
                entropy -= qq * std::log(qq);
            }
            const double kl = cross - entropy;
            // The model term can never be positive and the policy term never negative.
            if (expectation > 1e-15 || kl < -1e-15) worst = std::numeric_limits<double>::infinity();
            worst = std::max(worst, std::abs(expectation + alpha * kl));
            ++rows;
        }
        double bonus = 0.0;
        for (std::size_t a = 0; a < na; ++a) bonus += pi.prob(s, a) * beta * (pi.log_prob(s, a) - pi_b.log_prob(s, a));
        if (bonus < -1e-15) worst = std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(bonus - beta * kl_divergence(pi.row(s), pi_b.row(s))));
        ++rows;
    }
    VerificationReport report;
    report.check_name = "kl_forms";
    report.kind = CheckKind::Identity;
    report.instances_run = rows;
    report.tolerance = tolerance;
    report.worst_margin = worst;
    report.worst_instance = describe_instance(mdp, q_kernel, pi, pi_b);
    report.settle();
    return report;
}

ClassifierCheckResult check_classifier_oracle(const TransitionKernel& p_kernel, const TransitionKernel& q_kernel,
                                              const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_b,
                                              double tolerance, const ClassifierCheckOptions& options) {
    const auto ns = p_kernel.n_states(), na = p_kernel.n_actions();
    if (q_kernel.n_states() != ns || q_kernel.n_actions() != na) throw InvalidInput("kernels differ in shape");
    for (const auto* policy : {&pi, &pi_b})
        if (policy->n_states() != ns || policy->n_actions() != na) throw InvalidInput("policy shape mismatch");
    if (options.n_env == 0 || options.n_model == 0 || options.n_policy == 0)
        throw InvalidInput("classifier check needs non-empty datasets");

    auto generate = [&](BufferTag tag, const TransitionKernel& dynamics, const SoftmaxPolicy& actor,
                        SampleSource source, std::size_t n, std::uint64_t stream) {
        ReplayBuffer buffer(tag);
        Rng rng = make_rng(options.seed, stream);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t s = uniform_index(ns, rng);
            const std::size_t a = sample_categorical(actor.row(s), rng);
            const std::size_t next = sample_categorical(dynamics.row(s, a), rng);
            buffer.add({s, a, 1.0, next, source});
        }
        return buffer;
    };
    const auto d_env = generate(BufferTag::Env, p_kernel, pi_b, SampleSource::Env, options.n_env, 1);
    const auto d_m = generate(BufferTag::Model, q_kernel, pi_b, SampleSource::Model, options.n_model, 2);
    const auto d_pi = generate(BufferTag::Policy, p_kernel, pi, SampleSource::Model, options.n_policy, 3);

    ClassifierTrainConfig cfg = options.train;
    cfg.seed = mix_seed(options.seed, 4);
    const auto c_phi = train_transition_classifier(d_env, d_m, ns, na, cfg);
    cfg.seed = mix_seed(options.seed, 5);
    const auto c_psi = train_action_classifier(d_pi, d_env, ns, na, cfg);

    ClassifierCheckResult out;
    {
        const auto n1 = transition_counts(d_env, ns, na), n2 = transition_counts(d_m, ns, na);
        const double size_term = std::log(double(options.n_env) / double(options.n_model));
        double err = 0.0;
        std::size_t cells = 0;
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a)
                for (std::size_t next = 0; next < ns; ++next) {
                    const std::size_t c = c_phi.cell(s, a, next);
                    if (n1[c] + n2[c] < double(options.min_visits)) continue;
                    const double target = std::log(p_kernel(s, a, next) / q_kernel(s, a, next)) + size_term;
                    err += std::abs(c_phi.log_odds(s, a, next) - target);
                    ++cells;
                }
        auto& r = out.transition;
        r.check_name = "classifier_transition";
        r.kind = CheckKind::Identity;
        r.instances_run = 1;
        r.tolerance = tolerance;
        r.worst_margin = cells ? err / double(cells) : 0.0;
        r.worst_instance = "cells=" + std::to_string(cells) + " p=" + join(p_kernel.data()) +
                           " q=" + join(q_kernel.data());
        r.settle();
    }
    {
        const auto n1 = state_action_counts(d_pi, ns, na), n2 = state_action_counts(d_env, ns, na);
        const double size_term = std::log(double(options.n_policy) / double(options.n_env));
        double err = 0.0;
        std::size_t cells = 0;
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) {
                const std::size_t c = c_psi.cell(s, a);
                if (n1[c] + n2[c] < double(options.min_visits)) continue;
                const double target = pi.log_prob(s, a) - pi_b.log_prob(s, a) + size_term;
                err += std::abs(c_psi.log_odds(s, a) - target);
                ++cells;
            }
        auto& r = out.action;
        r.check_name = "classifier_action";
        r.kind = CheckKind::Identity;
        r.instances_run = 1;
        r.tolerance = tolerance;
        r.worst_margin = cells ? err / double(cells) : 0.0;
        r.worst_instance = "cells=" + std::to_string(cells) + " pi=" + join(pi.logits().reshaped()) +
                           " pi_b=" + join(pi_b.logits().reshaped());
        r.settle();
    }
    return out;
}

TransitionKernel random_kernel(std::size_t n_states, std::size_t n_actions, Rng& rng, double uniform_mix) {
    if (!(uniform_mix >= 0.0 && uniform_mix <= 1.0)) throw InvalidInput("uniform mix must lie in [0,1]");
    std::vector<double> probs(n_states * n_actions * n_states);
    for (std::size_t r = 0; r < probs.size(); r += n_states) {
        double total = 0.0;
        for (std::size_t k = 0; k < n_states; ++k) total += probs[r + k] = exponential(rng) + 1e-12;
        for (std::size_t k = 0; k < n_states; ++k)
            probs[r + k] = (1.0 - uniform_mix) * probs[r + k] / total + uniform_mix / double(n_states);
        // Exact renormalization keeps rows inside the simplex tolerance.
        total = 0.0;
        for (std::size_t k = 0; k < n_states; ++k) total += probs[r + k];
        for (std::size_t k = 0; k < n_states; ++k) probs[r + k] /= total;
    }
    return {n_states, n_actions, std::move(probs)};
}

SoftmaxPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng, double scale) {
    std::normal_distribution<double> normal(0.0, scale);
    Table logits(n_states, n_actions);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = normal(rng);
    return SoftmaxPolicy(std::move(logits));
}

TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng, const SarConfig& sar) {
    auto kernel = random_kernel(n_states, n_actions, rng, 0.0);
    Table raw(n_states, n_actions);
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = uniform01(rng);
    Table reward(n_states, n_actions);
    for (Eigen::Index i = 0; i < raw.size(); ++i)
        reward.data()[i] = translate_reward(raw.data()[i], raw.maxCoeff(), raw.minCoeff(), sar);
    Eigen::VectorXd mu0(n_states);
    for (std::size_t s = 0; s < n_states; ++s) mu0[s] = exponential(rng) + 1e-12;
    mu0 /= mu0.sum();
    return {std::move(kernel), std::move(reward), std::move(mu0), gamma};
}

std::string describe_instance(const TabularMdp& mdp, const TransitionKernel& q, const SoftmaxPolicy& pi,
                              const SoftmaxPolicy& pi_c) {
    return "S=" + std::to_string(mdp.n_states()) + " A=" + std::to_string(mdp.n_actions()) +
           " gamma=" + format_double(mdp.gamma()) + " p=" + join(mdp.transition().data()) + " q=" + join(q.data()) +
           " r=" + join(mdp.reward().reshaped()) + " mu0=" + join(mdp.mu0()) +
           " pi=" + join(pi.logits().reshaped()) + " pi_c=" + join(pi_c.logits().reshaped());
}

namespace {

struct Instance {
    TabularMdp mdp;
    TransitionKernel q;
    SoftmaxPolicy pi;
    SoftmaxPolicy pi_c;
};

Instance make_instance(const SuiteOptions& options, std::size_t index) {
    Rng rng = make_rng(options.seed, index);
    const std::size_t ns = 1 + uniform_index(options.max_states, rng);
    auto mdp = random_mdp(ns, options.n_actions, options.gamma, rng);
    auto q = random_kernel(ns, options.n_actions, rng, 0.2);
    auto pi = random_policy(ns, options.n_actions, rng);
    auto pi_c = random_policy(ns, options.n_actions, rng);
    return {std::move(mdp), std::move(q), std::move(pi), std::move(pi_c)};
}

template <class Check>
VerificationReport run_suite(const std::string& name, CheckKind kind, double tolerance, const SuiteOptions& options,
                             Check&& check) {
    std::vector<VerificationReport> reports(options.instances);
    parallel_for(options.instances, options.threads, [&](std::size_t i) { reports[i] = check(i); });
    VerificationReport total;
    total.check_name = name;
    total.kind = kind;
    total.tolerance = tolerance;
    for (const auto& r : reports) total.merge(r);
    total.settle();
    return total;
}

}  // namespace

VerificationReport theorem1_suite(const SuiteOptions& options, double tolerance) {
    return run_suite("theorem1", CheckKind::Inequality, tolerance, options, [&](std::size_t i) {
        const auto inst = make_instance(options, i);
        const std::size_t h = horizon_for_tail(inst.mdp.gamma(), inst.mdp.reward_max(), tolerance / 10.0);
        return check_theorem1(inst.mdp, inst.q, inst.pi, inst.pi_c, h, tolerance);
    });
}

VerificationReport is_identity_suite(const SuiteOptions& options, double tolerance, std::size_t max_entries) {
    return run_suite("is_identity", CheckKind::Identity, tolerance, options, [&](std::size_t i) {
        const auto inst = make_instance(options, i);
        std::size_t h = 1;
        while (enumeration_size(inst.mdp.n_states(), inst.mdp.n_actions(), h + 1) <= double(max_entries)) ++h;
        return check_is_identity(inst.mdp, inst.q, inst.pi, inst.pi_c, h, tolerance);
    });
}

VerificationReport kl_forms_suite(const SuiteOptions& options, double tolerance) {
    VerificationReport total;
    total.check_name = "kl_forms";
    total.kind = CheckKind::Identity;
    total.tolerance = tolerance;
    Rng alpha_rng = make_rng(options.seed, ~std::uint64_t{0});
    for (std::size_t i = 0; total.instances_run < options.instances; ++i) {
        const auto inst = make_instance(options, i);
        const double alpha = uniform01(alpha_rng), beta = uniform01(alpha_rng);
        total.merge(check_kl_forms(inst.mdp, inst.q, inst.pi, inst.pi_c, alpha, beta, tolerance));
    }
    total.settle();
    return total;
}

ClassifierCheckResult classifier_suite(const SuiteOptions& options, double tolerance,
                                       const ClassifierCheckOptions& check) {
    std::vector<ClassifierCheckResult> results(options.instances);
    parallel_for(options.instances, options.threads, [&](std::size_t i) {
        Rng rng = make_rng(options.seed, i);
        const std::size_t ns = options.max_states;
        const auto p = random_kernel(ns, options.n_actions, rng, 0.2);
        const auto q = random_kernel(ns, options.n_actions, rng, 0.2);
        const auto pi = random_policy(ns, options.n_actions, rng);
        const auto pi_b = random_policy(ns, options.n_actions, rng);
        ClassifierCheckOptions local = check;
        local.seed = mix_seed(options.seed, i);
        results[i] = check_classifier_oracle(p, q, pi, pi_b, tolerance, local);
    });
    ClassifierCheckResult total;
    total.transition = {"classifier_transition", 0, 0.0, tolerance, false, CheckKind::Identity, {}};
    total.action = {"classifier_action", 0, 0.0, tolerance, false, CheckKind::Identity, {}};
    for (const auto& r : results) {
        total.transition.merge(r.transition);
        total.action.merge(r.action);
    }
    total.transition.settle();
    total.action.settle();
    return total;
}

}  // namespace sambo
