#include "sambo/sar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sambo {

std::string to_string(SarMode mode) {
    switch (mode) {
        case SarMode::Theoretical: return "theoretical";
        case SarMode::PracticalExact: return "practical_exact";
        case SarMode::PracticalClassifier: return "practical_classifier";
    }
    return "?";
}

SarMode sar_mode_from_string(const std::string& name) {
    if (name == "theoretical") return SarMode::Theoretical;
    if (name == "practical_exact" || name == "exact") return SarMode::PracticalExact;
    if (name == "practical_classifier" || name == "classifier") return SarMode::PracticalClassifier;
    throw InvalidInput("unknown SAR mode '" + name + "'");
}

void SarConfig::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InvalidInput("alpha and beta must be non-negative");
    if (!(floor > 0.0)) throw InvalidInput("reward floor must be positive");
    if (!(term_clamp > 0.0)) throw InvalidInput("term clamp must be positive");
    if (!std::isfinite(c)) throw InvalidInput("truncation coefficient must be finite");
}

double translate_reward(double r, double r_max, double r_min, const SarConfig& cfg) {
    if (r_max < r_min) throw InvalidInput("r_max must be at least r_min");
    return std::max(cfg.floor, r - cfg.c * (r_max - r_min) + 1e-8);
}

Table log_translated_rewards(const TabularMdp& mdp, const SarConfig& cfg) {
    const auto scale = RewardScale::of(mdp);
    Table out(mdp.n_states(), mdp.n_actions());
    for (Eigen::Index s = 0; s < out.rows(); ++s)
        for (Eigen::Index a = 0; a < out.cols(); ++a)
            out(s, a) = std::log(translate_reward(mdp.reward()(s, a), scale, cfg));
    return out;
}

double shift_weighting(std::span<const Step> steps, const TransitionKernel& p, const TransitionKernel& q,
                       const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_c) {
    double w = 1.0;
    for (const auto& st : steps) {
        const double pp = p(st.state, st.action, st.next_state);
        const double qq = q(st.state, st.action, st.next_state);
        const double a = pi.prob(st.state, st.action);
        const double ac = pi_c.prob(st.state, st.action);
        if ((pp == 0.0 && qq > 0.0) || (a == 0.0 && ac > 0.0))
            throw SupportViolation("true density vanishes where the data density does not");
        w *= (qq / pp) * (ac / a);
    }
    return w;
}

double theoretical_sar(std::size_t t, std::size_t s, std::size_t a, std::size_t next, const TransitionKernel& p,
                       const TransitionKernel& q, const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_c, double gamma,
                       double translated_r) {
    if (!(translated_r > 0.0)) throw InvalidInput("theoretical SAR needs a positive reward");
    const double pp = p(s, a, next);
    const double qq = q(s, a, next);
    if (pp == 0.0 && qq > 0.0) throw SupportViolation("true transition density is zero");
    if (qq == 0.0) throw SupportViolation("model transition density is zero");
    const double coeff = 1.0 / ((1.0 - gamma) * std::pow(gamma, double(t)));
    return std::log(translated_r) + coeff * (std::log(pp / qq) + pi.log_prob(s, a) - pi_c.log_prob(s, a));
}

double clamped_log_ratio(double p, double q, double limit) {
    if (p == 0.0 && q == 0.0) return 0.0;
    if (p == 0.0) return -limit;
    if (q == 0.0) return limit;
    return std::clamp(std::log(p / q), -limit, limit);
}

double practical_sar_exact(std::size_t s, std::size_t a, std::size_t next, double reward, const RewardScale& scale,
                           const TransitionKernel& p, const TransitionKernel& q, const SoftmaxPolicy& pi,
                           const SoftmaxPolicy& pi_c, const SarConfig& cfg) {
    double out = std::log(translate_reward(reward, scale, cfg));
    if (cfg.alpha != 0.0) out += cfg.alpha * clamped_log_ratio(p(s, a, next), q(s, a, next), cfg.term_clamp);
    if (cfg.beta != 0.0)
        out += cfg.beta * std::clamp(pi.log_prob(s, a) - pi_c.log_prob(s, a), -cfg.term_clamp, cfg.term_clamp);
    return out;
}

double practical_sar_classifier(const TransitionSample& sample, const TransitionClassifier& c_phi,
                                const ActionClassifier& c_psi, const RewardScale& scale, const SarConfig& cfg) {
    const double base = std::log(translate_reward(sample.reward, scale, cfg));
    if (sample.source == SampleSource::Model) {
        const double odds = std::clamp(c_phi.log_odds(sample.state, sample.action, sample.next_state),
                                       -cfg.term_clamp, cfg.term_clamp);
        return base + cfg.alpha * odds;
    }
    const double odds = std::clamp(c_psi.log_odds(sample.state, sample.action), -cfg.term_clamp, cfg.term_clamp);
    return base + cfg.beta * odds;
}

double kl_divergence(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInput("KL rows differ in length");
    double kl = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0) continue;
        if (b[i] == 0.0) return std::numeric_limits<double>::infinity();
        kl += a[i] * std::log(a[i] / b[i]);
    }
    return kl;
}

double expected_model_bias_objective(const Table& sa_distribution, const TabularMdp& env, const TransitionKernel& q,
                                     const SarConfig& cfg) {
    cfg.validate();
    const std::size_t ns = env.n_states(), na = env.n_actions();
    if (std::size_t(sa_distribution.rows()) != ns || std::size_t(sa_distribution.cols()) != na)
        throw InvalidInput("state-action distribution has the wrong shape");
    if (q.n_states() != ns || q.n_actions() != na) throw InvalidInput("model kernel has the wrong shape");
    const Table log_r = log_translated_rewards(env, cfg);
    double total = 0.0;
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a) {
            const double w = sa_distribution(s, a);
            if (w == 0.0) continue;
            // -KL(q||p) with each log-ratio clamped like the per-sample reward.
            double neg_kl = 0.0;
            for (std::size_t next = 0; next < ns; ++next) {
                const double qq = q(s, a, next);
                if (qq > 0.0) neg_kl += qq * clamped_log_ratio(env.transition()(s, a, next), qq, cfg.term_clamp);
            }
            total += w * (log_r(s, a) + cfg.alpha * neg_kl);
        }
    return total;
}

double expected_policy_shift_objective(std::span<const double> state_distribution, const TabularMdp& env,
                                       const SoftmaxPolicy& pi, const SoftmaxPolicy& pi_b, const SarConfig& cfg) {
    cfg.validate();
    const std::size_t ns = env.n_states(), na = env.n_actions();
    if (state_distribution.size() != ns) throw InvalidInput("state distribution has the wrong length");
    const Table log_r = log_translated_rewards(env, cfg);
    double total = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
        const double w = state_distribution[s];
        if (w == 0.0) continue;
        double value = 0.0;
        for (std::size_t a = 0; a < na; ++a) value += pi.prob(s, a) * log_r(s, a);
        total += w * (value + cfg.beta * kl_divergence(pi.row(s), pi_b.row(s)));
    }
    return total;
}

}  // namespace sambo
