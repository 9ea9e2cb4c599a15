#include "sambo/trainers.hpp"

#include <algorithm>
#include <cmath>

namespace sambo {

std::string to_string(RewardMode mode) { return mode == RewardMode::Vanilla ? "vanilla" : "sar"; }

std::string to_string(StartMode mode) { return mode == StartMode::Exact ? "exact" : "dataset"; }

StartMode start_mode_from_string(const std::string& name) {
    if (name == "exact") return StartMode::Exact;
    if (name == "dataset") return StartMode::Dataset;
    throw InvalidInput("unknown start mode '" + name + "'");
}

void TrainConfig::validate() const {
    if (iterations == 0 || rollouts_per_update == 0 || horizon == 0 || batch_size == 0 || rollout_h == 0 ||
        rollout_b == 0 || policy_updates == 0 || classifier_steps == 0 || ensemble_size == 0 ||
        model_buffer_capacity == 0 || dataset_size == 0)
        throw InvalidInput("train counts must be at least 1");
    if (!(real_ratio >= 0.0 && real_ratio <= 1.0)) throw InvalidInput("real_ratio must lie in [0,1]");
    if (!(learning_rate >= 0.0) || !(critic_lr >= 0.0) || !(classifier_lr > 0.0)) throw InvalidInput("learning rates must be non-negative");
    if (!(entropy_coeff >= 0.0)) throw InvalidInput("entropy coefficient must be non-negative");
    if (!(model_smoothing > 0.0)) throw InvalidInput("model smoothing must be positive");
}

std::size_t TrainingCurve::updates_to_fraction(double fraction) const {
    if (records.empty()) throw InvalidInput("empty training curve");
    const double final_value = records.back().true_env_return;
    const double threshold = final_value - (1.0 - fraction) * std::abs(final_value);
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].true_env_return >= threshold) return i;
    return records.size() - 1;
}

double TrainingCurve::mean_kl() const {
    if (records.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : records) total += r.kl_to_behavior;
    return total / double(records.size());
}

namespace {

enum SeedTag : std::uint64_t { kTagTrajectories = 1, kTagDataset, kTagEnsemble, kTagRollout, kTagBatch, kTagClassifier };

/// Adds sum_t gamma^t (G_t - b_t) grad log pi(a_t|s_t) into `grad`; returns the reward-to-go values.
void accumulate_score_gradient(const std::vector<Step>& steps, const std::vector<double>& rewards,
                               const SoftmaxPolicy& pi, double gamma, const std::vector<double>* baseline,
                               Table& grad, std::vector<double>& to_go) {
    const std::size_t h = steps.size();
    to_go.assign(h, 0.0);
    double g = 0.0;
    for (std::size_t t = h; t-- > 0;) {
        g = rewards[t] + gamma * g;
        to_go[t] = g;
    }
    double discount = 1.0;
    for (std::size_t t = 0; t < h; ++t) {
        const double adv = to_go[t] - (baseline ? (*baseline)[t] : 0.0);
        const std::size_t s = steps[t].state;
        for (std::size_t a = 0; a < pi.n_actions(); ++a)
            grad(s, a) += discount * adv * ((a == steps[t].action ? 1.0 : 0.0) - pi.prob(s, a));
        discount *= gamma;
    }
}

class Adam {
  public:
    Adam(Eigen::Index rows, Eigen::Index cols) : m_(Table::Zero(rows, cols)), v_(Table::Zero(rows, cols)) {}

    /// Ascent step on `params`.
    void step(Table& params, const Table& grad, double lr) {
        ++t_;
        m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
        v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(kBeta1, double(t_));
        const double c2 = 1.0 - std::pow(kBeta2, double(t_));
        params.array() += lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + 1e-8);
    }

  private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    Table m_, v_;
    long t_ = 0;
};

/// d/dtheta of the mean per-state entropy.
Table entropy_gradient(const SoftmaxPolicy& pi) {
    Table g(pi.n_states(), pi.n_actions());
    for (std::size_t s = 0; s < pi.n_states(); ++s) {
        double h = 0.0;
        for (std::size_t a = 0; a < pi.n_actions(); ++a) h -= pi.prob(s, a) * pi.log_prob(s, a);
        for (std::size_t a = 0; a < pi.n_actions(); ++a)
            g(s, a) = -pi.prob(s, a) * (pi.log_prob(s, a) + h) / double(pi.n_states());
    }
    return g;
}

using Relabel = std::function<double(const Step&, const SoftmaxPolicy&)>;
using Recorder = std::function<CurveRecord(const SoftmaxPolicy&)>;
/// Trajectory for update `it`, slot `i`, given the current policy.
using Sampler = std::function<Trajectory(std::size_t it, std::size_t i, const SoftmaxPolicy&)>;

/// Episodic policy gradient with a per-timestep running-mean baseline.
TrainingCurve run_policy_gradient(double gamma, Table logits, const TrainConfig& cfg, const Sampler& sampler,
                                  const Relabel& relabel, const Recorder& record) {
    cfg.validate();
    Adam adam(logits.rows(), logits.cols());
    std::vector<double> baseline(cfg.horizon, 0.0);
    bool have_baseline = false;
    std::vector<double> rewards, to_go, batch_to_go(cfg.horizon);

    TrainingCurve curve;
    curve.records.reserve(cfg.iterations);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const SoftmaxPolicy pi(logits);
        Table grad = Table::Zero(logits.rows(), logits.cols());
        std::fill(batch_to_go.begin(), batch_to_go.end(), 0.0);
        double sar_total = 0.0;
        for (std::size_t i = 0; i < cfg.rollouts_per_update; ++i) {
            const auto traj = sampler(it, i, pi);
            rewards.resize(traj.steps.size());
            for (std::size_t t = 0; t < traj.steps.size(); ++t) {
                rewards[t] = relabel(traj.steps[t], pi);
                sar_total += rewards[t];
            }
            accumulate_score_gradient(traj.steps, rewards, pi, gamma, have_baseline ? &baseline : nullptr, grad,
                                      to_go);
            for (std::size_t t = 0; t < to_go.size(); ++t) batch_to_go[t] += to_go[t];
        }
        const double n = double(cfg.rollouts_per_update);
        grad /= n;
        if (cfg.entropy_coeff > 0.0) grad += cfg.entropy_coeff * entropy_gradient(pi);
        for (std::size_t t = 0; t < cfg.horizon; ++t)
            baseline[t] = have_baseline ? 0.9 * baseline[t] + 0.1 * batch_to_go[t] / n : batch_to_go[t] / n;
        have_baseline = true;

        adam.step(logits, grad, cfg.learning_rate);
        CurveRecord rec = record(SoftmaxPolicy(logits));
        rec.mean_sar = sar_total / (n * double(cfg.horizon));
        curve.records.push_back(rec);
    }
    return curve;
}

Eigen::VectorXd normalized(Eigen::VectorXd v) {
    v = v.cwiseMax(0.0);
    return v / v.sum();
}

/// mu0^T (I - gamma P_pi)^-1 r_pi for an arbitrary reward table.
double discounted_value(const TransitionKernel& kernel, const Table& reward, const Eigen::VectorXd& mu0, double gamma,
                        const Table& probs) {
    const Eigen::MatrixXd p_pi = kernel.under_policy(probs);
    const Eigen::VectorXd r_pi = reward.cwiseProduct(probs).rowwise().sum();
    const Eigen::Index n = p_pi.rows();
    const Eigen::VectorXd v = (Eigen::MatrixXd::Identity(n, n) - gamma * p_pi).partialPivLu().solve(r_pi);
    return mu0.dot(v);
}

}  // namespace

GradientEstimate estimate_policy_gradient(const TransitionKernel& dynamics, const Table& reward,
                                          const Eigen::VectorXd& start, const SoftmaxPolicy& policy, double gamma,
                                          std::size_t horizon, std::size_t n_traj, std::uint64_t seed) {
    if (n_traj < 2) throw InvalidInput("gradient estimate needs at least two trajectories");
    const Eigen::Index ns = policy.n_states(), na = policy.n_actions();
    Table sum = Table::Zero(ns, na), sum_sq = Table::Zero(ns, na), g(ns, na);
    std::vector<double> rewards, to_go;
    for (std::size_t i = 0; i < n_traj; ++i) {
        Rng rng = make_rng(seed, i);
        const auto traj = sample_trajectory(dynamics, reward, start, policy, horizon, rng);
        rewards.resize(traj.steps.size());
        for (std::size_t t = 0; t < traj.steps.size(); ++t) rewards[t] = traj.steps[t].reward;
        g.setZero();
        accumulate_score_gradient(traj.steps, rewards, policy, gamma, nullptr, g, to_go);
        sum += g;
        sum_sq += g.cwiseProduct(g);
    }
    const double n = double(n_traj);
    GradientEstimate out;
    out.mean = sum / n;
    const Table var = ((sum_sq / n - out.mean.cwiseProduct(out.mean)) * (n / (n - 1.0))).cwiseMax(0.0);
    out.std_error = (var / n).cwiseSqrt();
    return out;
}

TrainingCurve train_pg_model_bias(const TabularMdp& env, const TransitionKernel& model_kernel, RewardMode mode,
                                  const SarConfig& sar, const TrainConfig& cfg) {
    sar.validate();
    const TabularMdp model = env.with_transition(model_kernel);
    const SoftmaxPolicy initial = SoftmaxPolicy::uniform(env.n_states(), env.n_actions());
    const RewardScale scale = RewardScale::of(env);

    Relabel relabel;
    if (mode == RewardMode::Vanilla) {
        relabel = [](const Step& st, const SoftmaxPolicy&) { return st.reward; };
    } else {
        relabel = [&](const Step& st, const SoftmaxPolicy& pi) {
            return practical_sar_exact(st.state, st.action, st.next_state, st.reward, scale, env.transition(),
                                       model_kernel, pi, pi, sar);
        };
    }
    const std::vector<double> weights(env.mu0().data(), env.mu0().data() + env.mu0().size());
    auto record = [&](const SoftmaxPolicy& pi) {
        CurveRecord rec;
        rec.true_env_return = expected_return(env, pi);
        rec.model_estimated_return = expected_return(model, pi);
        rec.kl_to_behavior = kl_policies(pi, initial, weights);
        return rec;
    };
    const std::uint64_t traj_seed = mix_seed(cfg.seed, kTagTrajectories);
    auto sampler = [&](std::size_t it, std::size_t i, const SoftmaxPolicy& pi) {
        Rng rng = make_rng(traj_seed, it * cfg.rollouts_per_update + i);
        return sample_trajectory(model_kernel, env.reward(), env.mu0(), pi, cfg.horizon, rng);
    };
    return run_policy_gradient(env.gamma(), initial.logits(), cfg, sampler, relabel, record);
}

TrainingCurve train_pg_policy_shift(const TabularMdp& env, const SoftmaxPolicy& pi_b, RewardMode mode,
                                    const SarConfig& sar, const TrainConfig& cfg) {
    sar.validate();
    cfg.validate();
    if (pi_b.n_states() != env.n_states() || pi_b.n_actions() != env.n_actions())
        throw InvalidInput("behavior policy does not match the environment");

    // Episodes of pi_b started from its own occupancy, so the data covers d^{p,pi_b}.
    const Eigen::VectorXd start = normalized(state_occupancy(env, pi_b.probabilities()));
    const std::uint64_t traj_seed = mix_seed(cfg.seed, kTagTrajectories);
    std::vector<Trajectory> pool;
    if (cfg.start_mode == StartMode::Dataset) {
        const std::size_t episodes = std::max<std::size_t>(1, cfg.dataset_size / cfg.horizon);
        Rng rng = make_rng(mix_seed(cfg.seed, kTagDataset));
        for (std::size_t e = 0; e < episodes; ++e)
            pool.push_back(sample_trajectory(env.transition(), env.reward(), start, pi_b, cfg.horizon, rng));
    }
    Rng pick_rng = make_rng(traj_seed, ~std::uint64_t{0});
    auto sampler = [&](std::size_t it, std::size_t i, const SoftmaxPolicy&) {
        if (!pool.empty()) return pool[uniform_index(pool.size(), pick_rng)];
        Rng rng = make_rng(traj_seed, it * cfg.rollouts_per_update + i);
        return sample_trajectory(env.transition(), env.reward(), start, pi_b, cfg.horizon, rng);
    };
    const std::vector<double> weights(start.data(), start.data() + start.size());

    Relabel relabel;
    if (mode == RewardMode::Vanilla) {
        relabel = [](const Step& st, const SoftmaxPolicy&) { return st.reward; };
    } else {
        relabel = [&](const Step& st, const SoftmaxPolicy& pi) {
            const double shift = pi.log_prob(st.state, st.action) - pi_b.log_prob(st.state, st.action);
            return st.reward + sar.beta * std::clamp(shift, -sar.term_clamp, sar.term_clamp);
        };
    }
    auto record = [&](const SoftmaxPolicy& pi) {
        CurveRecord rec;
        const auto values = policy_evaluate(env, pi);
        rec.true_env_return = env.mu0().dot(values.v);
        rec.model_estimated_return = start.dot(values.v);
        rec.kl_to_behavior = kl_policies(pi, pi_b, weights);
        return rec;
    };
    return run_policy_gradient(env.gamma(), pi_b.logits(), cfg, sampler, relabel, record);
}

SamboResult sambo_train(const ReplayBuffer& d_env, const TabularMdp& env_for_eval, const SarConfig& sar,
                        const TrainConfig& cfg) {
    if (d_env.empty()) throw InvalidInput("SAMBO needs a non-empty environment dataset");
    sar.validate();
    cfg.validate();
    const std::size_t ns = env_for_eval.n_states(), na = env_for_eval.n_actions();
    const double gamma = env_for_eval.gamma();
    d_env.validate(ns, na);

    const auto ensemble = fit_ensemble(d_env, ns, na, cfg.ensemble_size, cfg.model_smoothing,
                                       mix_seed(cfg.seed, kTagEnsemble));
    const TransitionKernel mean_model = ensemble.mean_kernel();

    // Mean observed reward per (s,a); unseen pairs get the smallest observed reward.
    Table reward_hat = Table::Zero(ns, na), reward_count = Table::Zero(ns, na);
    double r_max = d_env[0].reward, r_min = d_env[0].reward;
    for (const auto& s : d_env.samples()) {
        reward_hat(s.state, s.action) += s.reward;
        reward_count(s.state, s.action) += 1.0;
        r_max = std::max(r_max, s.reward);
        r_min = std::min(r_min, s.reward);
    }
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a)
            reward_hat(s, a) = reward_count(s, a) > 0.0 ? reward_hat(s, a) / reward_count(s, a) : r_min;
    const RewardScale scale{r_max, r_min};

    // Smoothed empirical behavior policy and its state weights for the KL record.
    const Table sa_counts = reward_count;
    Table behavior_logits(ns, na);
    std::vector<double> state_weights(ns, 0.0);
    for (std::size_t s = 0; s < ns; ++s) {
        const double row = sa_counts.row(s).sum();
        state_weights[s] = row / double(d_env.size());
        for (std::size_t a = 0; a < na; ++a) behavior_logits(s, a) = std::log((sa_counts(s, a) + 1.0) / (row + na));
    }
    const SoftmaxPolicy behavior(behavior_logits);

    ClassifierTrainConfig cls_cfg;
    cls_cfg.steps = cfg.classifier_steps;
    cls_cfg.learning_rate = cfg.classifier_lr;
    cls_cfg.batch_size = cfg.batch_size;
    cls_cfg.logit_clamp = sar.term_clamp;

    ReplayBuffer d_m(BufferTag::Model, cfg.model_buffer_capacity);
    ReplayBuffer d_pi(BufferTag::Policy);
    TransitionClassifier c_phi(ns, na, sar.term_clamp);
    ActionClassifier c_psi(ns, na, sar.term_clamp);
    bool have_phi = false, have_psi = false;

    Table logits = Table::Zero(ns, na);
    Table q = Table::Zero(ns, na);
    const double tau = cfg.entropy_coeff;
    Rng batch_rng = make_rng(mix_seed(cfg.seed, kTagBatch));

    SamboResult result{SoftmaxPolicy(logits), {}, 0, 0};
    result.curve.records.reserve(cfg.iterations);
    std::vector<TransitionSample> batch(cfg.batch_size);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        SoftmaxPolicy pi(logits);
        d_pi.clear();
        const auto synthetic =
            rollout(ensemble, reward_hat, pi, d_env, cfg.rollout_h, cfg.rollout_b, mix_seed(cfg.seed, kTagRollout + 16 * it));
        d_m.add(synthetic);
        d_pi.add(synthetic);

        cls_cfg.seed = mix_seed(cfg.seed, kTagClassifier + 16 * it);
        if (sar.alpha != 0.0) {
            c_phi = train_transition_classifier(d_env, d_m, ns, na, cls_cfg, have_phi ? &c_phi : nullptr);
            have_phi = true;
        }
        if (sar.beta != 0.0) {
            c_psi = train_action_classifier(d_pi, d_env, ns, na, cls_cfg, have_psi ? &c_psi : nullptr);
            have_psi = true;
        }

        double sar_total = 0.0;
        for (std::size_t u = 0; u < cfg.policy_updates; ++u) {
            for (auto& sample : batch) {
                if (uniform01(batch_rng) < cfg.real_ratio) {
                    sample = d_env.sample(batch_rng);
                    sample.source = SampleSource::Env;
                    ++result.env_samples_consumed;
                } else {
                    sample = d_m.sample(batch_rng);
                    ++result.model_samples_consumed;
                }
            }
            // Critic: soft TD(0) on the relabeled rewards.
            for (const auto& sample : batch) {
                const double r = practical_sar_classifier(sample, c_phi, c_psi, scale, sar);
                sar_total += r;
                double v_next = 0.0;
                for (std::size_t a = 0; a < na; ++a)
                    v_next += pi.prob(sample.next_state, a) * (q(sample.next_state, a) - tau * pi.log_prob(sample.next_state, a));
                q(sample.state, sample.action) += cfg.critic_lr * (r + gamma * v_next - q(sample.state, sample.action));
            }
            // Actor: exact softmax gradient of E_pi[Q - tau log pi] in every state.
            for (std::size_t s = 0; s < ns; ++s) {
                double mean = 0.0;
                for (std::size_t a = 0; a < na; ++a) mean += pi.prob(s, a) * (q(s, a) - tau * pi.log_prob(s, a));
                for (std::size_t a = 0; a < na; ++a)
                    logits(s, a) += cfg.learning_rate * pi.prob(s, a) * (q(s, a) - tau * pi.log_prob(s, a) - mean);
            }
            pi = SoftmaxPolicy(logits);
        }

        CurveRecord rec;
        rec.true_env_return = expected_return(env_for_eval, pi);
        rec.model_estimated_return =
            discounted_value(mean_model, reward_hat, env_for_eval.mu0(), gamma, pi.probabilities());
        rec.kl_to_behavior = kl_policies(pi, behavior, state_weights);
        rec.mean_sar = sar_total / double(cfg.policy_updates * cfg.batch_size);
        result.curve.records.push_back(rec);
    }
    result.policy = SoftmaxPolicy(logits);
    return result;
}

}  // namespace sambo
