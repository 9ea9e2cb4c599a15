#include <gtest/gtest.h>

#include <cmath>

#include "sambo/mdp.hpp"

using namespace sambo;

namespace {

/// Two states, two actions, hand-picked numbers.
TabularMdp small_mdp(double gamma = 0.9) {
    std::vector<double> p = {
        0.7, 0.3,  // s0 a0
        0.2, 0.8,  // s0 a1
        0.5, 0.5,  // s1 a0
        0.1, 0.9,  // s1 a1
    };
    Table r(2, 2);
    r << 1.0, 0.5, 0.2, 2.0;
    Eigen::VectorXd mu0(2);
    mu0 << 0.6, 0.4;
    return {TransitionKernel(2, 2, p), r, mu0, gamma};
}

Table probs_of(double a, double b) {
    Table t(2, 2);
    t << a, 1 - a, b, 1 - b;
    return t;
}

}  // namespace

TEST(TransitionKernel, RejectsRowsOffTheSimplex) {
    EXPECT_THROW(TransitionKernel(1, 1, {0.5}), InvalidInput);
    EXPECT_THROW(TransitionKernel(2, 1, {1.2, -0.2, 0.5, 0.5}), InvalidInput);
    EXPECT_THROW(TransitionKernel(2, 1, {1.0}), InvalidInput);
}

TEST(TransitionKernel, UniformRows) {
    const auto k = TransitionKernel::uniform(3, 2);
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t a = 0; a < 2; ++a)
            for (double x : k.row(s, a)) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
}

TEST(TabularMdp, Validation) {
    auto k = TransitionKernel::uniform(2, 1);
    Table r = Table::Constant(2, 1, 1.0);
    Eigen::VectorXd mu0 = Eigen::VectorXd::Constant(2, 0.5);
    EXPECT_NO_THROW(TabularMdp(k, r, mu0, 0.5));
    EXPECT_THROW(TabularMdp(k, r, mu0, 1.0), InvalidInput);
    EXPECT_THROW(TabularMdp(k, r, mu0, 0.0), InvalidInput);
    Table bad = r;
    bad(1, 0) = 0.0;
    EXPECT_THROW(TabularMdp(k, bad, mu0, 0.5), InvalidInput);
    Eigen::VectorXd bad_mu = Eigen::VectorXd::Constant(2, 0.4);
    EXPECT_THROW(TabularMdp(k, r, bad_mu, 0.5), InvalidInput);
}

TEST(SoftmaxPolicy, ProbabilitiesAndLogs) {
    Table logits(2, 3);
    logits << 0.0, 1.0, 2.0, -5.0, 0.0, 5.0;
    const SoftmaxPolicy pi(logits);
    for (std::size_t s = 0; s < 2; ++s) {
        double total = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
            total += pi.prob(s, a);
            EXPECT_NEAR(std::log(pi.prob(s, a)), pi.log_prob(s, a), 1e-12);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
    EXPECT_NEAR(pi.prob(0, 2) / pi.prob(0, 1), std::exp(1.0), 1e-12);
}

TEST(PolicyEvaluate, SingleStateClosedForm) {
    const TabularMdp mdp(TransitionKernel(1, 1, {1.0}), Table::Constant(1, 1, 2.0), Eigen::VectorXd::Ones(1), 0.8);
    const auto v = policy_evaluate(mdp, Table::Ones(1, 1));
    EXPECT_NEAR(v.v[0], 2.0 / 0.2, 1e-10);
}

TEST(PolicyEvaluate, MatchesCramerSolution) {
    const auto mdp = small_mdp();
    const Table probs = probs_of(0.3, 0.6);
    // (I - g P) v = r_pi solved by Cramer's rule.
    const double g = 0.9;
    double P[2][2], r[2];
    for (int s = 0; s < 2; ++s) {
        r[s] = probs(s, 0) * mdp.reward()(s, 0) + probs(s, 1) * mdp.reward()(s, 1);
        for (int n = 0; n < 2; ++n)
            P[s][n] = probs(s, 0) * mdp.transition()(s, 0, n) + probs(s, 1) * mdp.transition()(s, 1, n);
    }
    const double a = 1 - g * P[0][0], b = -g * P[0][1], c = -g * P[1][0], d = 1 - g * P[1][1];
    const double det = a * d - b * c;
    const double v0 = (r[0] * d - b * r[1]) / det, v1 = (a * r[1] - c * r[0]) / det;

    const auto lin = policy_evaluate_linear(mdp, probs);
    EXPECT_NEAR(lin.v[0], v0, 1e-10);
    EXPECT_NEAR(lin.v[1], v1, 1e-10);
    const auto it = policy_evaluate_iterative(mdp, probs, 1e-11);
    EXPECT_NEAR(it.v[0], v0, 1e-9);
    EXPECT_NEAR(it.v[1], v1, 1e-9);
    // Q(s,a) = r + g sum P V
    for (int s = 0; s < 2; ++s)
        for (int act = 0; act < 2; ++act) {
            const double q = mdp.reward()(s, act) + g * (mdp.transition()(s, act, 0) * v0 + mdp.transition()(s, act, 1) * v1);
            EXPECT_NEAR(lin.q(s, act), q, 1e-10);
        }
    EXPECT_NEAR(expected_return(mdp, probs), 0.6 * v0 + 0.4 * v1, 1e-10);
}

TEST(Occupancy, MatchesDiscountedPowerSeries) {
    const auto mdp = small_mdp();
    const Table probs = probs_of(0.25, 0.5);
    const Table d = occupancy(mdp, probs);
    EXPECT_NEAR(d.sum(), 1.0, 1e-12);
    // Independent series: rho_{t+1}(n) = sum_s rho_t(s) sum_a pi P.
    double rho[2] = {0.6, 0.4};
    double acc[2][2] = {{0, 0}, {0, 0}};
    double disc = 1.0;
    for (int t = 0; t < 800; ++t) {
        double next[2] = {0, 0};
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 2; ++a) {
                acc[s][a] += (1 - 0.9) * disc * rho[s] * probs(s, a);
                for (int n = 0; n < 2; ++n) next[n] += rho[s] * probs(s, a) * mdp.transition()(s, a, n);
            }
        rho[0] = next[0];
        rho[1] = next[1];
        disc *= 0.9;
    }
    for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 2; ++a) EXPECT_NEAR(d(s, a), acc[s][a], 1e-12);
    // Expected return equals the reward average under d, scaled by 1/(1-g).
    double via_d = 0.0;
    for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 2; ++a) via_d += d(s, a) * mdp.reward()(s, a);
    EXPECT_NEAR(via_d / 0.1, expected_return(mdp, probs), 1e-9);
}

TEST(Enumeration, ProbabilitiesSumToOneAndReturnMatchesTruncation) {
    const auto mdp = small_mdp();
    Table logits(2, 2);
    logits << 0.2, -0.4, 1.0, 0.0;
    const SoftmaxPolicy pi(logits);
    for (std::size_t h : {1u, 3u, 6u}) {
        const auto set = enumerate_trajectories(mdp.transition(), mdp.reward(), mdp.mu0(), pi, mdp.gamma(), h);
        EXPECT_NEAR(set.total_probability(), 1.0, 1e-12);
        EXPECT_EQ(set.entries.size(), 2u * std::size_t(std::pow(4, h)));
        EXPECT_NEAR(set.expected_return(), truncated_return(mdp, pi, h), 1e-12);
        const double full = expected_return(mdp, pi);
        EXPECT_LE(full - set.expected_return(), set.tail_bound + 1e-12);
        EXPECT_GE(full - set.expected_return(), 0.0);
        for (const auto& e : set.entries) {
            EXPECT_TRUE(e.trajectory.is_chained());
            EXPECT_NEAR(e.probability, trajectory_probability(e.trajectory.steps, mdp.transition(), mdp.mu0(), pi),
                        1e-15);
        }
    }
}

TEST(Enumeration, GuardRefusesHugeSets) {
    const auto mdp = small_mdp();
    const auto pi = SoftmaxPolicy::uniform(2, 2);
    EXPECT_THROW(enumerate_trajectories(mdp.transition(), mdp.reward(), mdp.mu0(), pi, mdp.gamma(), 60), SizeError);
}

TEST(TailBound, HorizonIsSmallestBelowTolerance) {
    for (double tol : {1e-3, 1e-6, 1e-8}) {
        const std::size_t h = horizon_for_tail(0.9, 2.0, tol);
        EXPECT_LT(tail_bound(0.9, h, 2.0), tol);
        EXPECT_GE(tail_bound(0.9, h - 1, 2.0), tol);
    }
    EXPECT_NEAR(tail_bound(0.5, 3, 1.0), 0.125 / 0.5, 1e-15);
}

TEST(Sampling, DeterministicAndChained) {
    const auto mdp = small_mdp();
    const auto pi = SoftmaxPolicy::uniform(2, 2);
    const auto a = sample_trajectory(mdp.transition(), mdp.reward(), mdp.mu0(), pi, 50, 7);
    const auto b = sample_trajectory(mdp.transition(), mdp.reward(), mdp.mu0(), pi, 50, 7);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(a.is_chained());
    EXPECT_EQ(a.horizon(), 50u);
}

TEST(Sampling, MonteCarloReturnMatchesTruncatedReturn) {
    const auto mdp = small_mdp();
    const auto pi = SoftmaxPolicy::uniform(2, 2);
    Rng rng = make_rng(3);
    const int n = 40000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = sample_trajectory(mdp.transition(), mdp.reward(), mdp.mu0(), pi, 10, rng).discounted_return(0.9);
        sum += g;
        sum_sq += g * g;
    }
    const double mean = sum / n, se = std::sqrt((sum_sq / n - mean * mean) / n);
    EXPECT_NEAR(mean, truncated_return(mdp, pi, 10), 4 * se);
}

TEST(KlPolicies, ZeroForSamePolicyAndMatchesHandValue) {
    Table l1(1, 2), l2(1, 2);
    l1 << 0.0, 0.0;
    l2 << std::log(0.9), std::log(0.1);
    const SoftmaxPolicy u(l1), b(l2);
    const std::vector<double> w{1.0};
    EXPECT_NEAR(kl_policies(u, u, w), 0.0, 1e-15);
    EXPECT_NEAR(kl_policies(u, b, w), 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1), 1e-12);
    const std::vector<double> bad{0.5};
    EXPECT_THROW(kl_policies(u, b, bad), InvalidInput);
}

TEST(ExhaustiveOptimum, BeatsEveryDeterministicPolicy) {
    const auto mdp = small_mdp();
    const auto best = exhaustive_optimum(mdp);
    for (std::size_t a0 = 0; a0 < 2; ++a0)
        for (std::size_t a1 = 0; a1 < 2; ++a1) {
            const std::vector<std::size_t> acts{a0, a1};
            EXPECT_LE(expected_return(mdp, deterministic_probs(acts, 2)), best.expected_return + 1e-12);
        }
}
