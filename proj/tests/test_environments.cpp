#include <gtest/gtest.h>

#include <cmath>

#include "sambo/environments.hpp"

using namespace sambo;

namespace {

/// Brute-force value of a deterministic policy by rolling the grid forward.
double rollout_value(const GridSpec& spec, const std::vector<std::size_t>& actions, std::size_t start, double gamma) {
    double total = 0.0, disc = 1.0;
    std::size_t s = start;
    for (int t = 0; t < 2000; ++t) {
        std::size_t next = actions[s] == kLeft ? (s == 0 ? 0 : s - 1) : std::min(s + 1, spec.n_cells - 1);
        double r = spec.base_reward;
        for (const auto& p : spec.reward_placements)
            if (p.state == next) r = p.value;
        total += disc * r;
        disc *= gamma;
        s = next;
    }
    return total;
}

}  // namespace

TEST(Grid, DeterministicMovesWithWalls) {
    const GridSpec spec;
    const auto mdp = build_grid(spec);
    EXPECT_EQ(mdp.n_states(), 5u);
    EXPECT_EQ(mdp.n_actions(), 2u);
    EXPECT_DOUBLE_EQ(mdp.transition()(0, kLeft, 0), 1.0);
    EXPECT_DOUBLE_EQ(mdp.transition()(4, kRight, 4), 1.0);
    EXPECT_DOUBLE_EQ(mdp.transition()(2, kRight, 3), 1.0);
    EXPECT_DOUBLE_EQ(mdp.transition()(2, kLeft, 1), 1.0);
    EXPECT_DOUBLE_EQ(mdp.reward()(3, kRight), 1.0);
    EXPECT_DOUBLE_EQ(mdp.reward()(1, kLeft), 0.3);
    EXPECT_DOUBLE_EQ(mdp.reward()(2, kLeft), 0.01);
    for (std::size_t s = 0; s < 5; ++s) EXPECT_DOUBLE_EQ(mdp.mu0()[s], 0.2);
    EXPECT_DOUBLE_EQ(mdp.gamma(), 0.95);
}

TEST(Grid, TwoCellsRewardAtRightEnd) {
    GridSpec spec;
    spec.n_cells = 2;
    spec.reward_placements = {{1, 1.0}};
    const auto mdp = build_grid(spec);
    EXPECT_DOUBLE_EQ(mdp.transition()(1, kRight, 1), 1.0);
    EXPECT_DOUBLE_EQ(mdp.reward()(1, kRight), 1.0);
    EXPECT_DOUBLE_EQ(mdp.reward()(1, kLeft), spec.base_reward);
}

TEST(Grid, Validation) {
    GridSpec spec;
    spec.n_cells = 1;
    EXPECT_THROW(build_grid(spec), InvalidInput);
    spec = GridSpec{};
    spec.reward_placements = {{5, 1.0}};
    EXPECT_THROW(build_grid(spec), InvalidInput);
    spec = GridSpec{};
    spec.base_reward = 0.0;
    EXPECT_THROW(build_grid(spec), InvalidInput);
    spec = GridSpec{};
    spec.reward_placements.clear();
    EXPECT_THROW(build_grid(spec), InvalidInput);
}

TEST(Grid, OptimumIsAlwaysRightFromInteriorCells) {
    const GridSpec spec;
    const auto mdp = build_grid(spec);
    const auto opt = exhaustive_optimum(mdp);
    for (std::size_t s = 1; s < spec.n_cells; ++s) EXPECT_EQ(opt.actions[s], kRight) << "state " << s;

    // Independent oracle: brute-force forward simulation of all 32 policies.
    double best = -1.0;
    for (unsigned mask = 0; mask < 32; ++mask) {
        std::vector<std::size_t> acts(5);
        for (std::size_t s = 0; s < 5; ++s) acts[s] = (mask >> s) & 1u;
        double v = 0.0;
        for (std::size_t s = 0; s < 5; ++s) v += 0.2 * rollout_value(spec, acts, s, 0.95);
        best = std::max(best, v);
    }
    EXPECT_NEAR(opt.expected_return, best, 1e-8);
}

TEST(BiasedModel, ZeroEpsilonIsTheTrueKernel) {
    const GridSpec spec;
    const auto mdp = build_grid(spec);
    for (auto kind : {BiasKind::Overestimating, BiasKind::Underestimating}) {
        const auto q = make_biased_model(mdp.transition(), spec, {kind, 0.0});
        EXPECT_EQ(q.max_abs_diff(mdp.transition()), 0.0);
    }
    EXPECT_THROW(make_biased_model(mdp.transition(), spec, {BiasKind::Overestimating, 1.0}), InvalidInput);
    EXPECT_THROW(make_biased_model(mdp.transition(), spec, {BiasKind::Overestimating, -0.1}), InvalidInput);
}

TEST(BiasedModel, RowsStayOnTheSimplexAndShiftInTheRightDirection) {
    const GridSpec spec;
    const auto mdp = build_grid(spec);
    const auto om = make_biased_model(mdp.transition(), spec, {BiasKind::Overestimating, 0.3});
    const auto um = make_biased_model(mdp.transition(), spec, {BiasKind::Underestimating, 0.3});
    // From state 2 moving left: OM leaks mass toward cell 3, UM toward cell 1.
    EXPECT_NEAR(om(2, kLeft, 1), 0.7, 1e-15);
    EXPECT_NEAR(om(2, kLeft, 3), 0.3, 1e-15);
    EXPECT_NEAR(um(2, kLeft, 1), 1.0, 1e-15);
    EXPECT_NEAR(um(2, kRight, 1), 0.3, 1e-15);
    EXPECT_NEAR(um(2, kRight, 3), 0.7, 1e-15);
    // At the target, OM stays and UM steps off.
    EXPECT_NEAR(om(4, kLeft, 4), 0.3, 1e-15);
    EXPECT_NEAR(um(4, kRight, 3), 0.3, 1e-15);
}

TEST(BiasedModel, OverestimatingInflatesAndUnderestimatingDeflatesTheOptimalReturn) {
    const GridSpec spec;
    const auto env = build_grid(spec);
    const auto opt = exhaustive_optimum(env);
    const Table probs = deterministic_probs(opt.actions, 2);
    for (double eps : {0.1, 0.5, 0.9}) {
        const auto om = env.with_transition(make_biased_model(env.transition(), spec, {BiasKind::Overestimating, eps}));
        const auto um = env.with_transition(make_biased_model(env.transition(), spec, {BiasKind::Underestimating, eps}));
        EXPECT_GE(expected_return(om, probs), opt.expected_return - 1e-9);
        EXPECT_LT(expected_return(um, probs), opt.expected_return);
    }
}

TEST(BiasKindNames, RoundTrip) {
    for (auto kind : {BiasKind::Overestimating, BiasKind::Underestimating})
        EXPECT_EQ(bias_kind_from_string(to_string(kind)), kind);
    EXPECT_EQ(bias_kind_from_string("um"), BiasKind::Underestimating);
    EXPECT_THROW(bias_kind_from_string("sideways"), InvalidInput);
}

TEST(BehaviorPolicies, UniformAndAntiOptimal) {
    const auto u = uniform_behavior(5);
    const auto anti = anti_optimal_behavior(5);
    for (std::size_t s = 0; s < 5; ++s) {
        EXPECT_DOUBLE_EQ(u.prob(s, kLeft), 0.5);
        EXPECT_NEAR(anti.prob(s, kLeft), 1.0 / (1.0 + std::exp(-3.0)), 1e-12);
    }
}
