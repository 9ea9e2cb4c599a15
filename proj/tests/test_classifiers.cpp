#include <gtest/gtest.h>

#include <cmath>

#include "sambo/classifiers.hpp"

using namespace sambo;

namespace {

/// Buffer of i.i.d. transitions over 2 states and 2 actions with the given next-state law.
ReplayBuffer draw(BufferTag tag, SampleSource src, std::size_t n, double p_next1, double p_action1, std::uint64_t seed) {
    ReplayBuffer buf(tag);
    Rng rng = make_rng(seed);
    std::bernoulli_distribution state(0.5), action(p_action1), next(p_next1);
    for (std::size_t i = 0; i < n; ++i)
        buf.add({std::size_t(state(rng)), std::size_t(action(rng)), 1.0, std::size_t(next(rng)), src});
    return buf;
}

ClassifierTrainConfig long_training() {
    ClassifierTrainConfig cfg;
    cfg.steps = 3000;
    cfg.seed = 1;
    return cfg;
}

}  // namespace

TEST(TransitionClassifier, EqualLawsEqualSizesGiveZeroLogOdds) {
    const auto env = draw(BufferTag::Env, SampleSource::Env, 40000, 0.3, 0.5, 1);
    const auto model = draw(BufferTag::Model, SampleSource::Model, 40000, 0.3, 0.5, 2);
    const auto c = train_transition_classifier(env, model, 2, 2, long_training());
    EXPECT_NEAR(c.size_log_ratio, 0.0, 1e-15);
    for (std::size_t cell = 0; cell < c.table().size(); ++cell) EXPECT_NEAR(c.table().log_odds(cell), 0.0, 0.1);
}

TEST(TransitionClassifier, EqualLawsDoubleEnvDataGiveLogTwo) {
    const auto env = draw(BufferTag::Env, SampleSource::Env, 80000, 0.3, 0.5, 3);
    const auto model = draw(BufferTag::Model, SampleSource::Model, 40000, 0.3, 0.5, 4);
    const auto c = train_transition_classifier(env, model, 2, 2, long_training());
    EXPECT_NEAR(c.size_log_ratio, std::log(2.0), 1e-15);
    double mae = 0.0;
    for (std::size_t cell = 0; cell < c.table().size(); ++cell) mae += std::abs(c.table().log_odds(cell) - std::log(2.0));
    EXPECT_LT(mae / double(c.table().size()), 0.05);
}

TEST(TransitionClassifier, RecoversTheDensityRatio) {
    // p(next=1) = 0.3 vs q(next=1) = 0.6.
    const auto env = draw(BufferTag::Env, SampleSource::Env, 100000, 0.3, 0.5, 5);
    const auto model = draw(BufferTag::Model, SampleSource::Model, 100000, 0.6, 0.5, 6);
    const auto c = train_transition_classifier(env, model, 2, 2, long_training());
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            EXPECT_NEAR(c.log_odds(s, a, 0), std::log(0.7 / 0.4), 0.06);
            EXPECT_NEAR(c.log_odds(s, a, 1), std::log(0.3 / 0.6), 0.06);
        }
    EXPECT_LT(c.trace.final_loss, c.trace.initial_loss);
    EXPECT_FALSE(c.trace.loss.empty());
}

TEST(TransitionClassifier, MatchesTheClosedFormOracle) {
    const auto env = draw(BufferTag::Env, SampleSource::Env, 50000, 0.2, 0.3, 7);
    const auto model = draw(BufferTag::Model, SampleSource::Model, 30000, 0.5, 0.3, 8);
    const auto trained = train_transition_classifier(env, model, 2, 2, long_training());
    const auto oracle = closed_form_transition_oracle(env, model, 2, 2);
    // Oracle independent of the library: log of raw count ratios.
    const auto ne = transition_counts(env, 2, 2), nm = transition_counts(model, 2, 2);
    for (std::size_t cell = 0; cell < ne.size(); ++cell) {
        const double expect = std::log((ne[cell] + kOracleLaplace) / (nm[cell] + kOracleLaplace));
        EXPECT_NEAR(oracle.table().log_odds(cell), expect, 1e-12);
        EXPECT_NEAR(trained.table().log_odds(cell), expect, 0.05);
    }
}

TEST(TransitionClassifier, SeparableCellsHitTheClamp) {
    ReplayBuffer env(BufferTag::Env), model(BufferTag::Model);
    for (int i = 0; i < 500; ++i) {
        env.add({0, 0, 1.0, 0, SampleSource::Env});
        model.add({0, 0, 1.0, 1, SampleSource::Model});
    }
    ClassifierTrainConfig cfg;
    cfg.steps = 2000;
    cfg.logit_clamp = 3.0;
    const auto c = train_transition_classifier(env, model, 2, 1, cfg);
    EXPECT_NEAR(c.log_odds(0, 0, 0), 3.0, 1e-12);
    EXPECT_NEAR(c.log_odds(0, 0, 1), -3.0, 1e-12);
    EXPECT_DOUBLE_EQ(c.log_odds(1, 0, 0), 0.0);
}

TEST(TransitionClassifier, WarmStartContinuesFromPreviousLogits) {
    const auto env = draw(BufferTag::Env, SampleSource::Env, 20000, 0.3, 0.5, 9);
    const auto model = draw(BufferTag::Model, SampleSource::Model, 20000, 0.6, 0.5, 10);
    ClassifierTrainConfig tiny;
    tiny.steps = 1;
    tiny.learning_rate = 1e-9;
    const auto first = train_transition_classifier(env, model, 2, 2, long_training());
    const auto second = train_transition_classifier(env, model, 2, 2, tiny, &first);
    const auto cold = train_transition_classifier(env, model, 2, 2, tiny);
    for (std::size_t cell = 0; cell < first.table().size(); ++cell) {
        EXPECT_NEAR(second.table().raw()[cell], first.table().raw()[cell], 1e-6);
        EXPECT_NEAR(cold.table().raw()[cell], 0.0, 1e-6);
    }
}

TEST(TransitionClassifier, RejectsEmptyBuffers) {
    const auto env = draw(BufferTag::Env, SampleSource::Env, 10, 0.3, 0.5, 1);
    EXPECT_THROW(train_transition_classifier(env, ReplayBuffer(BufferTag::Model), 2, 2, {}), InvalidInput);
    EXPECT_THROW(train_action_classifier(ReplayBuffer(BufferTag::Policy), env, 2, 2, {}), InvalidInput);
}

TEST(ActionClassifier, RecoversPolicyRatioPlusSizeConstant) {
    // D_pi takes action 1 w.p. 0.8, D_env w.p. 0.4; |D_pi| = |D_env| / 2.
    const auto d_pi = draw(BufferTag::Policy, SampleSource::Env, 50000, 0.5, 0.8, 11);
    const auto d_env = draw(BufferTag::Env, SampleSource::Env, 100000, 0.5, 0.4, 12);
    const auto c = train_action_classifier(d_pi, d_env, 2, 2, long_training());
    EXPECT_NEAR(c.size_log_ratio, std::log(0.5), 1e-15);
    for (std::size_t s = 0; s < 2; ++s) {
        EXPECT_NEAR(c.log_odds(s, 1), std::log(0.8 / 0.4) + std::log(0.5), 0.05);
        EXPECT_NEAR(c.log_odds(s, 0), std::log(0.2 / 0.6) + std::log(0.5), 0.05);
    }
    const auto oracle = closed_form_action_oracle(d_pi, d_env, 2, 2);
    const auto np = state_action_counts(d_pi, 2, 2), ne = state_action_counts(d_env, 2, 2);
    for (std::size_t cell = 0; cell < 4; ++cell)
        EXPECT_NEAR(oracle.table().log_odds(cell), std::log((np[cell] + 0.5) / (ne[cell] + 0.5)), 1e-12);
}

TEST(ClassifierConfig, Validation) {
    ClassifierTrainConfig cfg;
    cfg.learning_rate = 0.0;
    EXPECT_THROW(cfg.validate(), InvalidInput);
    cfg = {};
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), InvalidInput);
}
