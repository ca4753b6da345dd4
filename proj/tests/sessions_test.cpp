// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "coadapt/dialogue.hpp"
#include "coadapt/evaluation.hpp"
#include "test_support.hpp"

namespace coadapt {
namespace {

using testing::max_abs_diff;

struct TinyWorld {
  TinyWorld() : model(testing::tiny_denoiser(), 7), schedule(NoiseSchedule::linear()) {
    testing::randomize(model.base_parameters(), 8, 0.05);
  }
  GenerationContext ctx(bool alt = false) const { return {&model, nullptr, &schedule, nullptr, alt}; }

  DenoiserModel model;
  NoiseSchedule schedule;
};

class KeywordRefiner final : public PromptRefiner {
 public:
  std::optional<AttributeTuple> refine(const AttributeTuple& current, const std::string& text) const override {
    if (text == "bigger") return current.with(Field::kSize, 2);
    if (text == "broken") return AttributeTuple{9, 0, 0, 0, 1};
    return std::nullopt;
  }
};

TEST(PromptRefinement, CorrectionsOverrideOneField) {
  PromptState s{AttributeTuple{0, 1, 0, 2, 1}, {}};
  const NullRefiner null;
  s = refine_prompt(null, s, Feedback::correction(Field::kColor, 6));
  EXPECT_EQ(s.current, (AttributeTuple{0, 6, 0, 2, 1}));
  s = refine_prompt(null, s, Feedback::reject());
  EXPECT_EQ(s.current, (AttributeTuple{0, 6, 0, 2, 1}));
  s = refine_prompt(null, s, Feedback::free_text("bigger"));
  EXPECT_EQ(s.current, (AttributeTuple{0, 6, 0, 2, 1}));
  ASSERT_EQ(s.history.size(), 3u);
  EXPECT_EQ(s.history[2].first.text, "bigger");

  const KeywordRefiner refiner;
  EXPECT_EQ(refine_prompt(refiner, s, Feedback::free_text("bigger")).current.size, 2);
  EXPECT_THROW(refine_prompt(refiner, s, Feedback::free_text("broken")), std::invalid_argument);
  EXPECT_THROW(refine_prompt(null, s, Feedback::correction(Field::kCount, 4)), std::invalid_argument);
}

TEST(NoiseSteps, JitterStaysInBand) {
  std::set<int> seen1, seen2;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const NoiseSteps n = draw_noise_steps(s);
    ASSERT_GE(n.tau1, 35);
    ASSERT_LE(n.tau1, 45);
    ASSERT_GE(n.tau2, 20);
    ASSERT_LE(n.tau2, 30);
    seen1.insert(n.tau1);
    seen2.insert(n.tau2);
  }
  EXPECT_EQ(seen1.size(), 11u);
  EXPECT_EQ(seen2.size(), 11u);
  EXPECT_NE(round_seed(5, 1), round_seed(5, 2));
  EXPECT_NE(round_seed(5, 1), round_seed(6, 1));
}

TEST(Session, RoundsFollowFeedbackAndStatus) {
  const TinyWorld w;
  DialogueSession s = start_session("s1", AttributeTuple{1, 2, 1, 0, 2}, 77, 3);
  EXPECT_THROW(apply_feedback(s, Feedback::accept(), NullRefiner{}), std::logic_error);
  const RoundRecord& r1 = next_round(s, w.ctx());
  EXPECT_EQ(r1.index, 1);
  EXPECT_EQ(r1.seed, round_seed(77, 1));
  EXPECT_EQ(r1.latent.shape(), w.model.config().latent_shape());
  apply_feedback(s, Feedback::correction(Field::kShape, 0), NullRefiner{});
  EXPECT_EQ(s.prompt.current.shape, 0);
  const RoundRecord& r2 = next_round(s, w.ctx());
  EXPECT_EQ(r2.prompt.shape, 0);
  EXPECT_EQ(r2.steps.tau1, draw_noise_steps(r2.seed).tau1);
  apply_feedback(s, Feedback::reject(), NullRefiner{});
  next_round(s, w.ctx());
  apply_feedback(s, Feedback::reject(), NullRefiner{});
  EXPECT_EQ(s.status, SessionStatus::kAbandoned);
  EXPECT_THROW(next_round(s, w.ctx()), std::logic_error);

  DialogueSession a = start_session("s2", AttributeTuple{}, 1, 5);
  next_round(a, w.ctx());
  apply_feedback(a, Feedback::accept(), NullRefiner{});
  EXPECT_EQ(a.status, SessionStatus::kAccepted);
  EXPECT_THROW(apply_feedback(a, Feedback::reject(), NullRefiner{}), std::logic_error);
  EXPECT_THROW(start_session("x", AttributeTuple{0, 0, 0, 0, 0}, 1, 5), std::invalid_argument);
}

TEST(Session, GenerationIsDeterministicAndReplayable) {
  const TinyWorld w;
  DialogueSession s = start_session("s", AttributeTuple{2, 3, 0, 1, 1}, 1234, 4);
  for (int k = 0; k < 3; ++k) {
    next_round(s, w.ctx(true));
    apply_feedback(s, Feedback::correction(Field::kColor, k), NullRefiner{});
  }
  for (const auto& r : s.rounds) {
    ASSERT_TRUE(r.alt_seed.has_value());
    ASSERT_TRUE(r.alt_image.has_value());
  }
  EXPECT_TRUE(replay_matches(s, w.ctx(true)));
  DialogueSession tampered = s;
  tampered.rounds[1].seed ^= 1;
  EXPECT_FALSE(replay_matches(tampered, w.ctx(true)));

  const Generation g = generate_round(w.ctx(), s.rounds[1].prompt, 2, s.rounds[1].seed, &s.rounds[0],
                                      s.rounds[1].steps);
  EXPECT_EQ(max_abs_diff(g.latent, s.rounds[1].latent), 0.0);
  EXPECT_THROW(generate_round(w.ctx(), s.rounds[1].prompt, 2, 1, &s.rounds[0], NoiseSteps{71, 10}),
               std::out_of_range);
}

TEST(Session, UnmatchedUserAbandonsWithPenaltyRound) {
  const TinyWorld w;
  const SimulatedUser user{AttributeTuple{2, 7, 2, 3, 3}, 3};
  const SessionResult r = run_session(user, AttributeTuple{0, 0, 0, 0, 1}, 3, w.ctx(), 5);
  if (!r.accepted) {
    EXPECT_EQ(r.rounds_to_accept, 4);
    EXPECT_EQ(r.transcript.rounds.size(), 3u);
    EXPECT_EQ(r.transcript.status, SessionStatus::kAbandoned);
  } else {
    EXPECT_EQ(r.rounds_to_accept, static_cast<int>(r.transcript.rounds.size()));
  }
}

// --- evaluation -------------------------------------------------------------

double binomial_two_sided(int k, int n) {
  // Direct sum over the tail with exact binomial coefficients.
  auto pmf = [n](int i) {
    long double c = 1.0L;
    for (int j = 1; j <= i; ++j) c = c * (n - i + j) / j;
    return c / std::pow(2.0L, n);
  };
  const int lo = std::min(k, n - k);
  long double tail = 0.0L;
  for (int i = 0; i <= lo; ++i) tail += pmf(i);
  return static_cast<double>(std::min<long double>(1.0L, 2.0L * tail));
}

TEST(SignTest, MatchesBinomialOracle) {
  for (int n = 1; n <= 60; n += 7) {
    for (int wins = 0; wins <= n; ++wins) {
      std::vector<double> a, b;
      for (int i = 0; i < n; ++i) {
        a.push_back(i < wins ? 1.0 : 3.0);
        b.push_back(2.0);
      }
      a.push_back(5.0);  // one tie
      b.push_back(5.0);
      const SignTest t = sign_test(a, b);
      ASSERT_EQ(t.wins, wins);
      ASSERT_EQ(t.losses, n - wins);
      ASSERT_EQ(t.ties, 1);
      ASSERT_NEAR(t.p_value, binomial_two_sided(wins, n), 1e-12) << n << " " << wins;
    }
  }
  EXPECT_EQ(sign_test({1.0}, {1.0}).p_value, 1.0);
  EXPECT_THROW(sign_test({1.0}, {}), std::invalid_argument);
}

TEST(DialogueRecords, WalkCorrectsOneFieldPerRound) {
  const auto records = make_dialogue_records(30, 10, 3);
  ASSERT_FALSE(records.empty());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    EXPECT_EQ(r.target, render(r.prompt));
    if (r.round == 1) {
      EXPECT_FALSE(r.previous.has_value());
      continue;
    }
    ASSERT_GT(i, 0u);
    const auto& prev = records[i - 1];
    EXPECT_EQ(prev.dialogue, r.dialogue);
    EXPECT_EQ(prev.round + 1, r.round);
    EXPECT_EQ(mismatch_count(prev.prompt, r.prompt), 1);
    ASSERT_TRUE(r.previous.has_value());
    EXPECT_EQ(*r.previous, prev.target);
  }
  EXPECT_EQ(make_dialogue_records(5, 4, 9).size(), make_dialogue_records(5, 4, 9).size());
  EXPECT_THROW(make_dialogue_records(1, 0, 1), std::invalid_argument);
}

TEST(Evaluation, SameConfigFacesSameUsers) {
  const TinyWorld w;
  EvalConfig cfg;
  cfg.sessions = 3;
  cfg.max_rounds = 2;
  const EvalSummary a = evaluate_sessions(w.ctx(), cfg);
  const EvalSummary b = evaluate_sessions(w.ctx(), cfg);
  ASSERT_EQ(a.sessions.size(), 3u);
  double rounds = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.sessions[i].target, b.sessions[i].target);
    EXPECT_EQ(a.sessions[i].seed, b.sessions[i].seed);
    EXPECT_EQ(a.sessions[i].rounds, b.sessions[i].rounds);
    EXPECT_GE(a.sessions[i].round1_diversity, 0.0);
    rounds += a.sessions[i].rounds;
  }
  EXPECT_NEAR(a.mean_rounds, rounds / 3.0, 1e-12);
  cfg.diversity_candidates = 1;
  EXPECT_THROW(evaluate_sessions(w.ctx(), cfg), std::invalid_argument);
}

}  // namespace
}  // namespace coadapt
