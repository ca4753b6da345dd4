// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Simulated-user evaluation: seeded session batches, per-session metrics,
// the paired sign test and synthetic dialogue datasets.

#pragma once

#include <cstdint>
#include <vector>

#include "coadapt/dialogue.hpp"
#include "coadapt/trainer.hpp"

namespace coadapt {

struct EvalConfig {
  int sessions = 100;
  int max_rounds = 10;
  /// Candidates sampled in round 1 for the batch diversity score.
  int diversity_candidates = 4;
  std::uint64_t seed = 99;
};

struct SessionMetrics {
  AttributeTuple target;
  AttributeTuple initial;
  std::uint64_t seed = 0;
  int rounds = 0;  // max_rounds + 1 when abandoned
  bool accepted = false;
  double round1_diversity = 0.0;
  /// Mean cosine of consecutive rounds' features; NaN for one-round sessions.
  double consecutive_cosine = 0.0;
  double final_preference = 0.0;
};

struct EvalSummary {
  std::vector<SessionMetrics> sessions;
  double mean_rounds = 0.0;
  double acceptance = 0.0;
  double mean_round1_diversity = 0.0;
  /// Averaged over all consecutive pairs, not per session.
  double mean_consecutive_cosine = 0.0;
  double mean_final_preference = 0.0;
};

/// Session i draws (target, initial prompt, session seed) from one stream
/// seeded by cfg.seed, so two models evaluated with the same config face the
/// same users.
EvalSummary evaluate_sessions(const GenerationContext& ctx, const EvalConfig& cfg);

struct SignTest {
  int wins = 0;    // a < b
  int losses = 0;  // a > b
  int ties = 0;
  /// Two-sided exact binomial p-value over the non-tied pairs.
  double p_value = 1.0;
};

/// Paired sign test of a against b, where smaller is better.
SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b);

/// Dialogues whose simulated user corrects one field per round, walking a
/// random initial prompt to a random target. Targets are clean renders.
std::vector<FinetuneRecord> make_dialogue_records(int dialogues, int max_rounds, std::uint64_t seed);

}  // namespace coadapt
