// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-round generation sessions: prompt refinement from feedback, noise
// re-injection between rounds, transcripts and simulated-user runs.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coadapt/denoiser.hpp"
#include "coadapt/lora.hpp"
#include "coadapt/preference.hpp"
#include "coadapt/rewards.hpp"
#include "coadapt/world.hpp"

namespace coadapt {

struct PromptState {
  AttributeTuple current;
  std::vector<std::pair<Feedback, AttributeTuple>> history;
};

/// Turns free-text feedback into a new tuple. Returning nullopt keeps the
/// current tuple.
class PromptRefiner {
 public:
  virtual ~PromptRefiner() = default;
  virtual std::optional<AttributeTuple> refine(const AttributeTuple& current, const std::string& text) const = 0;
};

/// Keeps free text verbatim in the history and leaves the tuple alone.
class NullRefiner final : public PromptRefiner {
 public:
  std::optional<AttributeTuple> refine(const AttributeTuple&, const std::string&) const override {
    return std::nullopt;
  }
};

/// Corrections override one field and leave the rest; accept and reject keep
/// the tuple. Throws std::invalid_argument for an out-of-range correction or
/// an invalid tuple from the refiner.
PromptState refine_prompt(const PromptRefiner& refiner, const PromptState& state, const Feedback& feedback);

/// psi(P) and the round condition psi(P) + enc(t).
std::pair<Tensor, Tensor> embed_prompt(const PromptEmbedder& embedder, const AttributeTuple& prompt, int round);

enum class SessionStatus : std::uint8_t { kActive, kAccepted, kAbandoned };
std::string_view status_name(SessionStatus status);
std::optional<SessionStatus> parse_status(std::string_view name);

struct NoiseSteps {
  int tau1 = 40;
  int tau2 = 25;
};

struct RoundRecord {
  int index = 1;
  AttributeTuple prompt;
  std::uint64_t seed = 0;
  NoiseSteps steps;  // unused in round 1
  Tensor latent;     // z_0 of the shown image
  SpriteImage image;
  std::vector<double> features;
  RewardBreakdown rewards;
  std::optional<Feedback> feedback;
  // Second candidate for A/B preference collection.
  std::optional<std::uint64_t> alt_seed;
  std::optional<SpriteImage> alt_image;
  std::optional<Choice> choice;
};

struct DialogueSession {
  std::string id;
  std::uint64_t seed = 0;
  int max_rounds = 10;
  SessionStatus status = SessionStatus::kActive;
  PromptState prompt;
  std::vector<RoundRecord> rounds;
};

/// Frozen models used for generation. `adapters` and `preference` may be null.
struct GenerationContext {
  const DenoiserModel* model = nullptr;
  const AdapterSet* adapters = nullptr;
  const NoiseSchedule* schedule = nullptr;
  const PreferenceModel* preference = nullptr;
  /// Produce a second candidate per round for A/B choices.
  bool with_alternative = false;
};

/// Seed of round `round` in a session seeded with `session_seed`.
std::uint64_t round_seed(std::uint64_t session_seed, int round);
/// Default noise steps: 40 and 25, each jittered by up to 5 from `seed`.
NoiseSteps draw_noise_steps(std::uint64_t seed);

struct Generation {
  Tensor latent;
  SpriteImage image;
};

/// One image for round `round`. Round 1 samples from pure noise; later rounds
/// noise `previous` to tau1, denoise under the previous round's condition,
/// re-noise to tau2 and denoise under the current one. Deterministic in
/// (seed, prompts, steps, weights).
Generation generate_round(const GenerationContext& ctx, const AttributeTuple& prompt, int round, std::uint64_t seed,
                          const RoundRecord* previous, NoiseSteps steps);

DialogueSession start_session(std::string id, const AttributeTuple& prompt, std::uint64_t seed, int max_rounds);

/// Generates the next round from the session's current prompt and appends
/// it. Steps default to draw_noise_steps of the round seed. Throws
/// std::logic_error on an inactive or full session and std::out_of_range for
/// steps outside [1, T].
const RoundRecord& next_round(DialogueSession& session, const GenerationContext& ctx,
                              std::optional<NoiseSteps> steps = std::nullopt);

/// Records feedback on the latest round, closes the session on accept,
/// abandons it when the round budget is spent, and otherwise refines the
/// prompt for the next round.
void apply_feedback(DialogueSession& session, const Feedback& feedback, const PromptRefiner& refiner);

struct SessionResult {
  DialogueSession transcript;
  bool accepted = false;
  /// Rounds used; max_rounds + 1 when abandoned.
  int rounds_to_accept = 0;
};

SessionResult run_session(const SimulatedUser& user, const AttributeTuple& initial, int max_rounds,
                          const GenerationContext& ctx, std::uint64_t seed, std::string id = "sim");

/// Regenerates every round (and alternative) from the stored prompts, seeds
/// and steps. Returns true when all images match bit-for-bit.
bool replay_matches(const DialogueSession& session, const GenerationContext& ctx);

}  // namespace coadapt
