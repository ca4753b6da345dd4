// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/dialogue.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace coadapt {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_context(const GenerationContext& ctx) {
  if (ctx.model == nullptr || ctx.schedule == nullptr) {
    throw std::invalid_argument("generation context needs a model and a schedule");
  }
}

RewardBreakdown round_rewards(const GenerationContext& ctx, const RoundRecord& rec, const RoundRecord* previous,
                              const std::vector<double>* alt_features) {
  const double r_div = alt_features != nullptr ? diversity({rec.features, *alt_features}) : 0.0;
  const double r_cons = previous != nullptr ? consistency({previous->features, rec.features}) : 0.0;
  const double r_mi = ctx.preference != nullptr ? ctx.preference->score(rec.prompt, rec.image) : 0.0;
  return combine_rewards(rec.index, r_div, r_cons, r_mi);
}

}  // namespace

PromptState refine_prompt(const PromptRefiner& refiner, const PromptState& state, const Feedback& feedback) {
  PromptState next = state;
  switch (feedback.kind) {
    case Feedback::Kind::kAccept:
    case Feedback::Kind::kReject:
      break;
    case Feedback::Kind::kAttributeCorrection:
      next.current = state.current.with(feedback.field, feedback.value);
      break;
    case Feedback::Kind::kFreeText:
      if (auto refined = refiner.refine(state.current, feedback.text)) {
        if (!refined->valid()) throw std::invalid_argument("refiner returned an invalid attribute tuple");
        next.current = *refined;
      }
      break;
  }
  next.history.emplace_back(feedback, next.current);
  return next;
}

std::pair<Tensor, Tensor> embed_prompt(const PromptEmbedder& embedder, const AttributeTuple& prompt, int round) {
  return {embedder.embed(prompt), round_condition(embedder, prompt, round)};
}

std::string_view status_name(SessionStatus status) {
  switch (status) {
    case SessionStatus::kActive:
      return "active";
    case SessionStatus::kAccepted:
      return "accepted";
    case SessionStatus::kAbandoned:
      return "abandoned";
  }
  return "active";
}

std::optional<SessionStatus> parse_status(std::string_view name) {
  for (auto s : {SessionStatus::kActive, SessionStatus::kAccepted, SessionStatus::kAbandoned}) {
    if (status_name(s) == name) return s;
  }
  return std::nullopt;
}

std::uint64_t round_seed(std::uint64_t session_seed, int round) {
  return splitmix64(session_seed ^ splitmix64(static_cast<std::uint64_t>(round)));
}

NoiseSteps draw_noise_steps(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jitter(-5, 5);
  NoiseSteps s;
  s.tau1 = 40 + jitter(rng);
  s.tau2 = 25 + jitter(rng);
  return s;
}

Generation generate_round(const GenerationContext& ctx, const AttributeTuple& prompt, int round, std::uint64_t seed,
                          const RoundRecord* previous, NoiseSteps steps) {
  check_context(ctx);
  NoGradGuard no_grad;
  const DenoiserModel& model = *ctx.model;
  const NoiseSchedule& schedule = *ctx.schedule;
  const PromptEmbedder& emb = model.embedder();
  const Conditioning c2 = make_conditioning(emb, prompt, round);
  std::mt19937_64 rng(seed);
  Tensor z;
  if (previous == nullptr) {
    z = Tensor::randn(model.config().latent_shape(), rng);
    z = model.denoise_range(schedule, z, schedule.steps, 0, c2, ctx.adapters, StepMode::kDeterministic);
  } else {
    if (steps.tau1 < 1 || steps.tau2 < 1 || steps.tau1 > schedule.steps || steps.tau2 > schedule.steps) {
      throw std::out_of_range("next round: noise steps must lie in [1, " + std::to_string(schedule.steps) + "]");
    }
    const Conditioning c1 = make_conditioning(emb, prompt, round_condition(emb, previous->prompt, previous->index));
    Tensor eps1 = Tensor::randn(model.config().latent_shape(), rng);
    Tensor eps2 = Tensor::randn(model.config().latent_shape(), rng);
    z = forward_diffuse(schedule, previous->latent, steps.tau1, eps1);
    z = model.denoise_range(schedule, z, steps.tau1, 0, c1, ctx.adapters, StepMode::kDeterministic);
    z = forward_diffuse(schedule, z, steps.tau2, eps2);
    z = model.denoise_range(schedule, z, steps.tau2, 0, c2, ctx.adapters, StepMode::kDeterministic);
  }
  return {z, model.decode_image(z)};
}

DialogueSession start_session(std::string id, const AttributeTuple& prompt, std::uint64_t seed, int max_rounds) {
  if (!prompt.valid()) throw std::invalid_argument("start_session: invalid prompt");
  if (max_rounds < 1) throw std::invalid_argument("start_session: max_rounds must be >= 1");
  DialogueSession s;
  s.id = std::move(id);
  s.seed = seed;
  s.max_rounds = max_rounds;
  s.prompt.current = prompt;
  return s;
}

const RoundRecord& next_round(DialogueSession& session, const GenerationContext& ctx,
                              std::optional<NoiseSteps> steps) {
  if (session.status != SessionStatus::kActive) throw std::logic_error("next_round: session is not active");
  if (static_cast<int>(session.rounds.size()) >= session.max_rounds) {
    throw std::logic_error("next_round: round budget exhausted");
  }
  RoundRecord rec;
  rec.index = static_cast<int>(session.rounds.size()) + 1;
  rec.prompt = session.prompt.current;
  rec.seed = round_seed(session.seed, rec.index);
  const RoundRecord* previous = session.rounds.empty() ? nullptr : &session.rounds.back();
  if (previous != nullptr) rec.steps = steps.value_or(draw_noise_steps(rec.seed));
  Generation g = generate_round(ctx, rec.prompt, rec.index, rec.seed, previous, rec.steps);
  rec.latent = g.latent;
  rec.image = g.image;
  rec.features = ctx.model->extract_features(g.latent);
  std::vector<double> alt_features;
  if (ctx.with_alternative) {
    rec.alt_seed = rec.seed ^ 0x5bd1e995ULL;
    Generation alt = generate_round(ctx, rec.prompt, rec.index, *rec.alt_seed, previous, rec.steps);
    rec.alt_image = alt.image;
    alt_features = ctx.model->extract_features(alt.latent);
  }
  rec.rewards = round_rewards(ctx, rec, previous, ctx.with_alternative ? &alt_features : nullptr);
  session.rounds.push_back(std::move(rec));
  return session.rounds.back();
}

void apply_feedback(DialogueSession& session, const Feedback& feedback, const PromptRefiner& refiner) {
  if (session.status != SessionStatus::kActive) throw std::logic_error("feedback: session is not active");
  if (session.rounds.empty()) throw std::logic_error("feedback: no round to respond to");
  if (feedback.kind == Feedback::Kind::kAttributeCorrection) {
    const FieldRange r = field_range(feedback.field);
    if (feedback.value < r.lo || feedback.value > r.hi) {
      throw std::invalid_argument("feedback: value " + std::to_string(feedback.value) + " out of range for " +
                                  std::string(field_name(feedback.field)));
    }
  }
  PromptState next = refine_prompt(refiner, session.prompt, feedback);
  session.prompt = std::move(next);
  session.rounds.back().feedback = feedback;
  if (feedback.kind == Feedback::Kind::kAccept) {
    session.status = SessionStatus::kAccepted;
  } else if (static_cast<int>(session.rounds.size()) >= session.max_rounds) {
    session.status = SessionStatus::kAbandoned;
  }
}

SessionResult run_session(const SimulatedUser& user, const AttributeTuple& initial, int max_rounds,
                          const GenerationContext& ctx, std::uint64_t seed, std::string id) {
  SessionResult out;
  out.transcript = start_session(std::move(id), initial, seed, max_rounds);
  const NullRefiner refiner;
  while (out.transcript.status == SessionStatus::kActive) {
    const RoundRecord& rec = next_round(out.transcript, ctx);
    apply_feedback(out.transcript, user_feedback(user, rec.image), refiner);
  }
  out.accepted = out.transcript.status == SessionStatus::kAccepted;
  out.rounds_to_accept = out.accepted ? static_cast<int>(out.transcript.rounds.size()) : max_rounds + 1;
  return out;
}

bool replay_matches(const DialogueSession& session, const GenerationContext& ctx) {
  // Chain through regenerated latents so a stored latent cannot mask drift.
  std::optional<RoundRecord> previous;
  for (const RoundRecord& rec : session.rounds) {
    const RoundRecord* prev = previous ? &*previous : nullptr;
    const Generation g = generate_round(ctx, rec.prompt, rec.index, rec.seed, prev, rec.steps);
    if (!(g.image == rec.image)) return false;
    if (rec.latent.numel() != 0 && !std::ranges::equal(g.latent.data(), rec.latent.data())) return false;
    if (rec.alt_seed) {
      const Generation alt = generate_round(ctx, rec.prompt, rec.index, *rec.alt_seed, prev, rec.steps);
      if (!rec.alt_image || !(alt.image == *rec.alt_image)) return false;
    }
    previous = rec;
    previous->latent = g.latent;
  }
  return true;
}

}  // namespace coadapt
