// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/evaluation.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace coadapt {

EvalSummary evaluate_sessions(const GenerationContext& ctx, const EvalConfig& cfg) {
  if (cfg.sessions < 1 || cfg.max_rounds < 1 || cfg.diversity_candidates < 2) {
    throw std::invalid_argument("evaluate_sessions: sessions, max_rounds >= 1 and candidates >= 2 required");
  }
  EvalSummary out;
  std::mt19937_64 rng(cfg.seed);
  double cons_sum = 0.0;
  int cons_n = 0;
  for (int i = 0; i < cfg.sessions; ++i) {
    SessionMetrics m;
    m.target = AttributeTuple::random(rng);
    m.initial = AttributeTuple::random(rng);
    m.seed = rng();
    const SessionResult r =
        run_session(SimulatedUser{m.target, cfg.max_rounds}, m.initial, cfg.max_rounds, ctx, m.seed, "eval");
    m.rounds = r.rounds_to_accept;
    m.accepted = r.accepted;

    const auto& rounds = r.transcript.rounds;
    double local = 0.0;
    for (std::size_t k = 1; k < rounds.size(); ++k) {
      const double c = cosine(rounds[k - 1].features, rounds[k].features);
      local += c;
      cons_sum += c;
      ++cons_n;
    }
    m.consecutive_cosine =
        rounds.size() > 1 ? local / static_cast<double>(rounds.size() - 1) : std::numeric_limits<double>::quiet_NaN();
    if (ctx.preference != nullptr) m.final_preference = ctx.preference->score(rounds.back().prompt, rounds.back().image);

    std::vector<FeatureVector> candidates;
    const std::uint64_t s1 = round_seed(m.seed, 1);
    for (int j = 0; j < cfg.diversity_candidates; ++j) {
      const Generation g = generate_round(ctx, m.initial, 1, s1 + static_cast<std::uint64_t>(j), nullptr, {});
      candidates.push_back(ctx.model->extract_features(g.latent));
    }
    m.round1_diversity = diversity(candidates);

    out.mean_rounds += m.rounds;
    out.acceptance += m.accepted ? 1.0 : 0.0;
    out.mean_round1_diversity += m.round1_diversity;
    out.mean_final_preference += m.final_preference;
    out.sessions.push_back(m);
  }
  const double n = cfg.sessions;
  out.mean_rounds /= n;
  out.acceptance /= n;
  out.mean_round1_diversity /= n;
  out.mean_final_preference /= n;
  out.mean_consecutive_cosine = cons_n > 0 ? cons_sum / cons_n : 0.0;
  return out;
}

SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("sign_test: samples must be paired");
  SignTest t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) {
      ++t.wins;
    } else if (a[i] > b[i]) {
      ++t.losses;
    } else {
      ++t.ties;
    }
  }
  const int n = t.wins + t.losses;
  if (n == 0) return t;
  // P(X <= min(wins, losses)) under Binomial(n, 1/2), doubled.
  const int k = std::min(t.wins, t.losses);
  double tail = 0.0;
  for (int i = 0; i <= k; ++i) {
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  }
  t.p_value = std::min(1.0, 2.0 * tail);
  return t;
}

std::vector<FinetuneRecord> make_dialogue_records(int dialogues, int max_rounds, std::uint64_t seed) {
  if (dialogues < 0 || max_rounds < 1) throw std::invalid_argument("make_dialogue_records: bad sizes");
  std::mt19937_64 rng(seed);
  std::vector<FinetuneRecord> out;
  for (int d = 0; d < dialogues; ++d) {
    const AttributeTuple target = AttributeTuple::random(rng);
    AttributeTuple current = AttributeTuple::random(rng);
    std::optional<SpriteImage> previous;
    for (int round = 1;; ++round) {
      FinetuneRecord rec;
      rec.dialogue = "d" + std::to_string(d);
      rec.round = round;
      rec.prompt = current;
      rec.target = render(current);
      rec.previous = previous;
      previous = rec.target;
      out.push_back(std::move(rec));
      if (current == target || round >= max_rounds) break;
      for (Field f : kFields) {
        if (current.get(f) != target.get(f)) {
          current = current.with(f, target.get(f));
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace coadapt
