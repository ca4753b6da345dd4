// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/rewards.hpp"

#include <cmath>
#include <stdexcept>

namespace coadapt {

RewardWeights reward_schedule(int round, RewardMask mask) {
  if (round < 0) throw std::invalid_argument("reward_schedule: negative round " + std::to_string(round));
  const double t = static_cast<double>(round);
  RewardWeights w;
  w.round = round;
  w.div = mask.div ? std::exp(-kDiversityDecay * t) : 0.0;
  w.cons = mask.cons ? 1.0 - std::exp(-kConsistencyRate * t) : 0.0;
  w.mi = mask.mi ? 0.5 * std::exp(-kPreferenceDecay * t) : 0.0;
  return w;
}

RewardBreakdown combine_rewards(int round, double r_div, double r_cons, double r_mi, RewardMask mask) {
  if (!std::isfinite(r_div) || !std::isfinite(r_cons) || !std::isfinite(r_mi)) {
    throw NumericError("combine_rewards: non-finite reward");
  }
  RewardBreakdown out;
  out.weights = reward_schedule(round, mask);
  out.r_div = r_div;
  out.r_cons = r_cons;
  out.r_mi = r_mi;
  out.total = out.weights.div * r_div + out.weights.cons * r_cons + out.weights.mi * r_mi;
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm feature");
  return dot / std::sqrt(na * nb);
}

double diversity(const std::vector<FeatureVector>& features) {
  const std::size_t n = features.size();
  if (n < 2) throw std::invalid_argument("diversity: need at least two features");
  double acc = 0.0;
  // cos is symmetric, so each unordered pair stands for two ordered ones.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) acc += 2.0 * (1.0 - cosine(features[i], features[j]));
  return acc / static_cast<double>(n * (n - 1));
}

double consistency(const std::vector<FeatureVector>& sequence, bool normalized) {
  if (sequence.size() < 2) throw std::invalid_argument("consistency: need at least two features");
  double acc = 0.0;
  for (std::size_t t = 0; t + 1 < sequence.size(); ++t) acc += cosine(sequence[t], sequence[t + 1]);
  return normalized ? acc / static_cast<double>(sequence.size() - 1) : acc;
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("cosine: shape mismatch");
  return div(sum(mul(a, b)), sqrt(mul(sum(mul(a, a)), sum(mul(b, b)))));
}

Tensor diversity(const std::vector<Tensor>& features) {
  const std::size_t n = features.size();
  if (n < 2) throw std::invalid_argument("diversity: need at least two features");
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) acc = add(acc, cosine(features[i], features[j]));
  // mean over ordered pairs of (1 - cos) = 1 - 2 * sum_{i<j} cos / (n (n - 1))
  return add_scalar(scale(acc, -2.0 / static_cast<double>(n * (n - 1))), 1.0);
}

Tensor consistency(const std::vector<Tensor>& sequence, bool normalized) {
  if (sequence.size() < 2) throw std::invalid_argument("consistency: need at least two features");
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t t = 0; t + 1 < sequence.size(); ++t) acc = add(acc, cosine(sequence[t], sequence[t + 1]));
  return normalized ? scale(acc, 1.0 / static_cast<double>(sequence.size() - 1)) : acc;
}

std::vector<double> leave_one_out_diversity(const std::vector<FeatureVector>& features) {
  const std::size_t n = features.size();
  if (n < 2) throw std::invalid_argument("leave_one_out_diversity: need at least two feature vectors");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = 1.0 - cosine(features[i], features[j]);
      out[i] += d;
      out[j] += d;
    }
  }
  for (double& v : out) v /= static_cast<double>(n - 1);
  return out;
}

}  // namespace coadapt
