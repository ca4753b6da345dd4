// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Diversity, consistency and preference rewards and their round-dependent
// weighting.

#pragma once

#include <span>
#include <vector>

#include "coadapt/tensor.hpp"

namespace coadapt {

inline constexpr double kDiversityDecay = 0.15;
inline constexpr double kConsistencyRate = 0.1;
inline constexpr double kPreferenceDecay = 0.075;

struct RewardWeights {
  int round = 0;
  double div = 1.0;
  double cons = 0.0;
  double mi = 0.5;
};

/// Which reward terms participate. A disabled term has its weight forced to 0.
struct RewardMask {
  bool div = true;
  bool cons = true;
  bool mi = true;
};

/// lambda_div = exp(-0.15 t), lambda_cons = 1 - exp(-0.1 t),
/// lambda_mi = 0.5 exp(-0.075 t). Throws std::invalid_argument for t < 0.
RewardWeights reward_schedule(int round, RewardMask mask = {});

struct RewardBreakdown {
  RewardWeights weights;
  double r_div = 0.0;
  double r_cons = 0.0;
  double r_mi = 0.0;
  double total = 0.0;
};

/// Weighted sum under reward_schedule(round, mask). Throws NumericError for
/// non-finite inputs.
RewardBreakdown combine_rewards(int round, double r_div, double r_cons, double r_mi, RewardMask mask = {});

using FeatureVector = std::vector<double>;

/// Throws NumericError when either vector has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

/// Mean of (1 - cos) over ordered pairs i != j. Needs at least two vectors.
double diversity(const std::vector<FeatureVector>& features);

/// Sum of cos(f_t, f_{t+1}) over consecutive pairs, or their mean when
/// `normalized`. Needs at least two vectors.
double consistency(const std::vector<FeatureVector>& sequence, bool normalized = false);

// Differentiable counterparts over [F] feature tensors.
Tensor cosine(const Tensor& a, const Tensor& b);
Tensor diversity(const std::vector<Tensor>& features);
Tensor consistency(const std::vector<Tensor>& sequence, bool normalized = false);

/// Per-member mean of 1 - cos to the other members of the set. The mean of
/// the result equals diversity(features). Needs at least two members.
std::vector<double> leave_one_out_diversity(const std::vector<FeatureVector>& features);

}  // namespace coadapt
