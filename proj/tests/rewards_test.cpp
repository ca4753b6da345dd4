// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "coadapt/rewards.hpp"

namespace coadapt {
namespace {

double oracle_cos(const FeatureVector& a, const FeatureVector& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / std::sqrt(na * nb));
}

// Brute force over ordered pairs.
double oracle_diversity(const std::vector<FeatureVector>& f) {
  double acc = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (i == j) continue;
      acc += 1.0 - oracle_cos(f[i], f[j]);
      ++pairs;
    }
  }
  return acc / pairs;
}

std::vector<FeatureVector> random_set(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<FeatureVector> out(n, FeatureVector(dim));
  for (auto& v : out)
    for (double& x : v) x = g(rng);
  return out;
}

TEST(RewardSchedule, KnownValues) {
  const RewardWeights w0 = reward_schedule(0);
  EXPECT_EQ(w0.div, 1.0);
  EXPECT_EQ(w0.cons, 0.0);
  EXPECT_EQ(w0.mi, 0.5);
  const RewardWeights w10 = reward_schedule(10);
  EXPECT_NEAR(w10.div, 0.22313016014842982, 1e-15);
  EXPECT_NEAR(w10.cons, 0.63212055882855767, 1e-15);
  EXPECT_NEAR(w10.mi, 0.23618327637050734, 1e-15);
}

TEST(RewardSchedule, MonotoneAndBounded) {
  RewardWeights prev = reward_schedule(0);
  for (int t = 1; t <= 200; ++t) {
    const RewardWeights w = reward_schedule(t);
    EXPECT_LT(w.div, prev.div);
    EXPECT_GT(w.cons, prev.cons);
    EXPECT_LT(w.mi, prev.mi);
    EXPECT_GT(w.div, 0.0);
    EXPECT_LT(w.cons, 1.0);
    EXPECT_GT(w.mi, 0.0);
    prev = w;
  }
  EXPECT_THROW(reward_schedule(-1), std::invalid_argument);
}

TEST(RewardSchedule, MaskForcesZero) {
  const RewardWeights w = reward_schedule(3, RewardMask{false, true, false});
  EXPECT_EQ(w.div, 0.0);
  EXPECT_EQ(w.mi, 0.0);
  EXPECT_GT(w.cons, 0.0);
}

TEST(CombineRewards, WeightedSum) {
  const RewardBreakdown b = combine_rewards(2, 0.4, 0.9, 3.0);
  const RewardWeights w = reward_schedule(2);
  EXPECT_DOUBLE_EQ(b.total, w.div * 0.4 + w.cons * 0.9 + w.mi * 3.0);
  EXPECT_EQ(b.r_cons, 0.9);
  const RewardBreakdown masked = combine_rewards(2, 0.4, 0.9, 3.0, RewardMask{true, true, false});
  EXPECT_DOUBLE_EQ(masked.total, w.div * 0.4 + w.cons * 0.9);
  EXPECT_THROW(combine_rewards(1, std::nan(""), 0, 0), NumericError);
  EXPECT_THROW(combine_rewards(1, 0, INFINITY, 0), NumericError);
}

TEST(Diversity, MatchesBruteForceOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> size(2, 8), dim(2, 32);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto f = random_set(rng, size(rng), dim(rng));
    ASSERT_NEAR(diversity(f), oracle_diversity(f), 1e-9);
  }
}

TEST(Diversity, IdenticalSetIsZeroAndOrthogonalIsOne) {
  const FeatureVector a{1, 2, 3};
  EXPECT_NEAR(diversity({a, a, a}), 0.0, 1e-15);
  EXPECT_NEAR(diversity({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), 1.0, 1e-15);
  EXPECT_THROW(diversity({a}), std::invalid_argument);
}

TEST(Diversity, ScaleInvariantAndPermutationInvariant) {
  std::mt19937_64 rng(3);
  auto f = random_set(rng, 5, 7);
  const double base = diversity(f);
  for (double& x : f[2]) x *= 13.0;
  EXPECT_NEAR(diversity(f), base, 1e-12);
  std::swap(f[0], f[4]);
  EXPECT_NEAR(diversity(f), base, 1e-12);
}

TEST(Consistency, MatchesConsecutiveCosineOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto f = random_set(rng, 2 + trial % 6, 3 + trial % 11);
    double sum = 0.0;
    for (std::size_t t = 0; t + 1 < f.size(); ++t) sum += oracle_cos(f[t], f[t + 1]);
    ASSERT_NEAR(consistency(f), sum, 1e-9);
    ASSERT_NEAR(consistency(f, true), sum / static_cast<double>(f.size() - 1), 1e-9);
  }
}

TEST(Cosine, ZeroNormThrows) {
  const FeatureVector z{0, 0, 0}, a{1, 0, 0};
  EXPECT_THROW(cosine(z, a), NumericError);
}

TEST(LeaveOneOutDiversity, MeanEqualsSetDiversity) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = random_set(rng, 2 + trial % 5, 6);
    const auto loo = leave_one_out_diversity(f);
    double mean = 0.0;
    for (double v : loo) mean += v;
    mean /= static_cast<double>(loo.size());
    ASSERT_NEAR(mean, diversity(f), 1e-12);
  }
}

TEST(LeaveOneOutDiversity, OutlierScoresHighest) {
  const std::vector<FeatureVector> f{{1, 0.01}, {1, -0.01}, {-1, 0.2}};
  const auto loo = leave_one_out_diversity(f);
  EXPECT_GT(loo[2], loo[0]);
  EXPECT_GT(loo[2], loo[1]);
}

TEST(TensorRewards, AgreeWithDoubleVersions) {
  std::mt19937_64 rng(21);
  const auto f = random_set(rng, 4, 9);
  std::vector<Tensor> t;
  for (const auto& v : f) t.emplace_back(Shape{v.size()}, v);
  EXPECT_NEAR(diversity(t).item(), diversity(f), 1e-12);
  EXPECT_NEAR(consistency(t).item(), consistency(f), 1e-12);
  EXPECT_NEAR(consistency(t, true).item(), consistency(f, true), 1e-12);
  EXPECT_NEAR(cosine(t[0], t[1]).item(), cosine(f[0], f[1]), 1e-12);
}

TEST(TensorRewards, DiversityGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::vector<Tensor> t;
  for (const auto& v : random_set(rng, 3, 5)) t.push_back(Tensor(Shape{v.size()}, v).set_requires_grad(true));
  const double err = grad_check([&] { return diversity(t); }, t[1], 1e-6);
  EXPECT_LT(err, 1e-6);
}

}  // namespace
}  // namespace coadapt
