// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "coadapt/checkpoint.hpp"
#include "coadapt/lora.hpp"

namespace coadapt {
namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Randomizes B so the adapter is no longer a no-op.
void perturb(LoraAdapter& adapter, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.3);
  for (double& v : adapter.b.mutable_data()) v = g(rng);
}

TEST(Lora, ZeroInitReproducesBaseExactly) {
  std::mt19937_64 rng(1);
  const Tensor w = Tensor::randn({6, 6}, rng);
  const LoraAdapter adapter = init_adapter(6, 2, 9);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = Tensor::randn({6, 3}, rng);
    const Tensor base = matmul(w, x);
    const Tensor adapted = apply(adapter, w, x);
    ASSERT_EQ(max_abs_diff(base, adapted), 0.0);
  }
  EXPECT_EQ(max_abs_diff(merge(adapter, w), w), 0.0);
}

TEST(Lora, FactoredMatchesMergedPerSite) {
  std::mt19937_64 rng(2);
  AdapterSet set = make_attention_adapters(2, 8, 4, 4.0, 3);
  for (auto& [key, adapter] : set) {
    perturb(adapter, rng);
    const Tensor w = Tensor::randn({8, 8}, rng);
    const Tensor merged = merge(adapter, w);
    for (int i = 0; i < 100; ++i) {
      const Tensor x = Tensor::randn({8, 5}, rng);
      ASSERT_LT(max_abs_diff(apply(adapter, w, x), matmul(merged, x)), 1e-10) << site_name(key);
    }
  }
}

TEST(Lora, DeltaIsScaledLowRankProduct) {
  std::mt19937_64 rng(4);
  LoraAdapter adapter = init_adapter(5, 7, 3, 11, 6.0);
  perturb(adapter, rng);
  EXPECT_DOUBLE_EQ(adapter.scaling(), 2.0);
  const Tensor d = adapter.delta();
  ASSERT_EQ(d.shape(), (Shape{5, 7}));
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) acc += adapter.b.data()[r * 3 + k] * adapter.a.data()[k * 7 + c];
      ASSERT_NEAR(d.data()[r * 7 + c], 2.0 * acc, 1e-12);
    }
  }
}

TEST(Lora, RankAboveWidthRejected) {
  EXPECT_THROW(init_adapter(4, 5, 0), std::invalid_argument);
  EXPECT_NO_THROW(init_adapter(4, 4, 0));
}

TEST(Lora, ProjectWithoutAdapterIsPlainMatmul) {
  std::mt19937_64 rng(5);
  const Tensor w = Tensor::randn({3, 4}, rng);
  const Tensor x = Tensor::randn({4, 2}, rng);
  EXPECT_EQ(max_abs_diff(project(w, x, nullptr), matmul(w, x)), 0.0);
}

TEST(Lora, RewardStepAscendsAlongGradient) {
  std::mt19937_64 rng(6);
  const Tensor w = Tensor::randn({4, 4}, rng);
  const Tensor x = Tensor::randn({4, 1}, rng);
  LoraAdapter adapter = init_adapter(4, 2, 7);
  adapter.a.set_requires_grad(true);
  adapter.b.set_requires_grad(true);
  auto reward = [&] { return sum(apply(adapter, w, x)); };
  double before = 0.0;
  {
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor r = reward();
    before = r.item();
    tape.backward(r);
  }
  reward_step(adapter, 1e-2);
  NoGradGuard no_grad;
  EXPECT_GT(reward().item(), before);
}

TEST(Lora, RewardStepWithoutGradientThrows) {
  LoraAdapter adapter = init_adapter(4, 2, 7);
  EXPECT_THROW(reward_step(adapter, 1e-2), std::logic_error);
}

TEST(AdapterSet, DuplicateSiteRejected) {
  AdapterSet set;
  set.add({ProjectionSite::kQuery, 0}, init_adapter(4, 2, 1));
  EXPECT_THROW(set.add({ProjectionSite::kQuery, 0}, init_adapter(4, 2, 1)), std::invalid_argument);
  EXPECT_NE(set.find({ProjectionSite::kQuery, 0}), nullptr);
  EXPECT_EQ(set.find({ProjectionSite::kKey, 0}), nullptr);
}

TEST(AdapterSet, CloneHasFreshStorage) {
  AdapterSet set = make_attention_adapters(1, 4, 2, 2.0, 1);
  AdapterSet copy = set.clone();
  copy.find({ProjectionSite::kValue, 0})->a.mutable_data()[0] += 1.0;
  EXPECT_NE(copy.find({ProjectionSite::kValue, 0})->a.data()[0], set.find({ProjectionSite::kValue, 0})->a.data()[0]);
}

TEST(AdapterSet, CheckpointRoundTrip) {
  std::mt19937_64 rng(9);
  AdapterSet set = make_attention_adapters(2, 6, 3, 5.0, 2);
  for (auto& [key, adapter] : set) perturb(adapter, rng);
  Checkpoint ckpt;
  save_adapters(set, ckpt);
  const Checkpoint decoded = decode_checkpoint(encode_checkpoint(ckpt));
  const AdapterSet back = load_adapters(decoded);
  ASSERT_EQ(back.size(), set.size());
  for (const auto& [key, adapter] : set) {
    const LoraAdapter* other = back.find(key);
    ASSERT_NE(other, nullptr);
    EXPECT_EQ(other->rank, adapter.rank);
    EXPECT_EQ(other->alpha, adapter.alpha);
    EXPECT_EQ(max_abs_diff(other->a, adapter.a), 0.0);
    EXPECT_EQ(max_abs_diff(other->b, adapter.b), 0.0);
  }
  EXPECT_TRUE(load_adapters(Checkpoint{}).empty());
}

}  // namespace
}  // namespace coadapt
