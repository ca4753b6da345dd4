// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Learned prompt/image preference scorer. The score is the mean of L output
// logits; training uses the pairwise logistic loss on score differences.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "coadapt/lora.hpp"
#include "coadapt/optim.hpp"
#include "coadapt/tensor.hpp"
#include "coadapt/world.hpp"

namespace coadapt {

class Checkpoint;

struct PreferenceConfig {
  std::size_t channels = 16;  // conv encoder channels
  std::size_t width = 64;     // fusion width
  std::size_t logits = 8;
  std::size_t adapter_rank = 64;  // capped at the projection's smaller side
  double adapter_alpha = 16.0;
  /// With adapters on, training touches only adapter factors and the head.
  bool use_adapters = true;
};

struct PreferencePair {
  AttributeTuple prompt;
  SpriteImage positive;
  SpriteImage negative;
};

class PreferenceModel {
 public:
  PreferenceModel() = default;
  PreferenceModel(PreferenceConfig config, std::uint64_t seed);

  const PreferenceConfig& config() const { return config_; }

  /// [L] logits for a [16, 16, 3] image tensor. Differentiable in the image.
  Tensor logits(const AttributeTuple& prompt, const Tensor& image) const;
  /// Scalar mean of the logits.
  Tensor score_tensor(const AttributeTuple& prompt, const Tensor& image) const;
  double score(const AttributeTuple& prompt, const SpriteImage& image) const;

  /// Image encoder, prompt table and fusion projections.
  ParameterList base_parameters() const;
  ParameterList adapter_parameters() const;
  ParameterList head_parameters() const;
  /// What train_preference updates under the current config.
  ParameterList trainable_parameters() const;
  ParameterList parameters() const;

  void save(Checkpoint& ckpt, const std::string& prefix = "preference/") const;
  static PreferenceModel load(const Checkpoint& ckpt, const std::string& prefix = "preference/");

 private:
  PreferenceConfig config_;
  Tensor conv1_k_, conv1_b_, conv2_k_, conv2_b_;
  Tensor table_;                   // [21 x width]
  Tensor w_img_, w_txt_;           // [width x 16*channels], [width x width]
  LoraAdapter img_adapter_, txt_adapter_;
  Tensor head_w_, head_b_;         // [L x width], [L]
};

/// -log sigmoid(score_pos - score_neg).
Tensor pair_loss(const PreferenceModel& model, const PreferencePair& pair);

struct PreferenceTrainConfig {
  int epochs = 20;
  std::size_t batch = 16;
  double lr = 3e-4;
  std::uint64_t seed = 0;
};

/// Adam on the pairwise loss. Returns the mean training loss per epoch.
/// Throws std::invalid_argument on an empty dataset.
std::vector<double> train_preference(PreferenceModel& model, const std::vector<PreferencePair>& pairs,
                                     const PreferenceTrainConfig& config);

/// Fraction of pairs with score_pos > score_neg; ties count as failures.
double evaluate(const PreferenceModel& model, const std::vector<PreferencePair>& pairs);

/// A random prompt and a copy differing in 1 to 5 fields.
std::pair<AttributeTuple, AttributeTuple> make_mismatched_tuples(std::mt19937_64& rng);
/// Positive renders the prompt; negative renders make_mismatched_tuples' second tuple.
PreferencePair make_preference_pair(std::mt19937_64& rng);
std::vector<PreferencePair> make_preference_pairs(std::size_t count, std::uint64_t seed);

}  // namespace coadapt
