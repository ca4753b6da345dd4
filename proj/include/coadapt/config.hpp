// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline configuration file. Every section and every key is optional and
// falls back to the built-in default; unknown keys are rejected.
//
// {
//   "model":       {"latent_channels", "width", "hidden", "time_dim", "blocks", "seed"},
//   "schedule":    {"steps", "beta_start", "beta_end", "grid"},
//   "autoencoder": {"steps", "batch", "lr", "seed"},
//   "diffusion":   {"steps", "batch", "lr", "max_round", "seed"},
//   "preference":  {"channels", "width", "logits", "adapter_rank", "adapter_alpha",
//                   "use_adapters", "epochs", "batch", "lr", "seed"},
//   "adapters":    {"rank", "alpha", "seed"},
//   "finetune":    {"lr", "noise_lr", "batch", "group_size", "steps", "reward_scale",
//                   "clip_eps", "mode", "ppo_epochs", "policy_sigma",
//                   "mask": {"div", "cons", "mi"}, "normalized_consistency",
//                   "noise_phase", "multi_round_weight", "lr_decay", "seed"},
//   "eval":        {"sessions", "max_rounds", "diversity_candidates", "seed"}
// }

#pragma once

#include <cstdint>
#include <filesystem>

#include "coadapt/denoiser.hpp"
#include "coadapt/evaluation.hpp"
#include "coadapt/preference.hpp"
#include "coadapt/records.hpp"
#include "coadapt/trainer.hpp"

namespace coadapt {

struct ScheduleConfig {
  int steps = 70;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int grid = 1000;

  NoiseSchedule build() const { return NoiseSchedule::linear(steps, beta_start, beta_end, grid); }
};

struct AdapterConfig {
  std::size_t rank = 4;
  double alpha = 4.0;
  std::uint64_t seed = 11;
};

struct PipelineConfig {
  DenoiserConfig model;
  std::uint64_t model_seed = 0;
  ScheduleConfig schedule;
  AutoencoderTrainConfig autoencoder;
  DiffusionTrainConfig diffusion;
  PreferenceConfig preference_model;
  PreferenceTrainConfig preference;
  std::uint64_t preference_seed = 3;
  AdapterConfig adapters;
  TrainerConfig finetune;
  EvalConfig eval;
};

/// Throws FormatError on unknown keys, wrong types or invalid values.
PipelineConfig pipeline_config_from_json(const Json& j);
Json to_json(const PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::filesystem::path& file);

}  // namespace coadapt
