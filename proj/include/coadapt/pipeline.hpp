// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end workflows shared by the command-line tool and the acceptance
// suite: dataset generation, pretraining, preference training, reward
// fine-tuning and checkpoint bundles.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "coadapt/config.hpp"
#include "coadapt/lora.hpp"

namespace coadapt {

/// Progress sink; receives short human-readable lines.
using Logger = std::function<void(const std::string&)>;

/// Every tuple of the attribute space with its clean render.
std::vector<TrainingExample> render_corpus();

struct DatagenOptions {
  int pairs = 6000;
  int dialogues = 400;
  int max_rounds = 10;
  std::uint64_t seed = 1;
};

struct DatagenSummary {
  std::size_t pair_lines = 0;
  std::size_t dialogue_lines = 0;
  std::size_t images = 0;
};

/// Writes <dir>/pairs.jsonl, <dir>/dialogues.jsonl and the PNGs they
/// reference under <dir>/images/. Identical renders share one file.
DatagenSummary write_datasets(const std::filesystem::path& dir, const DatagenOptions& options);

/// Autoencoder then diffusion pretraining on the render corpus.
DenoiserModel pretrain_denoiser(const PipelineConfig& config, const Logger& log = {});

PreferenceModel train_preference_model(const PipelineConfig& config, const std::vector<PreferencePair>& pairs,
                                       const Logger& log = {});

struct FinetuneResult {
  DenoiserModel model;
  AdapterSet adapters;
  std::vector<StepReport> reports;
};

/// Reward fine-tuning of a copy of `base`; `base` itself is left untouched.
/// Batches are drawn uniformly from `records` with the finetune seed.
FinetuneResult finetune_rewards(const PipelineConfig& config, const DenoiserModel& base,
                                const PreferenceModel& preference, const std::vector<FinetuneRecord>& records,
                                const Logger& log = {});

/// Denoiser, optional adapters and optional preference model in one file.
struct ModelBundle {
  DenoiserModel model;
  AdapterSet adapters;
  std::optional<PreferenceModel> preference;
};

void save_bundle(const std::filesystem::path& file, const DenoiserModel& model, const AdapterSet* adapters,
                 const PreferenceModel* preference);
ModelBundle load_bundle(const std::filesystem::path& file);

}  // namespace coadapt
