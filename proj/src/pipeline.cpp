// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/pipeline.hpp"

#include <cstdio>
#include <random>
#include <set>

#include "coadapt/checkpoint.hpp"
#include "coadapt/io.hpp"

namespace coadapt {

namespace {

void say(const Logger& log, const std::string& line) {
  if (log) log(line);
}

std::string image_name(const AttributeTuple& t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/t%03zu.png", t.index());
  return buf;
}

std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<TrainingExample> render_corpus() {
  std::vector<TrainingExample> out;
  out.reserve(AttributeTuple::kSpaceSize);
  for (std::size_t i = 0; i < AttributeTuple::kSpaceSize; ++i) {
    const AttributeTuple t = AttributeTuple::from_index(i);
    out.push_back({t, render(t)});
  }
  return out;
}

DatagenSummary write_datasets(const std::filesystem::path& dir, const DatagenOptions& options) {
  if (options.pairs < 0 || options.dialogues < 0 || options.max_rounds < 1) {
    throw std::invalid_argument("datagen: counts must be non-negative and max_rounds >= 1");
  }
  std::filesystem::create_directories(dir / "images");
  std::set<std::size_t> written;
  DatagenSummary summary;
  auto ensure = [&](const AttributeTuple& t) {
    const std::string name = image_name(t);
    if (written.insert(t.index()).second) {
      write_png(dir / name, render(t));
      ++summary.images;
    }
    return name;
  };

  std::mt19937_64 rng(options.seed);
  std::string pairs;
  for (int i = 0; i < options.pairs; ++i) {
    const auto [prompt, other] = make_mismatched_tuples(rng);
    PairLine line;
    line.prompt = prompt;
    line.positive = ensure(prompt);
    line.negative = ensure(other);
    pairs += to_json(line).dump() + "\n";
    ++summary.pair_lines;
  }
  write_file_atomic(dir / "pairs.jsonl", pairs);

  std::string dialogues;
  std::string previous;
  for (const FinetuneRecord& rec : make_dialogue_records(options.dialogues, options.max_rounds, options.seed + 1)) {
    DialogueLine line;
    line.dialogue = rec.dialogue;
    line.round = rec.round;
    line.prompt = rec.prompt;
    line.image = ensure(rec.prompt);
    line.previous = rec.round > 1 ? previous : "";
    previous = line.image;
    dialogues += to_json(line).dump() + "\n";
    ++summary.dialogue_lines;
  }
  write_file_atomic(dir / "dialogues.jsonl", dialogues);
  return summary;
}

DenoiserModel pretrain_denoiser(const PipelineConfig& config, const Logger& log) {
  DenoiserModel model(config.model, config.model_seed);
  const auto corpus = render_corpus();
  std::vector<SpriteImage> images;
  images.reserve(corpus.size());
  for (const auto& ex : corpus) images.push_back(ex.image);

  say(log, "autoencoder: " + std::to_string(config.autoencoder.steps) + " steps");
  const auto ae = train_autoencoder(model, images, config.autoencoder);
  if (!ae.empty()) say(log, "autoencoder: final loss " + fixed(ae.back(), 6));

  say(log, "diffusion: " + std::to_string(config.diffusion.steps) + " steps");
  const auto df = train_diffusion(model, config.schedule.build(), corpus, config.diffusion);
  if (!df.empty()) {
    // Report a trailing average; single-step losses are noisy.
    const std::size_t k = std::min<std::size_t>(df.size(), 500);
    double acc = 0.0;
    for (std::size_t i = df.size() - k; i < df.size(); ++i) acc += df[i];
    say(log, "diffusion: mean loss over last " + std::to_string(k) + " steps " + fixed(acc / k, 5));
  }
  return model;
}

PreferenceModel train_preference_model(const PipelineConfig& config, const std::vector<PreferencePair>& pairs,
                                       const Logger& log) {
  PreferenceModel model(config.preference_model, config.preference_seed);
  const auto losses = train_preference(model, pairs, config.preference);
  for (std::size_t e = 0; e < losses.size(); ++e) say(log, "preference: epoch " + std::to_string(e + 1) + " loss " + fixed(losses[e]));
  return model;
}

FinetuneResult finetune_rewards(const PipelineConfig& config, const DenoiserModel& base,
                                const PreferenceModel& preference, const std::vector<FinetuneRecord>& records,
                                const Logger& log) {
  if (records.empty()) throw std::invalid_argument("finetune: no dialogue records");
  const TrainerConfig& tc = config.finetune;
  DenoiserModel model = base.clone();
  AdapterSet adapters = make_attention_adapters(model.config().blocks, model.config().width, config.adapters.rank,
                                                config.adapters.alpha, config.adapters.seed);
  Trainer trainer(model, adapters, preference, config.schedule.build(), tc);
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
  FinetuneResult out;
  out.reports.reserve(static_cast<std::size_t>(tc.steps));
  for (int s = 0; s < tc.steps; ++s) {
    std::vector<FinetuneRecord> batch;
    for (std::size_t b = 0; b < tc.batch; ++b) batch.push_back(records[pick(rng)]);
    out.reports.push_back(trainer.step(batch));
    if ((s + 1) % 50 == 0) {
      double noise = 0.0, multi = 0.0, reward = 0.0;
      for (std::size_t i = out.reports.size() - 50; i < out.reports.size(); ++i) {
        noise += out.reports[i].l_noise;
        multi += out.reports[i].l_multi;
        reward += out.reports[i].rewards.total;
      }
      say(log, "finetune: step " + std::to_string(s + 1) + " l_noise " + fixed(noise / 50) + " l_multi " +
                   fixed(multi / 50) + " reward " + fixed(reward / 50));
    }
  }
  out.model = trainer.model();
  out.adapters = trainer.adapters();
  return out;
}

void save_bundle(const std::filesystem::path& file, const DenoiserModel& model, const AdapterSet* adapters,
                 const PreferenceModel* preference) {
  Checkpoint ckpt;
  model.save(ckpt);
  if (adapters != nullptr) save_adapters(*adapters, ckpt);
  if (preference != nullptr) preference->save(ckpt);
  save_checkpoint(ckpt, file);
}

ModelBundle load_bundle(const std::filesystem::path& file) {
  const Checkpoint ckpt = load_checkpoint(file);
  ModelBundle out;
  out.model = DenoiserModel::load(ckpt);
  out.adapters = load_adapters(ckpt);
  if (ckpt.contains("preference/config")) out.preference = PreferenceModel::load(ckpt);
  return out;
}

}  // namespace coadapt
