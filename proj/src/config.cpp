// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/config.hpp"

#include "coadapt/io.hpp"

namespace coadapt {

namespace {

// Overwrites `out` when `key` is present.
void opt_int(const Json& j, std::string_view key, std::string_view what, int& out) {
  if (j.contains(std::string(key))) out = static_cast<int>(get_int(j, key, what));
}

void opt_size(const Json& j, std::string_view key, std::string_view what, std::size_t& out) {
  if (!j.contains(std::string(key))) return;
  const auto v = get_int(j, key, what);
  if (v < 0) throw FormatError(std::string(what) + "." + std::string(key) + ": must be non-negative");
  out = static_cast<std::size_t>(v);
}

void opt_number(const Json& j, std::string_view key, std::string_view what, double& out) {
  if (j.contains(std::string(key))) out = get_number(j, key, what);
}

void opt_bool(const Json& j, std::string_view key, std::string_view what, bool& out) {
  if (j.contains(std::string(key))) out = get_bool(j, key, what);
}

void opt_seed(const Json& j, std::string_view key, std::uint64_t& out) {
  if (j.contains(std::string(key))) out = seed_from_json(j[std::string(key)]);
}

void positive(bool ok, std::string_view what) {
  if (!ok) throw FormatError(std::string(what) + ": must be positive");
}

}  // namespace

PipelineConfig pipeline_config_from_json(const Json& j) {
  reject_unknown_keys(j, {"model", "schedule", "autoencoder", "diffusion", "preference", "adapters", "finetune", "eval"},
                      "config");
  PipelineConfig c;
  if (j.contains("model")) {
    const Json& m = j["model"];
    reject_unknown_keys(m, {"latent_channels", "width", "hidden", "time_dim", "blocks", "seed"}, "model");
    opt_size(m, "latent_channels", "model", c.model.latent_channels);
    opt_size(m, "width", "model", c.model.width);
    opt_size(m, "hidden", "model", c.model.hidden);
    opt_size(m, "time_dim", "model", c.model.time_dim);
    opt_int(m, "blocks", "model", c.model.blocks);
    opt_seed(m, "seed", c.model_seed);
    positive(c.model.latent_channels > 0 && c.model.width > 0 && c.model.hidden > 0 && c.model.time_dim > 0 &&
                 c.model.blocks > 0,
             "model sizes");
  }
  if (j.contains("schedule")) {
    const Json& s = j["schedule"];
    reject_unknown_keys(s, {"steps", "beta_start", "beta_end", "grid"}, "schedule");
    opt_int(s, "steps", "schedule", c.schedule.steps);
    opt_number(s, "beta_start", "schedule", c.schedule.beta_start);
    opt_number(s, "beta_end", "schedule", c.schedule.beta_end);
    opt_int(s, "grid", "schedule", c.schedule.grid);
    try {
      c.schedule.build();
    } catch (const std::exception& e) {
      throw FormatError(std::string("schedule: ") + e.what());
    }
  }
  if (j.contains("autoencoder")) {
    const Json& a = j["autoencoder"];
    reject_unknown_keys(a, {"steps", "batch", "lr", "seed"}, "autoencoder");
    opt_int(a, "steps", "autoencoder", c.autoencoder.steps);
    opt_size(a, "batch", "autoencoder", c.autoencoder.batch);
    opt_number(a, "lr", "autoencoder", c.autoencoder.lr);
    opt_seed(a, "seed", c.autoencoder.seed);
    positive(c.autoencoder.steps >= 0 && c.autoencoder.batch > 0 && c.autoencoder.lr > 0, "autoencoder");
  }
  if (j.contains("diffusion")) {
    const Json& d = j["diffusion"];
    reject_unknown_keys(d, {"steps", "batch", "lr", "max_round", "seed"}, "diffusion");
    opt_int(d, "steps", "diffusion", c.diffusion.steps);
    opt_size(d, "batch", "diffusion", c.diffusion.batch);
    opt_number(d, "lr", "diffusion", c.diffusion.lr);
    opt_int(d, "max_round", "diffusion", c.diffusion.max_round);
    opt_seed(d, "seed", c.diffusion.seed);
    positive(c.diffusion.steps >= 0 && c.diffusion.batch > 0 && c.diffusion.lr > 0 && c.diffusion.max_round > 0,
             "diffusion");
  }
  if (j.contains("preference")) {
    const Json& p = j["preference"];
    reject_unknown_keys(p,
                        {"channels", "width", "logits", "adapter_rank", "adapter_alpha", "use_adapters", "epochs",
                         "batch", "lr", "seed"},
                        "preference");
    opt_size(p, "channels", "preference", c.preference_model.channels);
    opt_size(p, "width", "preference", c.preference_model.width);
    opt_size(p, "logits", "preference", c.preference_model.logits);
    opt_size(p, "adapter_rank", "preference", c.preference_model.adapter_rank);
    opt_number(p, "adapter_alpha", "preference", c.preference_model.adapter_alpha);
    opt_bool(p, "use_adapters", "preference", c.preference_model.use_adapters);
    opt_int(p, "epochs", "preference", c.preference.epochs);
    opt_size(p, "batch", "preference", c.preference.batch);
    opt_number(p, "lr", "preference", c.preference.lr);
    opt_seed(p, "seed", c.preference_seed);
    positive(c.preference_model.channels > 0 && c.preference_model.width > 0 && c.preference_model.logits > 0 &&
                 c.preference.epochs >= 0 && c.preference.batch > 0 && c.preference.lr > 0,
             "preference");
  }
  if (j.contains("adapters")) {
    const Json& a = j["adapters"];
    reject_unknown_keys(a, {"rank", "alpha", "seed"}, "adapters");
    opt_size(a, "rank", "adapters", c.adapters.rank);
    opt_number(a, "alpha", "adapters", c.adapters.alpha);
    opt_seed(a, "seed", c.adapters.seed);
    positive(c.adapters.rank > 0 && c.adapters.alpha > 0, "adapters");
  }
  if (j.contains("finetune")) {
    const Json& f = j["finetune"];
    reject_unknown_keys(f,
                        {"lr", "noise_lr", "batch", "group_size", "steps", "reward_scale", "clip_eps", "mode",
                         "ppo_epochs", "policy_sigma", "mask", "normalized_consistency", "noise_phase", "multi_round_weight", "lr_decay", "seed"},
                        "finetune");
    TrainerConfig& t = c.finetune;
    opt_number(f, "lr", "finetune", t.lr);
    opt_number(f, "noise_lr", "finetune", t.noise_lr);
    opt_size(f, "batch", "finetune", t.batch);
    opt_size(f, "group_size", "finetune", t.group_size);
    opt_int(f, "steps", "finetune", t.steps);
    opt_number(f, "reward_scale", "finetune", t.reward_scale);
    opt_number(f, "clip_eps", "finetune", t.clip_eps);
    if (f.contains("mode")) {
      const auto mode = parse_update_mode(get_string(f, "mode", "finetune"));
      if (!mode) throw FormatError("finetune.mode: expected \"ppo-clip\" or \"plain-gradient\"");
      t.mode = *mode;
    }
    opt_int(f, "ppo_epochs", "finetune", t.ppo_epochs);
    opt_number(f, "policy_sigma", "finetune", t.policy_sigma);
    if (f.contains("mask")) {
      const Json& m = f["mask"];
      reject_unknown_keys(m, {"div", "cons", "mi"}, "finetune.mask");
      opt_bool(m, "div", "finetune.mask", t.mask.div);
      opt_bool(m, "cons", "finetune.mask", t.mask.cons);
      opt_bool(m, "mi", "finetune.mask", t.mask.mi);
    }
    opt_bool(f, "normalized_consistency", "finetune", t.normalized_consistency);
    opt_bool(f, "noise_phase", "finetune", t.noise_phase);
    opt_bool(f, "lr_decay", "finetune", t.lr_decay);
    opt_number(f, "multi_round_weight", "finetune", t.multi_round_weight);
    opt_seed(f, "seed", t.seed);
    try {
      t.validate();
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("finetune: ") + e.what());
    }
  }
  if (j.contains("eval")) {
    const Json& e = j["eval"];
    reject_unknown_keys(e, {"sessions", "max_rounds", "diversity_candidates", "seed"}, "eval");
    opt_int(e, "sessions", "eval", c.eval.sessions);
    opt_int(e, "max_rounds", "eval", c.eval.max_rounds);
    opt_int(e, "diversity_candidates", "eval", c.eval.diversity_candidates);
    opt_seed(e, "seed", c.eval.seed);
    positive(c.eval.sessions > 0 && c.eval.max_rounds > 0 && c.eval.diversity_candidates > 1, "eval");
  }
  return c;
}

Json to_json(const PipelineConfig& c) {
  const TrainerConfig& t = c.finetune;
  return {
      {"model",
       {{"latent_channels", c.model.latent_channels},
        {"width", c.model.width},
        {"hidden", c.model.hidden},
        {"time_dim", c.model.time_dim},
        {"blocks", c.model.blocks},
        {"seed", c.model_seed}}},
      {"schedule",
       {{"steps", c.schedule.steps},
        {"beta_start", c.schedule.beta_start},
        {"beta_end", c.schedule.beta_end},
        {"grid", c.schedule.grid}}},
      {"autoencoder",
       {{"steps", c.autoencoder.steps},
        {"batch", c.autoencoder.batch},
        {"lr", c.autoencoder.lr},
        {"seed", c.autoencoder.seed}}},
      {"diffusion",
       {{"steps", c.diffusion.steps},
        {"batch", c.diffusion.batch},
        {"lr", c.diffusion.lr},
        {"max_round", c.diffusion.max_round},
        {"seed", c.diffusion.seed}}},
      {"preference",
       {{"channels", c.preference_model.channels},
        {"width", c.preference_model.width},
        {"logits", c.preference_model.logits},
        {"adapter_rank", c.preference_model.adapter_rank},
        {"adapter_alpha", c.preference_model.adapter_alpha},
        {"use_adapters", c.preference_model.use_adapters},
        {"epochs", c.preference.epochs},
        {"batch", c.preference.batch},
        {"lr", c.preference.lr},
        {"seed", c.preference_seed}}},
      {"adapters", {{"rank", c.adapters.rank}, {"alpha", c.adapters.alpha}, {"seed", c.adapters.seed}}},
      {"finetune",
       {{"lr", t.lr},
        {"noise_lr", t.noise_lr},
        {"batch", t.batch},
        {"group_size", t.group_size},
        {"steps", t.steps},
        {"reward_scale", t.reward_scale},
        {"clip_eps", t.clip_eps},
        {"mode", update_mode_name(t.mode)},
        {"ppo_epochs", t.ppo_epochs},
        {"policy_sigma", t.policy_sigma},
        {"mask", {{"div", t.mask.div}, {"cons", t.mask.cons}, {"mi", t.mask.mi}}},
        {"normalized_consistency", t.normalized_consistency},
        {"noise_phase", t.noise_phase},
        {"lr_decay", t.lr_decay},
        {"multi_round_weight", t.multi_round_weight},
        {"seed", t.seed}}},
      {"eval",
       {{"sessions", c.eval.sessions},
        {"max_rounds", c.eval.max_rounds},
        {"diversity_candidates", c.eval.diversity_candidates},
        {"seed", c.eval.seed}}},
  };
}

PipelineConfig load_pipeline_config(const std::filesystem::path& file) {
  Json j;
  try {
    j = Json::parse(read_file(file));
  } catch (const Json::parse_error& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

}  // namespace coadapt
