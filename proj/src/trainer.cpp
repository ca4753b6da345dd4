// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "coadapt/dialogue.hpp"

namespace coadapt {

namespace {

Tensor squared_error(const Tensor& a, const Tensor& b) {
  Tensor d = sub(a, b);
  return sum(mul(d, d));
}

std::uint32_t checksum_of(const ParameterList& params) {
  const auto tensors = tensors_of(params);
  return checksum(tensors);
}

}  // namespace

// ---------------------------------------------------------------------------
// Pretraining

std::vector<double> train_autoencoder(DenoiserModel& model, const std::vector<SpriteImage>& images,
                                      const AutoencoderTrainConfig& config) {
  if (images.empty()) throw std::invalid_argument("train_autoencoder: no images");
  std::vector<Tensor> data;
  data.reserve(images.size());
  for (const auto& img : images) data.push_back(img.to_tensor());

  // Train on raw latents; the scale is fitted afterwards.
  model.set_latent_scale(1.0);
  const ParameterList params = model.autoencoder_parameters();
  set_trainable(params, true);
  Adam opt(params, config.lr);
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(config.steps));
  for (int s = 0; s < config.steps; ++s) {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t b = 0; b < config.batch; ++b) {
      const Tensor& x = data[pick(rng)];
      Tensor d = sub(model.decode(model.encode(x)), x);
      acc = add(acc, mean(mul(d, d)));
    }
    Tensor loss = scale(acc, 1.0 / static_cast<double>(config.batch));
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    curve.push_back(loss.item());
  }
  set_trainable(params, false);

  NoGradGuard no_grad;
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& x : data) {
    for (double v : model.encode(x).data()) ss += v * v;
    n += model.config().latent_shape()[0] * model.config().latent_shape()[1] * model.config().latent_channels;
  }
  model.set_latent_scale(1.0 / std::sqrt(ss / static_cast<double>(n)));
  return curve;
}

std::vector<double> train_diffusion(DenoiserModel& model, const NoiseSchedule& schedule,
                                    const std::vector<TrainingExample>& data, const DiffusionTrainConfig& config) {
  if (data.empty()) throw std::invalid_argument("train_diffusion: no examples");
  if (config.max_round < 1) throw std::invalid_argument("train_diffusion: max_round must be >= 1");
  std::vector<Tensor> latents;
  {
    NoGradGuard no_grad;
    for (const auto& ex : data) latents.push_back(model.encode_image(ex.image));
  }
  const ParameterList params = model.base_parameters();
  set_trainable(params, true);
  Adam opt(params, config.lr);
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> tau_dist(1, schedule.steps);
  std::uniform_int_distribution<int> round_dist(1, config.max_round);
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(config.steps));
  for (int s = 0; s < config.steps; ++s) {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t b = 0; b < config.batch; ++b) {
      const std::size_t i = pick(rng);
      const int tau = tau_dist(rng);
      Tensor eps = Tensor::randn(latents[i].shape(), rng);
      Tensor z = forward_diffuse(schedule, latents[i], tau, eps);
      const Conditioning cond = make_conditioning(model.embedder(), data[i].prompt, round_dist(rng));
      Tensor d = sub(model.predict_noise(z, tau, cond), eps);
      acc = add(acc, mean(mul(d, d)));
    }
    Tensor loss = scale(acc, 1.0 / static_cast<double>(config.batch));
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    curve.push_back(loss.item());
  }
  set_trainable(params, false);
  return curve;
}

// ---------------------------------------------------------------------------
// Fine-tuning

std::string_view update_mode_name(UpdateMode mode) {
  return mode == UpdateMode::kPpoClip ? "ppo-clip" : "plain-gradient";
}

std::optional<UpdateMode> parse_update_mode(std::string_view name) {
  if (name == "ppo-clip") return UpdateMode::kPpoClip;
  if (name == "plain-gradient") return UpdateMode::kPlainGradient;
  return std::nullopt;
}

void TrainerConfig::validate() const {
  if (!(lr > 0.0) || !(noise_lr > 0.0)) throw std::invalid_argument("trainer: learning rates must be positive");
  if (batch == 0 || group_size == 0) throw std::invalid_argument("trainer: batch and group size must be positive");
  if (steps < 0) throw std::invalid_argument("trainer: steps must be non-negative");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("trainer: clip epsilon must be in (0, 1)");
  if (!(reward_scale >= 0.0) || !std::isfinite(reward_scale)) {
    throw std::invalid_argument("trainer: reward scale must be finite and non-negative");
  }
  if (ppo_epochs < 1) throw std::invalid_argument("trainer: ppo epochs must be >= 1");
  if (!(policy_sigma > 0.0)) throw std::invalid_argument("trainer: policy sigma must be positive");
  if (!(multi_round_weight >= 0.0) || !std::isfinite(multi_round_weight)) {
    throw std::invalid_argument("trainer: multi-round weight must be finite and non-negative");
  }
}

Trainer::Trainer(DenoiserModel model, AdapterSet adapters, PreferenceModel preference, NoiseSchedule schedule,
                 TrainerConfig config)
    : model_(std::move(model)),
      adapters_(std::move(adapters)),
      preference_(std::move(preference)),
      schedule_(std::move(schedule)),
      config_(config),
      adapter_opt_(adapters_.parameters(), config.lr),
      base_opt_(model_.base_parameters(), config.noise_lr),
      rng_(config.seed) {
  config_.validate();
  schedule_.validate();
}

RolloutState Trainer::rollout(const std::vector<FinetuneRecord>& batch) {
  if (batch.empty()) throw std::invalid_argument("trainer: empty batch");
  NoGradGuard no_grad;
  RolloutState state;
  state.tau = std::uniform_int_distribution<int>(schedule_.finetune_lo, schedule_.finetune_hi)(rng_);
  const Shape shape = model_.config().latent_shape();
  for (std::size_t g = 0; g < batch.size(); ++g) {
    const FinetuneRecord& rec = batch[g];
    std::vector<double> prev;
    if (rec.previous) prev = model_.extract_features(model_.encode_image(*rec.previous));
    const Conditioning cond = make_conditioning(model_.embedder(), rec.prompt, rec.round);
    for (std::size_t k = 0; k < config_.group_size; ++k) {
      Tensor z = Tensor::randn(shape, rng_);
      z = model_.denoise_range(schedule_, z, schedule_.steps, state.tau, cond, &adapters_,
                               StepMode::kDeterministic);
      state.records.push_back(&rec);
      state.group.push_back(g);
      state.z_tau.push_back(z);
      state.action_noise.push_back(Tensor::randn(shape, rng_, config_.policy_sigma));
      state.previous_features.push_back(prev);
    }
  }
  return state;
}

Trainer::SampleOutputs Trainer::final_step(const RolloutState& state) const {
  SampleOutputs out;
  for (std::size_t i = 0; i < state.z_tau.size(); ++i) {
    const FinetuneRecord& rec = *state.records[i];
    const Conditioning cond = make_conditioning(model_.embedder(), rec.prompt, rec.round);
    Tensor eps = model_.predict_noise(state.z_tau[i], state.tau, cond, &adapters_);
    out.mean.push_back(reverse_step(schedule_, state.z_tau[i], eps, state.tau, StepMode::kDeterministic, nullptr));
    out.x0.push_back(predict_x0(schedule_, state.z_tau[i], eps, state.tau));
  }
  return out;
}

Tensor Trainer::total_reward(const RolloutState& state, const std::vector<Tensor>& x0, RewardBreakdown* breakdown,
                             std::vector<RewardComponents>* components) const {
  const std::size_t n = x0.size();
  std::vector<Tensor> feats;
  feats.reserve(n);
  for (const auto& x : x0) feats.push_back(model_.feature_tensor(x));

  // Group diversity, shared by every member of the group.
  const std::size_t groups = state.group.empty() ? 0 : state.group.back() + 1;
  std::vector<Tensor> group_div(groups, Tensor::scalar(0.0));
  if (config_.group_size >= 2) {
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<Tensor> members;
      for (std::size_t i = 0; i < n; ++i)
        if (state.group[i] == g) members.push_back(feats[i]);
      group_div[g] = diversity(members);
    }
  }

  // Leave-one-out credit: the group mean of these equals the group score.
  std::vector<double> loo(n, 0.0);
  if (components != nullptr && config_.group_size >= 2) {
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<std::size_t> idx;
      std::vector<FeatureVector> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (state.group[i] != g) continue;
        idx.push_back(i);
        const auto d = feats[i].data();
        members.emplace_back(d.begin(), d.end());
      }
      const auto scores = leave_one_out_diversity(members);
      for (std::size_t k = 0; k < idx.size(); ++k) loo[idx[k]] = scores[k];
    }
  }

  Tensor acc = Tensor::scalar(0.0);
  double sum_div = 0.0, sum_cons = 0.0, sum_mi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const FinetuneRecord& rec = *state.records[i];
    const RewardWeights w = reward_schedule(rec.round, config_.mask);
    Tensor r_div = group_div[state.group[i]];
    Tensor r_cons = Tensor::scalar(0.0);
    if (!state.previous_features[i].empty()) {
      const auto& prev = state.previous_features[i];
      Tensor prev_t({prev.size()}, prev);
      r_cons = consistency(std::vector<Tensor>{prev_t, feats[i]}, config_.normalized_consistency);
    }
    Tensor r_mi = preference_.score_tensor(rec.prompt, model_.decode(x0[i]));
    Tensor total = add(add(scale(r_div, w.div), scale(r_cons, w.cons)), scale(r_mi, w.mi));
    if (components != nullptr) components->push_back({loo[i], r_cons.item(), r_mi.item()});
    acc = add(acc, total);
    sum_div += r_div.item();
    sum_cons += r_cons.item();
    sum_mi += r_mi.item();
  }
  if (breakdown != nullptr) {
    const double inv = 1.0 / static_cast<double>(n);
    *breakdown = combine_rewards(state.records.front()->round, sum_div * inv, sum_cons * inv, sum_mi * inv,
                                 config_.mask);
    breakdown->total = acc.item() * inv;
  }
  return scale(acc, 1.0 / static_cast<double>(n));
}

Tensor Trainer::reward_objective(const RolloutState& state, RewardBreakdown* breakdown) const {
  const SampleOutputs out = final_step(state);
  return scale(total_reward(state, out.x0, breakdown, nullptr), config_.reward_scale);
}

Tensor Trainer::noise_loss(const RolloutState& state) const {
  const SampleOutputs out = final_step(state);
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < out.x0.size(); ++i) {
    Tensor target;
    {
      NoGradGuard no_grad;
      target = model_.encode_image(state.records[i]->target);
    }
    acc = add(acc, squared_error(out.x0[i], target));
  }
  return scale(acc, 1.0 / static_cast<double>(out.x0.size()));
}

std::optional<Tensor> Trainer::follow_up_loss(const std::vector<FinetuneRecord>& batch) {
  const PromptEmbedder& emb = model_.embedder();
  const Shape shape = model_.config().latent_shape();
  Tensor acc = Tensor::scalar(0.0);
  std::size_t count = 0;
  for (const FinetuneRecord& rec : batch) {
    if (!rec.previous) continue;
    Tensor z_stage, z_next, eps2;
    int tau2 = 0;
    {
      NoGradGuard no_grad;
      // The renderer is exact, so the previous image determines its prompt.
      const AttributeTuple prev_prompt = perceive(*rec.previous);
      const NoiseSteps steps = draw_noise_steps(rng_());
      const Conditioning c1 = make_conditioning(emb, rec.prompt, round_condition(emb, prev_prompt, rec.round - 1));
      const Tensor eps1 = Tensor::randn(shape, rng_);
      eps2 = Tensor::randn(shape, rng_);
      z_stage = reinjected_latent(model_, schedule_, model_.encode_image(*rec.previous), steps.tau1, steps.tau2, c1,
                                  eps1, eps2, &adapters_);
      z_next = model_.encode_image(rec.target);
      tau2 = steps.tau2;
    }
    const Conditioning c2 = make_conditioning(emb, rec.prompt, rec.round);
    acc = add(acc, multi_round_loss(model_, schedule_, z_stage, z_next, tau2, eps2, c2, &adapters_));
    ++count;
  }
  if (count == 0) return std::nullopt;
  return scale(acc, 1.0 / static_cast<double>(count));
}

double Trainer::reward_phase_plain(const RolloutState& state, RewardBreakdown& breakdown) {
  Tape tape;
  Tape::Scope scope(tape);
  Tensor objective = reward_objective(state, &breakdown);
  adapter_opt_.zero_grad();
  tape.backward(objective);
  const double norm = grad_norm(adapter_opt_.params());
  if (!std::isfinite(norm)) throw NumericError("trainer: non-finite adapter gradient");
  adapter_opt_.step(+1.0);
  return norm;
}

double Trainer::reward_phase_ppo(const RolloutState& state, RewardBreakdown& breakdown) {
  const std::size_t n = state.z_tau.size();
  const double prev_bar = schedule_.alpha_bar(state.tau - 1);
  std::vector<Tensor> actions;
  std::vector<double> log_old;
  std::vector<RewardComponents> components;
  std::vector<RewardWeights> weights;
  {
    NoGradGuard no_grad;
    const SampleOutputs old = final_step(state);
    std::vector<Tensor> x0;
    for (std::size_t i = 0; i < n; ++i) {
      Tensor a = add(old.mean[i], state.action_noise[i]);
      // x0 implied by the sampled step output under the same noise estimate.
      Tensor eps_part = sub(old.mean[i], scale(old.x0[i], std::sqrt(prev_bar)));
      x0.push_back(scale(sub(a, eps_part), 1.0 / std::sqrt(prev_bar)));
      log_old.push_back(gaussian_log_prob(a, old.mean[i], config_.policy_sigma).item());
      actions.push_back(std::move(a));
    }
    total_reward(state, x0, &breakdown, &components);
    for (const FinetuneRecord* rec : state.records) weights.push_back(reward_schedule(rec->round, config_.mask));
  }
  const std::vector<double> adv = component_advantages(components, weights);
  double norm = 0.0;
  for (int epoch = 0; epoch < config_.ppo_epochs; ++epoch) {
    Tape tape;
    Tape::Scope scope(tape);
    const SampleOutputs cur = final_step(state);
    std::vector<Tensor> log_new;
    for (std::size_t i = 0; i < n; ++i) log_new.push_back(gaussian_log_prob(actions[i], cur.mean[i], config_.policy_sigma));
    Tensor objective = scale(clipped_surrogate(log_new, log_old, adv, config_.clip_eps), config_.reward_scale);
    adapter_opt_.zero_grad();
    tape.backward(objective);
    const double g = grad_norm(adapter_opt_.params());
    if (!std::isfinite(g)) throw NumericError("trainer: non-finite adapter gradient");
    if (epoch == 0) norm = g;
    adapter_opt_.step(+1.0);
  }
  return norm;
}

StepReport Trainer::step(const std::vector<FinetuneRecord>& batch) {
  if (batch.empty()) throw std::invalid_argument("trainer: empty batch");
  const ParameterList adapter_params = adapters_.parameters();
  const ParameterList base_params = model_.base_parameters();
  const RolloutState state = rollout(batch);
  if (config_.lr_decay && config_.steps > 0) {
    const double keep = std::max(0.0, 1.0 - static_cast<double>(step_) / config_.steps);
    adapter_opt_.set_lr(config_.lr * keep);
    base_opt_.set_lr(config_.noise_lr * keep);
  }

  StepReport report;
  report.step = step_;
  report.tau = state.tau;

  // Reward phase: adapters only.
  report.base_before_reward = checksum_of(base_params);
  if (config_.reward_scale > 0.0) {
    set_trainable(adapter_params, true);
    report.grad_norm_adapters = config_.mode == UpdateMode::kPpoClip ? reward_phase_ppo(state, report.rewards)
                                                                     : reward_phase_plain(state, report.rewards);
    set_trainable(adapter_params, false);
  } else {
    NoGradGuard no_grad;
    reward_objective(state, &report.rewards);
  }
  report.l_reward = config_.reward_scale * report.rewards.total;
  report.base_after_reward = checksum_of(base_params);

  // Noise phase: base weights only.
  report.adapters_before_noise = checksum_of(adapter_params);
  if (config_.noise_phase) {
    set_trainable(base_params, true);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = noise_loss(state);
    report.l_noise = loss.item();
    if (config_.multi_round_weight > 0.0) {
      if (const auto multi = follow_up_loss(batch)) {
        report.l_multi = multi->item();
        loss = add(loss, scale(*multi, config_.multi_round_weight));
      }
    }
    base_opt_.zero_grad();
    tape.backward(loss);
    report.grad_norm_base = grad_norm(base_params);
    if (!std::isfinite(report.grad_norm_base)) throw NumericError("trainer: non-finite base gradient");
    base_opt_.step();
    set_trainable(base_params, false);
  } else {
    NoGradGuard no_grad;
    report.l_noise = noise_loss(state).item();
  }
  report.adapters_after_noise = checksum_of(adapter_params);
  if (!std::isfinite(report.l_noise) || !std::isfinite(report.l_reward)) {
    throw NumericError("trainer: non-finite loss at step " + std::to_string(step_));
  }
  ++step_;
  return report;
}

// ---------------------------------------------------------------------------
// PPO pieces

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

Tensor clipped_surrogate(const std::vector<Tensor>& log_new, const std::vector<double>& log_old,
                         const std::vector<double>& advantages, double eps) {
  if (log_new.size() != log_old.size() || log_new.size() != advantages.size() || log_new.empty()) {
    throw std::invalid_argument("clipped_surrogate: mismatched or empty inputs");
  }
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < log_new.size(); ++i) {
    Tensor ratio = exp(add_scalar(log_new[i], -log_old[i]));
    const double r = ratio.item();
    const double a = advantages[i];
    const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps);
    if (r * a <= clipped * a) {
      acc = add(acc, scale(ratio, a));
    } else {
      acc = add_scalar(acc, clipped * a);
    }
  }
  return scale(acc, 1.0 / static_cast<double>(log_new.size()));
}

std::vector<double> component_advantages(const std::vector<RewardComponents>& components,
                                         const std::vector<RewardWeights>& weights) {
  if (components.size() != weights.size()) throw std::invalid_argument("component_advantages: size mismatch");
  const std::size_t n = components.size();
  std::vector<double> div(n), cons(n), mi(n);
  for (std::size_t i = 0; i < n; ++i) {
    div[i] = components[i].div;
    cons[i] = components[i].cons;
    mi[i] = components[i].mi;
  }
  const auto zd = normalize_advantages(div);
  const auto zc = normalize_advantages(cons);
  const auto zm = normalize_advantages(mi);
  std::vector<double> total(n);
  for (std::size_t i = 0; i < n; ++i) total[i] = weights[i].div * zd[i] + weights[i].cons * zc[i] + weights[i].mi * zm[i];
  return normalize_advantages(total);
}

std::vector<double> normalize_advantages(const std::vector<double>& values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  const double mu = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / n);
  if (sd < 1e-12) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mu) / sd;
  return out;
}

Tensor gaussian_log_prob(const Tensor& action, const Tensor& mean, double sigma) {
  return scale(squared_error(action, mean), -1.0 / (2.0 * sigma * sigma));
}

// ---------------------------------------------------------------------------
// Multi-round losses

Tensor reinjected_latent(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& z_prev,
                         int tau1, int tau2, const Conditioning& c1, const Tensor& eps1, const Tensor& eps2,
                         const AdapterSet* adapters) {
  if (tau1 < 1 || tau2 < 1 || tau1 > schedule.steps || tau2 > schedule.steps) {
    throw std::out_of_range("reinjected_latent: noise steps must lie in [1, T]");
  }
  Tensor z = forward_diffuse(schedule, z_prev, tau1, eps1);
  z = model.denoise_range(schedule, z, tau1, 0, c1, adapters, StepMode::kDeterministic);
  return forward_diffuse(schedule, z, tau2, eps2);
}

Tensor multi_round_loss(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& z_stage,
                        const Tensor& z_next, int tau2, const Tensor& eps, const Conditioning& c2,
                        const AdapterSet* adapters) {
  if (z_stage.shape() != z_next.shape()) throw ShapeError("multi_round_loss: latent shapes differ");
  Tensor target = forward_diffuse(schedule, z_next, tau2 - 1, eps);
  Tensor pred = model.denoise_step(schedule, z_stage, tau2, c2, adapters, StepMode::kDeterministic);
  return bce_loss(target, pred);
}

Tensor bce_loss(const Tensor& target, const Tensor& output) {
  if (target.shape() != output.shape()) throw ShapeError("bce_loss: shape mismatch");
  return sqrt(squared_error(target, output));
}

}  // namespace coadapt
