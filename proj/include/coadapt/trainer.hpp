// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pretraining of the autoencoder and noise predictor, and the two-phase
// fine-tuning step: a reward phase that moves only the LoRA factors and a
// noise phase that moves only the base diffusion weights.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "coadapt/denoiser.hpp"
#include "coadapt/lora.hpp"
#include "coadapt/optim.hpp"
#include "coadapt/preference.hpp"
#include "coadapt/rewards.hpp"
#include "coadapt/world.hpp"

namespace coadapt {

// ---------------------------------------------------------------------------
// Pretraining

struct AutoencoderTrainConfig {
  int steps = 4000;
  std::size_t batch = 8;
  double lr = 3e-3;
  std::uint64_t seed = 0;
};

/// Reconstruction MSE on `images`, then sets the latent scale so encoded
/// latents have unit RMS. Returns the per-step loss.
std::vector<double> train_autoencoder(DenoiserModel& model, const std::vector<SpriteImage>& images,
                                      const AutoencoderTrainConfig& config);

struct TrainingExample {
  AttributeTuple prompt;
  SpriteImage image;
};

struct DiffusionTrainConfig {
  int steps = 24000;
  std::size_t batch = 8;
  double lr = 1e-3;
  /// Round indices for the condition token are drawn from [1, max_round].
  int max_round = 10;
  std::uint64_t seed = 0;
};

/// Noise-prediction MSE over uniformly drawn timesteps; updates the base
/// weights only. Returns the per-step loss.
std::vector<double> train_diffusion(DenoiserModel& model, const NoiseSchedule& schedule,
                                    const std::vector<TrainingExample>& data, const DiffusionTrainConfig& config);

// ---------------------------------------------------------------------------
// Reward fine-tuning

enum class UpdateMode : std::uint8_t { kPlainGradient, kPpoClip };

std::string_view update_mode_name(UpdateMode mode);
std::optional<UpdateMode> parse_update_mode(std::string_view name);

struct RewardComponents {
  double div = 0.0;
  double cons = 0.0;
  double mi = 0.0;
};

struct TrainerConfig {
  /// Adapter learning rate (reward phase).
  double lr = 3e-4;
  /// Base-weight learning rate (noise phase).
  double noise_lr = 1e-3;
  /// Distinct dialogue records per step.
  std::size_t batch = 4;
  /// Noise draws per record; diversity is measured within each group.
  std::size_t group_size = 4;
  int steps = 1000;
  /// Decay both learning rates linearly to zero over `steps`.
  bool lr_decay = true;
  double reward_scale = 1.0;
  double clip_eps = 0.2;
  UpdateMode mode = UpdateMode::kPpoClip;
  int ppo_epochs = 4;
  double policy_sigma = 0.1;
  RewardMask mask;
  bool normalized_consistency = false;
  bool noise_phase = true;
  /// Weight of the one-step reconstruction loss on reinjected follow-up
  /// rounds, added to the noise phase. Zero disables it.
  double multi_round_weight = 1.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// One round of a recorded dialogue. `previous` holds the image the dialogue
/// showed in the round before; consistency is measured against it.
struct FinetuneRecord {
  std::string dialogue;
  int round = 1;
  AttributeTuple prompt;
  SpriteImage target;
  std::optional<SpriteImage> previous;
};

struct StepReport {
  int step = 0;
  int tau = 0;
  double l_noise = 0.0;
  double l_multi = 0.0;  // mean over follow-up records; 0 when the batch has none
  double l_reward = 0.0;
  RewardBreakdown rewards;  // batch means; weights of the first record's round
  double grad_norm_adapters = 0.0;
  double grad_norm_base = 0.0;
  std::uint32_t base_before_reward = 0, base_after_reward = 0;
  std::uint32_t adapters_before_noise = 0, adapters_after_noise = 0;
};

/// Everything computed on a frozen rollout, so the same objective can be
/// re-evaluated after perturbing parameters.
struct RolloutState {
  int tau = 0;
  std::vector<const FinetuneRecord*> records;  // one per sample
  std::vector<std::size_t> group;              // group index per sample
  std::vector<Tensor> z_tau;                   // latent entering the final step
  std::vector<Tensor> action_noise;            // PPO exploration draws
  std::vector<std::vector<double>> previous_features;  // empty for round 1
};

class Trainer {
 public:
  Trainer(DenoiserModel model, AdapterSet adapters, PreferenceModel preference, NoiseSchedule schedule,
          TrainerConfig config);

  /// One step on `batch` (config.batch records). Throws std::invalid_argument
  /// on an empty batch and NumericError on a non-finite loss.
  StepReport step(const std::vector<FinetuneRecord>& batch);

  /// Draws tau in [T1, T2] and runs the no-grad prefix T .. tau + 1.
  RolloutState rollout(const std::vector<FinetuneRecord>& batch);

  /// reward_scale * mean per-sample R_total on a frozen rollout, evaluated
  /// through the final step with gradients reaching the adapters.
  Tensor reward_objective(const RolloutState& state, RewardBreakdown* breakdown = nullptr) const;
  /// Mean squared distance between predicted x0 and the target latents.
  Tensor noise_loss(const RolloutState& state) const;
  /// Mean multi_round_loss over the batch's follow-up records: the previous
  /// image is reinjected with freshly drawn tau1/tau2 and the step at tau2 is
  /// scored against the target. Returns nullopt when no record has a
  /// previous image.
  std::optional<Tensor> follow_up_loss(const std::vector<FinetuneRecord>& batch);

  const DenoiserModel& model() const { return model_; }
  const AdapterSet& adapters() const { return adapters_; }
  AdapterSet& adapters() { return adapters_; }
  const TrainerConfig& config() const { return config_; }
  int steps_taken() const { return step_; }

 private:
  struct SampleOutputs {
    std::vector<Tensor> x0;
    std::vector<Tensor> mean;  // final-step output z_{tau-1}
  };
  SampleOutputs final_step(const RolloutState& state) const;
  /// Mean weighted reward. `components` receives per-sample (div, cons, mi)
  /// with leave-one-out diversity in place of the shared group score.
  Tensor total_reward(const RolloutState& state, const std::vector<Tensor>& x0, RewardBreakdown* breakdown,
                      std::vector<RewardComponents>* components) const;
  double reward_phase_plain(const RolloutState& state, RewardBreakdown& breakdown);
  double reward_phase_ppo(const RolloutState& state, RewardBreakdown& breakdown);

  DenoiserModel model_;
  AdapterSet adapters_;
  PreferenceModel preference_;
  NoiseSchedule schedule_;
  TrainerConfig config_;
  Adam adapter_opt_;
  Adam base_opt_;
  std::mt19937_64 rng_;
  int step_ = 0;
};

// PPO pieces, exposed for testing.

/// min(rho * adv, clip(rho, 1 - eps, 1 + eps) * adv).
double clipped_surrogate(double ratio, double advantage, double eps);
/// Mean clipped surrogate over samples; the gradient flows through the
/// unclipped branch only where it is the active minimum.
Tensor clipped_surrogate(const std::vector<Tensor>& log_new, const std::vector<double>& log_old,
                         const std::vector<double>& advantages, double eps);
/// Z-scored values; all zeros when the spread is zero.
std::vector<double> normalize_advantages(const std::vector<double>& values);
/// Standardizes each reward component over the batch, weights it by the
/// sample's schedule and z-scores the sum, so the weights rather than the
/// raw reward units set each component's share of the advantage.
std::vector<double> component_advantages(const std::vector<RewardComponents>& components,
                                         const std::vector<RewardWeights>& weights);
/// Gaussian log-density up to its constant: -|a - mean|^2 / (2 sigma^2).
Tensor gaussian_log_prob(const Tensor& action, const Tensor& mean, double sigma);

// Multi-round reconstruction losses.

/// Stage one of a follow-up round: the previous latent noised to tau1 and
/// denoised fully under c1, then re-noised to tau2.
Tensor reinjected_latent(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& z_prev,
                         int tau1, int tau2, const Conditioning& c1, const Tensor& eps1, const Tensor& eps2,
                         const AdapterSet* adapters);

/// |forward_diffuse(z_next, tau2 - 1, eps) - G(z_stage, tau2 | c2)|, the
/// one-step reconstruction error at tau2.
Tensor multi_round_loss(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& z_stage,
                        const Tensor& z_next, int tau2, const Tensor& eps, const Conditioning& c2,
                        const AdapterSet* adapters);

/// Plain L2 norm of the residual.
Tensor bce_loss(const Tensor& target, const Tensor& output);

}  // namespace coadapt
