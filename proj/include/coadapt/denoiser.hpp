// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy conditional latent diffusion model: noise schedule, closed-form
// forward process, DDPM/DDIM reverse steps, a small conv autoencoder for
// the latent space, and a cross-attention noise predictor.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "coadapt/lora.hpp"
#include "coadapt/optim.hpp"
#include "coadapt/tensor.hpp"
#include "coadapt/world.hpp"

namespace coadapt {

class Checkpoint;

struct NoiseSchedule {
  int steps = 70;
  int finetune_lo = 1;
  int finetune_hi = 40;
  std::vector<double> betas;       // betas[tau - 1], tau in [1, steps]
  std::vector<double> alpha_bars;  // alpha_bars[tau], alpha_bars[0] == 1

  /// Linear betas in [beta_start, beta_end] over a `grid`-step process,
  /// observed at `steps` evenly spaced points. grid == steps gives the plain
  /// per-step linear schedule.
  static NoiseSchedule linear(int steps = 70, double beta_start = 1e-4, double beta_end = 0.02, int grid = 1000);

  double beta(int tau) const;
  double alpha(int tau) const { return 1.0 - beta(tau); }
  double alpha_bar(int tau) const;
  /// Throws std::invalid_argument when any invariant is broken.
  void validate() const;
};

enum class StepMode : std::uint8_t { kDeterministic, kStochastic };

/// sqrt(abar) z0 + sqrt(1 - abar) eps. Throws std::out_of_range for tau
/// outside [0, T].
Tensor forward_diffuse(const NoiseSchedule& schedule, const Tensor& z0, int tau, const Tensor& eps);

/// (z - sqrt(1 - abar) eps_hat) / sqrt(abar).
Tensor predict_x0(const NoiseSchedule& schedule, const Tensor& z, const Tensor& eps_hat, int tau);

/// DDPM posterior mean of z_{tau-1} given z_tau and the predicted noise.
Tensor posterior_mean(const NoiseSchedule& schedule, const Tensor& z, const Tensor& eps_hat, int tau);

/// Model-agnostic reverse step. Deterministic mode is DDIM with eta = 0;
/// stochastic mode is ancestral DDPM sampling and needs `rng`.
Tensor reverse_step(const NoiseSchedule& schedule, const Tensor& z, const Tensor& eps_hat, int tau, StepMode mode,
                    std::mt19937_64* rng);

std::vector<double> sinusoidal_encoding(double position, std::size_t dim);

struct DenoiserConfig {
  std::size_t latent_channels = 8;
  std::size_t width = 32;   // token width d
  std::size_t hidden = 16;  // autoencoder channels
  std::size_t time_dim = 16;
  int blocks = 2;
  std::size_t latent_side = 4;

  std::size_t tokens() const { return latent_side * latent_side; }
  Shape latent_shape() const { return {latent_side, latent_side, latent_channels}; }
};

/// Per-attribute embedding tables; psi(P) is the sum of the five rows.
class PromptEmbedder {
 public:
  PromptEmbedder() = default;
  PromptEmbedder(std::size_t width, std::mt19937_64& rng);

  /// [5 x d], one row per field in fixed order.
  Tensor tokens(const AttributeTuple& prompt) const;
  /// psi(P): [1 x d].
  Tensor embed(const AttributeTuple& prompt) const;

  Tensor& table() { return table_; }
  const Tensor& table() const { return table_; }
  std::size_t width() const { return table_.dim(1); }

 private:
  Tensor table_;  // [21 x d]
};

/// Conditioning for one denoising pass: attribute tokens of the prompt plus
/// the round condition token.
struct Conditioning {
  Tensor tokens;     // [5 x d]
  Tensor condition;  // [1 x d]

  /// [d x 6] key/value context.
  Tensor context() const;
};

/// psi(P) + round-index encoding.
Tensor round_condition(const PromptEmbedder& embedder, const AttributeTuple& prompt, int round);
Conditioning make_conditioning(const PromptEmbedder& embedder, const AttributeTuple& prompt, int round);
Conditioning make_conditioning(const PromptEmbedder& embedder, const AttributeTuple& prompt, const Tensor& condition);

struct AttentionBlock {
  Tensor w_q, w_k, w_v, w_o;      // [d x d]
  Tensor w_up, b_up, w_down, b_down;  // MLP d -> 2d -> d
};

class DenoiserModel {
 public:
  DenoiserModel() = default;
  DenoiserModel(DenoiserConfig config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }

  // Autoencoder between [16, 16, 3] images and [4, 4, C] latents.
  Tensor encode(const Tensor& image) const;
  Tensor decode(const Tensor& latent) const;
  Tensor encode_image(const SpriteImage& image) const { return encode(image.to_tensor()); }
  SpriteImage decode_image(const Tensor& latent) const;

  /// Noise prediction eps_hat(z_tau, tau | conditioning), same shape as z.
  Tensor predict_noise(const Tensor& z, int tau, const Conditioning& cond, const AdapterSet* adapters = nullptr) const;

  /// One reverse step through the (optionally adapted) model. Throws
  /// std::out_of_range for tau < 1.
  Tensor denoise_step(const NoiseSchedule& schedule, const Tensor& z, int tau, const Conditioning& cond,
                      const AdapterSet* adapters, StepMode mode, std::mt19937_64* rng = nullptr) const;

  /// Runs reverse steps tau_from, ..., tau_to + 1 and returns z_{tau_to}.
  Tensor denoise_range(const NoiseSchedule& schedule, Tensor z, int tau_from, int tau_to, const Conditioning& cond,
                       const AdapterSet* adapters, StepMode mode, std::mt19937_64* rng = nullptr) const;

  /// L2-normalized final-layer activation map for a clean latent, computed
  /// with an empty context so that it depends on the latent alone.
  std::vector<double> extract_features(const Tensor& z) const;
  /// Differentiable variant of extract_features: [F] tensor.
  Tensor feature_tensor(const Tensor& z) const;

  double latent_scale() const { return latent_scale_; }
  void set_latent_scale(double s) { latent_scale_ = s; }

  ParameterList autoencoder_parameters() const;
  /// Diffusion weights phi: prompt embedder and noise predictor.
  ParameterList base_parameters() const;
  ParameterList parameters() const;

  const PromptEmbedder& embedder() const { return embedder_; }

  void save(Checkpoint& ckpt, const std::string& prefix = "denoiser/") const;
  static DenoiserModel load(const Checkpoint& ckpt, const std::string& prefix = "denoiser/");
  /// Independent copy with fresh storage.
  DenoiserModel clone() const;

 private:
  Tensor trunk(const Tensor& z, int tau, const Tensor& context, const AdapterSet* adapters) const;

  DenoiserConfig config_;
  double latent_scale_ = 1.0;

  // autoencoder
  Tensor enc1_k_, enc1_b_, enc2_k_, enc2_b_;
  Tensor dec1_k_, dec1_b_, dec2_k_, dec2_b_, dec3_k_, dec3_b_;

  PromptEmbedder embedder_;

  // noise predictor
  Tensor in_k_, in_b_;  // 3x3 conv C -> d
  Tensor pos_;          // [d x tokens]
  Tensor t1_w_, t1_b_, t2_w_, t2_b_;
  std::vector<AttentionBlock> blocks_;
  Tensor out_w_, out_b_;  // [C x d], [C]
};

struct SampleResult {
  Tensor latent;
  SpriteImage image;
};

/// Seeded generation from pure noise at tau = T.
SampleResult sample(const DenoiserModel& model, const NoiseSchedule& schedule, const Conditioning& cond,
                    std::uint64_t seed, const AdapterSet* adapters = nullptr,
                    StepMode mode = StepMode::kDeterministic);

}  // namespace coadapt
