// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-dimensional DDPM used as a smoke test of the diffusion machinery: a
// two-cluster Gaussian mixture and a small time-conditioned MLP noise
// predictor. Points are stored column-wise in [2 x n] tensors.

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "coadapt/denoiser.hpp"
#include "coadapt/optim.hpp"

namespace coadapt {

using Point2 = std::array<double, 2>;

struct ToyMixture {
  std::array<Point2, 2> means{Point2{-1.5, -1.0}, Point2{1.5, 1.0}};
  double stddev = 0.25;

  Tensor sample(std::size_t n, std::mt19937_64& rng) const;
  /// Index of the nearer mean.
  int nearest(double x, double y) const;
};

struct ToyConfig {
  std::size_t hidden = 64;
  std::size_t time_dim = 16;
};

class ToyDenoiser {
 public:
  ToyDenoiser(ToyConfig config, std::uint64_t seed);

  /// Noise prediction for points x [2 x n] at per-column steps `taus`.
  Tensor predict_noise(const Tensor& x, const std::vector<int>& taus) const;
  ParameterList parameters() const;

 private:
  ToyConfig config_;
  Tensor w1_, u1_, b1_, w2_, b2_, w3_, b3_;
};

/// Mean squared noise-prediction error of x0 noised to `taus` with `eps`.
Tensor toy_noise_loss(const ToyDenoiser& model, const NoiseSchedule& schedule, const Tensor& x0,
                      const std::vector<int>& taus, const Tensor& eps);

struct ToyTrainConfig {
  int steps = 2000;
  std::size_t batch = 256;
  double lr = 3e-3;  // decays linearly to zero
  std::uint64_t seed = 0;
};

/// Returns the per-step training loss.
std::vector<double> train_toy(ToyDenoiser& model, const NoiseSchedule& schedule, const ToyMixture& data,
                              const ToyTrainConfig& cfg);

/// Ancestral sampling from pure noise down to step 0.
Tensor sample_toy(const ToyDenoiser& model, const NoiseSchedule& schedule, std::size_t n, std::mt19937_64& rng);

/// One reverse step applied to every column at step `tau`.
Tensor toy_reverse_step(const ToyDenoiser& model, const NoiseSchedule& schedule, const Tensor& x, int tau,
                        StepMode mode, std::mt19937_64* rng);

/// Empirical mean of the samples assigned to each mixture component. A
/// component with no samples gets NaN coordinates.
std::array<Point2, 2> cluster_means(const Tensor& samples, const ToyMixture& data);

}  // namespace coadapt
