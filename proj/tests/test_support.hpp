// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small models shared by the unit tests.

#pragma once

#include <random>

#include "coadapt/denoiser.hpp"
#include "coadapt/optim.hpp"
#include "coadapt/preference.hpp"

namespace coadapt::testing {

inline DenoiserConfig tiny_denoiser() {
  DenoiserConfig c;
  c.latent_channels = 4;
  c.width = 8;
  c.hidden = 4;
  c.time_dim = 8;
  c.blocks = 1;
  return c;
}

inline PreferenceConfig tiny_preference() {
  PreferenceConfig c;
  c.channels = 4;
  c.width = 8;
  c.logits = 2;
  c.adapter_rank = 4;
  return c;
}

/// Adds Gaussian noise to every parameter; zero-initialized projections
/// otherwise leave the model a constant.
inline void randomize(const ParameterList& params, std::uint64_t seed, double sd = 0.2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  for (auto p : params)
    for (double& v : p.value.mutable_data()) v += g(rng);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace coadapt::testing
