// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "coadapt/checkpoint.hpp"
#include "coadapt/denoiser.hpp"
#include "coadapt/toy.hpp"

namespace coadapt {
namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.latent_channels = 4;
  c.width = 8;
  c.hidden = 4;
  c.time_dim = 8;
  c.blocks = 1;
  return c;
}

// The output projection starts at zero; give every weight some signal.
void randomize(const ParameterList& params, std::uint64_t seed, double sd = 0.2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  for (auto p : params)
    for (double& v : p.value.mutable_data()) v += g(rng);
}

TEST(NoiseSchedule, PlainLinearGrid) {
  const NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02, 50);
  for (int t = 1; t <= 50; ++t) {
    const double expected = 1e-4 + (0.02 - 1e-4) * (t - 1) / 49.0;
    ASSERT_NEAR(s.beta(t), expected, 1e-15);
  }
  double abar = 1.0;
  for (int t = 1; t <= 50; ++t) {
    abar *= 1.0 - s.beta(t);
    ASSERT_NEAR(s.alpha_bar(t), abar, 1e-15);
  }
}

TEST(NoiseSchedule, StridedGridMatchesFineProducts) {
  const NoiseSchedule s = NoiseSchedule::linear(70, 1e-4, 0.02, 1000);
  std::vector<double> fine(1001, 1.0);
  for (int k = 1; k <= 1000; ++k) fine[k] = fine[k - 1] * (1.0 - (1e-4 + (0.02 - 1e-4) * (k - 1) / 999.0));
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  for (int t = 1; t <= 70; ++t) {
    const long k = std::lround(t * 1000.0 / 70.0);
    ASSERT_NEAR(s.alpha_bar(t), fine[static_cast<std::size_t>(k)], 1e-13);
    ASSERT_NEAR(s.beta(t), 1.0 - s.alpha_bar(t) / s.alpha_bar(t - 1), 1e-15);
    ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
  }
  EXPECT_LT(s.alpha_bar(70), 1e-4);
  EXPECT_NO_THROW(s.validate());
  EXPECT_THROW(s.alpha_bar(71), std::out_of_range);
  EXPECT_THROW(s.beta(0), std::out_of_range);
}

TEST(ForwardProcess, ClosedFormAndInverse) {
  const NoiseSchedule s = NoiseSchedule::linear();
  std::mt19937_64 rng(1);
  const Tensor z0 = Tensor::randn({4, 4, 2}, rng);
  const Tensor eps = Tensor::randn({4, 4, 2}, rng);
  for (int t : {1, 10, 35, 70}) {
    const Tensor zt = forward_diffuse(s, z0, t, eps);
    const double a = std::sqrt(s.alpha_bar(t)), b = std::sqrt(1.0 - s.alpha_bar(t));
    for (std::size_t i = 0; i < z0.numel(); ++i) ASSERT_NEAR(zt.data()[i], a * z0.data()[i] + b * eps.data()[i], 1e-14);
    EXPECT_LT(max_abs_diff(predict_x0(s, zt, eps, t), z0), 1e-9 / a);
  }
  EXPECT_EQ(max_abs_diff(forward_diffuse(s, z0, 0, eps), z0), 0.0);
  EXPECT_THROW(forward_diffuse(s, z0, 71, eps), std::out_of_range);
  EXPECT_THROW(forward_diffuse(s, z0, -1, eps), std::out_of_range);
}

TEST(ReverseStep, PosteriorMeanMatchesOracle) {
  const NoiseSchedule s = NoiseSchedule::linear();
  std::mt19937_64 rng(2);
  const Tensor x0 = Tensor::randn({2, 3}, rng);
  const Tensor eps = Tensor::randn({2, 3}, rng);
  for (int t : {2, 20, 70}) {
    const Tensor zt = forward_diffuse(s, x0, t, eps);
    const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1), beta = s.beta(t);
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    const Tensor mu = posterior_mean(s, zt, eps, t);
    for (std::size_t i = 0; i < mu.numel(); ++i) ASSERT_NEAR(mu.data()[i], c0 * x0.data()[i] + ct * zt.data()[i], 1e-9);
  }
}

TEST(ReverseStep, DeterministicStepWithTrueNoiseStaysOnTrajectory) {
  const NoiseSchedule s = NoiseSchedule::linear();
  std::mt19937_64 rng(3);
  const Tensor x0 = Tensor::randn({5}, rng);
  const Tensor eps = Tensor::randn({5}, rng);
  for (int t = 70; t >= 1; --t) {
    const Tensor zt = forward_diffuse(s, x0, t, eps);
    const Tensor prev = reverse_step(s, zt, eps, t, StepMode::kDeterministic, nullptr);
    ASSERT_LT(max_abs_diff(prev, forward_diffuse(s, x0, t - 1, eps)), 1e-9) << t;
  }
}

TEST(ReverseStep, StochasticNeedsRngAndAddsPosteriorNoise) {
  const NoiseSchedule s = NoiseSchedule::linear();
  std::mt19937_64 rng(4);
  const Tensor z = Tensor::randn({2000}, rng);
  const Tensor eps = Tensor::randn({2000}, rng);
  EXPECT_THROW(reverse_step(s, z, eps, 10, StepMode::kStochastic, nullptr), std::invalid_argument);
  const Tensor mu = posterior_mean(s, z, eps, 10);
  const Tensor out = reverse_step(s, z, eps, 10, StepMode::kStochastic, &rng);
  double var = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) var += std::pow(out.data()[i] - mu.data()[i], 2);
  var /= static_cast<double>(out.numel());
  const double expected = (1.0 - s.alpha_bar(9)) / (1.0 - s.alpha_bar(10)) * s.beta(10);
  EXPECT_NEAR(var / expected, 1.0, 0.1);
}

TEST(SinusoidalEncoding, InterleavedAndBounded) {
  const auto e = sinusoidal_encoding(0.0, 6);
  ASSERT_EQ(e.size(), 6u);
  for (std::size_t i = 0; i < 6; i += 2) {
    EXPECT_EQ(e[i], 0.0);
    EXPECT_EQ(e[i + 1], 1.0);
  }
  EXPECT_NE(sinusoidal_encoding(3.0, 8), sinusoidal_encoding(4.0, 8));
}

TEST(DenoiserModel, ShapesAndZeroOutputAtInit) {
  const DenoiserModel m(small_config(), 1);
  std::mt19937_64 rng(1);
  const Tensor z = Tensor::randn(m.config().latent_shape(), rng);
  const Conditioning c = make_conditioning(m.embedder(), AttributeTuple{1, 2, 0, 3, 2}, 1);
  const Tensor eps = m.predict_noise(z, 7, c);
  EXPECT_EQ(eps.shape(), z.shape());
  for (double v : eps.data()) EXPECT_EQ(v, 0.0);
  const Tensor img = m.decode(z);
  EXPECT_EQ(img.shape(), (Shape{16, 16, 3}));
  EXPECT_EQ(m.encode(img).shape(), z.shape());
}

TEST(DenoiserModel, ZeroAdaptersPreserveOutputs) {
  DenoiserModel m(small_config(), 2);
  randomize(m.base_parameters(), 5);
  const AdapterSet adapters = make_attention_adapters(1, 8, 2, 2.0, 3);
  std::mt19937_64 rng(1);
  const Tensor z = Tensor::randn(m.config().latent_shape(), rng);
  const Conditioning c = make_conditioning(m.embedder(), AttributeTuple{}, 2);
  EXPECT_EQ(max_abs_diff(m.predict_noise(z, 9, c, nullptr), m.predict_noise(z, 9, c, &adapters)), 0.0);
}

TEST(DenoiserModel, ConditioningChangesPrediction) {
  DenoiserModel m(small_config(), 2);
  randomize(m.base_parameters(), 6);
  std::mt19937_64 rng(1);
  const Tensor z = Tensor::randn(m.config().latent_shape(), rng);
  const Tensor a = m.predict_noise(z, 9, make_conditioning(m.embedder(), AttributeTuple{0, 0, 0, 0, 1}, 1));
  const Tensor b = m.predict_noise(z, 9, make_conditioning(m.embedder(), AttributeTuple{0, 5, 0, 0, 1}, 1));
  const Tensor c = m.predict_noise(z, 9, make_conditioning(m.embedder(), AttributeTuple{0, 0, 0, 0, 1}, 4));
  EXPECT_GT(max_abs_diff(a, b), 1e-6);
  EXPECT_GT(max_abs_diff(a, c), 1e-6);
}

TEST(DenoiserModel, FeaturesAreUnitNormAndPromptFree) {
  DenoiserModel m(small_config(), 3);
  randomize(m.base_parameters(), 7);
  std::mt19937_64 rng(2);
  const Tensor z = Tensor::randn(m.config().latent_shape(), rng);
  const auto f = m.extract_features(z);
  EXPECT_EQ(f.size(), m.config().width * m.config().tokens());
  double n2 = 0.0;
  for (double v : f) n2 += v * v;
  EXPECT_NEAR(n2, 1.0, 1e-12);
  EXPECT_EQ(f, m.extract_features(z));
  const Tensor ft = m.feature_tensor(z);
  for (std::size_t i = 0; i < f.size(); ++i) ASSERT_DOUBLE_EQ(ft.data()[i], f[i]);
}

TEST(DenoiserModel, CheckpointRoundTripAndClone) {
  DenoiserModel m(small_config(), 4);
  randomize(m.parameters(), 8);
  m.set_latent_scale(1.7);
  Checkpoint ckpt;
  m.save(ckpt);
  const DenoiserModel back = DenoiserModel::load(decode_checkpoint(encode_checkpoint(ckpt)));
  EXPECT_EQ(back.latent_scale(), 1.7);
  EXPECT_EQ(checksum(tensors_of(back.parameters())), checksum(tensors_of(m.parameters())));

  DenoiserModel copy = m.clone();
  randomize(copy.base_parameters(), 9);
  EXPECT_NE(checksum(tensors_of(copy.parameters())), checksum(tensors_of(m.parameters())));
}

TEST(DenoiserModel, SamplingIsSeedDeterministic) {
  DenoiserModel m(small_config(), 5);
  randomize(m.base_parameters(), 10, 0.05);
  const NoiseSchedule s = NoiseSchedule::linear();
  const Conditioning c = make_conditioning(m.embedder(), AttributeTuple{2, 1, 1, 0, 3}, 1);
  const auto a = sample(m, s, c, 42);
  const auto b = sample(m, s, c, 42);
  const auto d = sample(m, s, c, 43);
  EXPECT_EQ(max_abs_diff(a.latent, b.latent), 0.0);
  EXPECT_EQ(a.image, b.image);
  EXPECT_GT(max_abs_diff(a.latent, d.latent), 0.0);
}

TEST(DenoiserModel, DenoiserLossGradientMatchesFiniteDifferences) {
  DenoiserModel m(small_config(), 6);
  randomize(m.base_parameters(), 11);
  const NoiseSchedule s = NoiseSchedule::linear();
  std::mt19937_64 rng(3);
  const Tensor z0 = Tensor::randn(m.config().latent_shape(), rng);
  const Tensor eps = Tensor::randn(m.config().latent_shape(), rng);
  const AttributeTuple p{1, 3, 2, 1, 2};
  auto loss = [&] {
    const Tensor zt = forward_diffuse(s, z0, 12, eps);
    const Tensor d = sub(m.predict_noise(zt, 12, make_conditioning(m.embedder(), p, 2)), eps);
    return mean(mul(d, d));
  };
  const ParameterList params = m.base_parameters();
  set_trainable(params, true);
  std::mt19937_64 pick(7);
  for (const auto& np : params) {
    std::uniform_int_distribution<std::size_t> coord(0, np.value.numel() - 1);
    std::vector<std::size_t> coords{coord(pick), coord(pick)};
    ASSERT_LT(grad_check(loss, np.value, 1e-5, coords), 1e-4) << np.name;
  }
}

// --- toy 2D diffusion -------------------------------------------------------

TEST(ToyDiffusion, LossDecreasesMonotonicallyOnFrozenBatch) {
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02, 1000);
  const ToyMixture data;
  ToyDenoiser model(ToyConfig{}, 1);
  std::mt19937_64 rng(2);
  const Tensor x0 = data.sample(256, rng);
  const Tensor eps = Tensor::randn({2, 256}, rng);
  std::vector<int> taus(256);
  std::uniform_int_distribution<int> step(1, 100);
  for (int& t : taus) t = step(rng);
  const ParameterList params = model.parameters();
  double prev = INFINITY;
  for (int i = 0; i < 50; ++i) {
    zero_grads(params);
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor loss = toy_noise_loss(model, s, x0, taus, eps);
    tape.backward(loss);
    ASSERT_LT(loss.item(), prev) << "step " << i;
    prev = loss.item();
    for (auto p : params) {
      auto w = p.value.mutable_data();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 0.05 * p.value.impl()->grad[k];
    }
  }
}

TEST(ToyDiffusion, TrainedStepMovesTowardClusters) {
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02, 1000);
  const ToyMixture data;
  ToyDenoiser model(ToyConfig{}, 3);
  ToyTrainConfig cfg;
  cfg.steps = 600;
  cfg.batch = 128;
  train_toy(model, s, data, cfg);

  std::mt19937_64 rng(5);
  const Tensor x0 = data.sample(1000, rng);
  const Tensor eps = Tensor::randn({2, 1000}, rng);
  auto mean_dist = [&](const Tensor& x) {
    const auto v = x.data();
    double acc = 0.0;
    for (std::size_t j = 0; j < 1000; ++j) {
      const auto& m = data.means[static_cast<std::size_t>(data.nearest(v[j], v[1000 + j]))];
      acc += std::hypot(v[j] - m[0], v[1000 + j] - m[1]);
    }
    return acc / 1000.0;
  };
  for (int tau : {5, 20}) {
    const Tensor xt = forward_diffuse(s, x0, tau, eps);
    const Tensor next = toy_reverse_step(model, s, xt, tau, StepMode::kDeterministic, nullptr);
    EXPECT_LT(mean_dist(next), mean_dist(xt)) << tau;
  }
}

TEST(ToyDiffusion, ClusterMeansOracle) {
  const ToyMixture data;
  const Tensor pts({2, 4}, {-1.0, -2.0, 1.0, 3.0, -1.0, -1.5, 2.0, 0.0});
  const auto means = cluster_means(pts, data);
  EXPECT_DOUBLE_EQ(means[0][0], -1.5);
  EXPECT_DOUBLE_EQ(means[0][1], -1.25);
  EXPECT_DOUBLE_EQ(means[1][0], 2.0);
  EXPECT_DOUBLE_EQ(means[1][1], 1.0);
}

}  // namespace
}  // namespace coadapt
