// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/toy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace coadapt {

namespace {

Tensor time_features(const std::vector<int>& taus, std::size_t dim) {
  std::vector<double> data(dim * taus.size());
  for (std::size_t j = 0; j < taus.size(); ++j) {
    const auto enc = sinusoidal_encoding(taus[j], dim);
    for (std::size_t i = 0; i < dim; ++i) data[i * taus.size() + j] = enc[i];
  }
  return Tensor({dim, taus.size()}, std::move(data));
}

Tensor dense_init(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  Tensor t = Tensor::randn({out, in}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  t.set_requires_grad(true);
  return t;
}

Tensor bias_init(std::size_t out) {
  Tensor t = Tensor::zeros({out, 1});
  t.set_requires_grad(true);
  return t;
}

}  // namespace

Tensor ToyMixture::sample(std::size_t n, std::mt19937_64& rng) const {
  std::normal_distribution<double> gauss(0.0, stddev);
  std::bernoulli_distribution pick(0.5);
  std::vector<double> data(2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    const Point2& m = means[pick(rng) ? 1 : 0];
    data[j] = m[0] + gauss(rng);
    data[n + j] = m[1] + gauss(rng);
  }
  return Tensor({2, n}, std::move(data));
}

int ToyMixture::nearest(double x, double y) const {
  auto d2 = [&](const Point2& m) { return (x - m[0]) * (x - m[0]) + (y - m[1]) * (y - m[1]); };
  return d2(means[1]) < d2(means[0]) ? 1 : 0;
}

ToyDenoiser::ToyDenoiser(ToyConfig config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  w1_ = dense_init(config_.hidden, 2, rng);
  u1_ = dense_init(config_.hidden, config_.time_dim, rng);
  b1_ = bias_init(config_.hidden);
  w2_ = dense_init(config_.hidden, config_.hidden, rng);
  b2_ = bias_init(config_.hidden);
  w3_ = dense_init(2, config_.hidden, rng);
  b3_ = bias_init(2);
}

Tensor ToyDenoiser::predict_noise(const Tensor& x, const std::vector<int>& taus) const {
  if (x.shape().size() != 2 || x.shape()[0] != 2 || x.shape()[1] != taus.size()) {
    throw std::invalid_argument("toy denoiser: expected [2 x n] points with n steps");
  }
  const Tensor t = time_features(taus, config_.time_dim);
  Tensor h = relu(add_columnwise(add(matmul(w1_, x), matmul(u1_, t)), b1_));
  h = relu(add_columnwise(matmul(w2_, h), b2_));
  return add_columnwise(matmul(w3_, h), b3_);
}

ParameterList ToyDenoiser::parameters() const {
  return {{"toy/w1", w1_}, {"toy/u1", u1_}, {"toy/b1", b1_}, {"toy/w2", w2_},
          {"toy/b2", b2_}, {"toy/w3", w3_}, {"toy/b3", b3_}};
}

Tensor toy_noise_loss(const ToyDenoiser& model, const NoiseSchedule& schedule, const Tensor& x0,
                      const std::vector<int>& taus, const Tensor& eps) {
  const std::size_t n = taus.size();
  std::vector<double> a(2 * n), b(2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    const double abar = schedule.alpha_bar(taus[j]);
    a[j] = a[n + j] = std::sqrt(abar);
    b[j] = b[n + j] = std::sqrt(1.0 - abar);
  }
  const Tensor xt = add(mul(Tensor({2, n}, std::move(a)), x0), mul(Tensor({2, n}, std::move(b)), eps));
  const Tensor diff = sub(model.predict_noise(xt, taus), eps);
  return mean(mul(diff, diff));
}

std::vector<double> train_toy(ToyDenoiser& model, const NoiseSchedule& schedule, const ToyMixture& data,
                              const ToyTrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> step(1, schedule.steps);
  Adam opt(model.parameters(), cfg.lr);
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(cfg.steps));
  for (int s = 0; s < cfg.steps; ++s) {
    const Tensor x0 = data.sample(cfg.batch, rng);
    const Tensor eps = Tensor::randn({2, cfg.batch}, rng);
    std::vector<int> taus(cfg.batch);
    for (int& t : taus) t = step(rng);
    // Linear decay to zero sharpens the final fit of the cluster means.
    opt.set_lr(cfg.lr * (1.0 - static_cast<double>(s) / cfg.steps));
    opt.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor loss = toy_noise_loss(model, schedule, x0, taus, eps);
    tape.backward(loss);
    opt.step();
    losses.push_back(loss.item());
  }
  return losses;
}

Tensor toy_reverse_step(const ToyDenoiser& model, const NoiseSchedule& schedule, const Tensor& x, int tau,
                        StepMode mode, std::mt19937_64* rng) {
  NoGradGuard no_grad;
  const Tensor eps_hat = model.predict_noise(x, std::vector<int>(x.shape()[1], tau));
  return reverse_step(schedule, x, eps_hat, tau, mode, rng);
}

Tensor sample_toy(const ToyDenoiser& model, const NoiseSchedule& schedule, std::size_t n, std::mt19937_64& rng) {
  Tensor x = Tensor::randn({2, n}, rng);
  for (int tau = schedule.steps; tau >= 1; --tau) x = toy_reverse_step(model, schedule, x, tau, StepMode::kStochastic, &rng);
  return x;
}

std::array<Point2, 2> cluster_means(const Tensor& samples, const ToyMixture& data) {
  const std::size_t n = samples.shape()[1];
  const auto v = samples.data();
  std::array<Point2, 2> sums{};
  std::array<int, 2> counts{};
  for (std::size_t j = 0; j < n; ++j) {
    const int k = data.nearest(v[j], v[n + j]);
    sums[k][0] += v[j];
    sums[k][1] += v[n + j];
    ++counts[k];
  }
  std::array<Point2, 2> out;
  for (int k = 0; k < 2; ++k) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out[k] = counts[k] > 0 ? Point2{sums[k][0] / counts[k], sums[k][1] / counts[k]} : Point2{nan, nan};
  }
  return out;
}

}  // namespace coadapt
