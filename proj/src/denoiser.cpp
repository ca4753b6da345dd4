// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "coadapt/checkpoint.hpp"

namespace coadapt {

namespace {

Tensor conv_kernel(std::size_t cin, std::size_t cout, std::mt19937_64& rng) {
  return Tensor::randn({3, 3, cin, cout}, rng, std::sqrt(2.0 / (9.0 * static_cast<double>(cin))));
}

Tensor dense(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  return Tensor::randn({out, in}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
}

void check_tau(const NoiseSchedule& schedule, int tau, int lo) {
  if (tau < lo || tau > schedule.steps) {
    throw std::out_of_range("timestep " + std::to_string(tau) + " outside [" + std::to_string(lo) + ", " +
                            std::to_string(schedule.steps) + "]");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule and closed-form process

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end, int grid) {
  if (steps < 1 || grid < steps) throw std::invalid_argument("noise schedule: need 1 <= steps <= grid");
  std::vector<double> fine(static_cast<std::size_t>(grid) + 1, 1.0);
  for (int k = 1; k <= grid; ++k) {
    const double frac = grid == 1 ? 0.0 : static_cast<double>(k - 1) / static_cast<double>(grid - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    fine[static_cast<std::size_t>(k)] = fine[static_cast<std::size_t>(k) - 1] * (1.0 - beta);
  }
  NoiseSchedule s;
  s.steps = steps;
  s.finetune_hi = std::min(40, steps);
  s.alpha_bars.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  s.betas.resize(static_cast<std::size_t>(steps));
  for (int tau = 1; tau <= steps; ++tau) {
    const auto k = static_cast<std::size_t>(std::lround(static_cast<double>(tau) * grid / steps));
    s.alpha_bars[static_cast<std::size_t>(tau)] = fine[k];
    s.betas[static_cast<std::size_t>(tau) - 1] = 1.0 - fine[k] / s.alpha_bars[static_cast<std::size_t>(tau) - 1];
  }
  s.validate();
  return s;
}

double NoiseSchedule::beta(int tau) const {
  check_tau(*this, tau, 1);
  return betas[static_cast<std::size_t>(tau) - 1];
}

double NoiseSchedule::alpha_bar(int tau) const {
  check_tau(*this, tau, 0);
  return alpha_bars[static_cast<std::size_t>(tau)];
}

void NoiseSchedule::validate() const {
  if (betas.size() != static_cast<std::size_t>(steps) || alpha_bars.size() != betas.size() + 1) {
    throw std::invalid_argument("noise schedule: table sizes do not match step count");
  }
  if (alpha_bars[0] != 1.0) throw std::invalid_argument("noise schedule: alpha_bar(0) must be 1");
  for (int tau = 1; tau <= steps; ++tau) {
    const double b = betas[static_cast<std::size_t>(tau) - 1];
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("noise schedule: beta outside (0, 1)");
    if (!(alpha_bars[static_cast<std::size_t>(tau)] < alpha_bars[static_cast<std::size_t>(tau) - 1])) {
      throw std::invalid_argument("noise schedule: alpha_bar must strictly decrease");
    }
  }
  if (finetune_lo < 1 || finetune_lo > finetune_hi || finetune_hi > steps) {
    throw std::invalid_argument("noise schedule: fine-tuning range must satisfy 1 <= T1 <= T2 <= T");
  }
}

Tensor forward_diffuse(const NoiseSchedule& schedule, const Tensor& z0, int tau, const Tensor& eps) {
  check_tau(schedule, tau, 0);
  if (z0.shape() != eps.shape()) throw ShapeError("forward_diffuse: noise shape differs from latent");
  const double ab = schedule.alpha_bar(tau);
  return add(scale(z0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor predict_x0(const NoiseSchedule& schedule, const Tensor& z, const Tensor& eps_hat, int tau) {
  check_tau(schedule, tau, 1);
  const double ab = schedule.alpha_bar(tau);
  return scale(sub(z, scale(eps_hat, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
}

Tensor posterior_mean(const NoiseSchedule& schedule, const Tensor& z, const Tensor& eps_hat, int tau) {
  check_tau(schedule, tau, 1);
  const double b = schedule.beta(tau);
  const double ab = schedule.alpha_bar(tau);
  return scale(sub(z, scale(eps_hat, b / std::sqrt(1.0 - ab))), 1.0 / std::sqrt(1.0 - b));
}

Tensor reverse_step(const NoiseSchedule& schedule, const Tensor& z, const Tensor& eps_hat, int tau, StepMode mode,
                    std::mt19937_64* rng) {
  check_tau(schedule, tau, 1);
  if (mode == StepMode::kDeterministic) {
    const double prev = schedule.alpha_bar(tau - 1);
    Tensor x0 = predict_x0(schedule, z, eps_hat, tau);
    if (tau == 1) return x0;
    return add(scale(x0, std::sqrt(prev)), scale(eps_hat, std::sqrt(1.0 - prev)));
  }
  Tensor mean = posterior_mean(schedule, z, eps_hat, tau);
  if (tau == 1) return mean;
  if (rng == nullptr) throw std::invalid_argument("reverse_step: stochastic mode needs a generator");
  const double var = schedule.beta(tau) * (1.0 - schedule.alpha_bar(tau - 1)) / (1.0 - schedule.alpha_bar(tau));
  return add(mean, Tensor::randn(z.shape(), *rng, std::sqrt(var)));
}

std::vector<double> sinusoidal_encoding(double position, std::size_t dim) {
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    out[2 * i] = std::sin(position * freq);
    out[2 * i + 1] = std::cos(position * freq);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt conditioning

PromptEmbedder::PromptEmbedder(std::size_t width, std::mt19937_64& rng)
    : table_(Tensor::randn({kAttributeSlots, width}, rng)) {}

Tensor PromptEmbedder::tokens(const AttributeTuple& prompt) const {
  const auto slots = attribute_slots(prompt);
  return take_rows(table_, slots);
}

Tensor PromptEmbedder::embed(const AttributeTuple& prompt) const {
  return matmul(Tensor::ones({1, kFields.size()}), tokens(prompt));
}

Tensor Conditioning::context() const { return transpose(concat_rows(tokens, condition)); }

Tensor round_condition(const PromptEmbedder& embedder, const AttributeTuple& prompt, int round) {
  const std::size_t d = embedder.width();
  return add(embedder.embed(prompt), Tensor({1, d}, sinusoidal_encoding(round, d)));
}

Conditioning make_conditioning(const PromptEmbedder& embedder, const AttributeTuple& prompt, int round) {
  return {embedder.tokens(prompt), round_condition(embedder, prompt, round)};
}

Conditioning make_conditioning(const PromptEmbedder& embedder, const AttributeTuple& prompt,
                               const Tensor& condition) {
  return {embedder.tokens(prompt), condition};
}

// ---------------------------------------------------------------------------
// Model

DenoiserModel::DenoiserModel(DenoiserConfig config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  const std::size_t c = config_.latent_channels, d = config_.width, h = config_.hidden, td = config_.time_dim;
  enc1_k_ = conv_kernel(3, h, rng);
  enc1_b_ = Tensor::zeros({h});
  enc2_k_ = conv_kernel(h, c, rng);
  enc2_b_ = Tensor::zeros({c});
  dec1_k_ = conv_kernel(c, h, rng);
  dec1_b_ = Tensor::zeros({h});
  dec2_k_ = conv_kernel(h, h, rng);
  dec2_b_ = Tensor::zeros({h});
  dec3_k_ = conv_kernel(h, 3, rng);
  dec3_b_ = Tensor::zeros({3});

  embedder_ = PromptEmbedder(d, rng);

  in_k_ = conv_kernel(c, d, rng);
  in_b_ = Tensor::zeros({d});
  pos_ = Tensor::randn({d, config_.tokens()}, rng, 0.5);
  t1_w_ = dense(d, td, rng);
  t1_b_ = Tensor::zeros({d});
  t2_w_ = dense(d, d, rng);
  t2_b_ = Tensor::zeros({d});
  for (int b = 0; b < config_.blocks; ++b) {
    AttentionBlock blk;
    blk.w_q = dense(d, d, rng);
    blk.w_k = dense(d, d, rng);
    blk.w_v = dense(d, d, rng);
    blk.w_o = dense(d, d, rng);
    blk.w_up = dense(2 * d, d, rng);
    blk.b_up = Tensor::zeros({2 * d});
    blk.w_down = dense(d, 2 * d, rng);
    blk.b_down = Tensor::zeros({d});
    blocks_.push_back(std::move(blk));
  }
  out_w_ = Tensor::zeros({c, d});
  out_b_ = Tensor::zeros({c});
}

Tensor DenoiserModel::encode(const Tensor& image) const {
  Tensor h = relu(conv2d(image, enc1_k_, enc1_b_, 2));
  return scale(conv2d(h, enc2_k_, enc2_b_, 2), latent_scale_);
}

Tensor DenoiserModel::decode(const Tensor& latent) const {
  Tensor z = scale(latent, 1.0 / latent_scale_);
  Tensor h = relu(conv2d(upsample2x(z), dec1_k_, dec1_b_, 1));
  h = relu(conv2d(upsample2x(h), dec2_k_, dec2_b_, 1));
  return sigmoid(conv2d(h, dec3_k_, dec3_b_, 1));
}

SpriteImage DenoiserModel::decode_image(const Tensor& latent) const {
  NoGradGuard no_grad;
  return SpriteImage::from_tensor(decode(latent));
}

Tensor DenoiserModel::trunk(const Tensor& z, int tau, const Tensor& context, const AdapterSet* adapters) const {
  const std::size_t d = config_.width, n = config_.tokens();
  if (z.shape() != config_.latent_shape()) {
    throw ShapeError("denoiser: latent shape " + to_string(z.shape()) + ", expected " +
                     to_string(config_.latent_shape()));
  }
  Tensor h = transpose(reshape(conv2d(z, in_k_, in_b_, 1), {n, d}));
  h = add(h, pos_);
  Tensor temb({config_.time_dim, 1}, sinusoidal_encoding(tau, config_.time_dim));
  Tensor t = add_columnwise(matmul(t1_w_, temb), t1_b_);
  t = add_columnwise(matmul(t2_w_, relu(t)), t2_b_);
  h = add_columnwise(h, t);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const AttentionBlock& blk = blocks_[l];
    const int layer = static_cast<int>(l);
    auto adapter = [&](ProjectionSite site) -> const LoraAdapter* {
      return adapters == nullptr ? nullptr : adapters->find({site, layer});
    };
    Tensor x = layer_norm(h);
    Tensor q = project(blk.w_q, x, adapter(ProjectionSite::kQuery));
    Tensor k = project(blk.w_k, context, adapter(ProjectionSite::kKey));
    Tensor v = project(blk.w_v, context, adapter(ProjectionSite::kValue));
    Tensor attn = softmax_rows(scale(matmul(transpose(q), k), inv_sqrt_d));
    h = add(h, project(blk.w_o, matmul(v, transpose(attn)), adapter(ProjectionSite::kOutput)));
    Tensor up = relu(add_columnwise(matmul(blk.w_up, layer_norm(h)), blk.b_up));
    h = add(h, add_columnwise(matmul(blk.w_down, up), blk.b_down));
  }
  return layer_norm(h);
}

Tensor DenoiserModel::predict_noise(const Tensor& z, int tau, const Conditioning& cond,
                                    const AdapterSet* adapters) const {
  Tensor hidden = trunk(z, tau, cond.context(), adapters);
  Tensor eps = add_columnwise(matmul(out_w_, hidden), out_b_);
  return reshape(transpose(eps), config_.latent_shape());
}

Tensor DenoiserModel::denoise_step(const NoiseSchedule& schedule, const Tensor& z, int tau, const Conditioning& cond,
                                   const AdapterSet* adapters, StepMode mode, std::mt19937_64* rng) const {
  check_tau(schedule, tau, 1);
  return reverse_step(schedule, z, predict_noise(z, tau, cond, adapters), tau, mode, rng);
}

Tensor DenoiserModel::denoise_range(const NoiseSchedule& schedule, Tensor z, int tau_from, int tau_to,
                                    const Conditioning& cond, const AdapterSet* adapters, StepMode mode,
                                    std::mt19937_64* rng) const {
  if (tau_to < 0 || tau_from < tau_to) throw std::out_of_range("denoise_range: need 0 <= tau_to <= tau_from");
  for (int tau = tau_from; tau > tau_to; --tau) z = denoise_step(schedule, z, tau, cond, adapters, mode, rng);
  return z;
}

Tensor DenoiserModel::feature_tensor(const Tensor& z) const {
  Tensor empty = Tensor::zeros({config_.width, 1});
  Tensor hidden = reshape(trunk(z, 1, empty, nullptr), {config_.width * config_.tokens()});
  return div(hidden, sqrt(sum(mul(hidden, hidden))));
}

std::vector<double> DenoiserModel::extract_features(const Tensor& z) const {
  NoGradGuard no_grad;
  Tensor f = feature_tensor(z);
  return {f.data().begin(), f.data().end()};
}

ParameterList DenoiserModel::autoencoder_parameters() const {
  return {{"ae/enc1_k", enc1_k_}, {"ae/enc1_b", enc1_b_}, {"ae/enc2_k", enc2_k_}, {"ae/enc2_b", enc2_b_},
          {"ae/dec1_k", dec1_k_}, {"ae/dec1_b", dec1_b_}, {"ae/dec2_k", dec2_k_}, {"ae/dec2_b", dec2_b_},
          {"ae/dec3_k", dec3_k_}, {"ae/dec3_b", dec3_b_}};
}

ParameterList DenoiserModel::base_parameters() const {
  ParameterList out{{"embed/table", embedder_.table()}, {"net/in_k", in_k_},   {"net/in_b", in_b_},
                    {"net/pos", pos_},                  {"net/t1_w", t1_w_},   {"net/t1_b", t1_b_},
                    {"net/t2_w", t2_w_},                {"net/t2_b", t2_b_}};
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string p = "net/block" + std::to_string(l) + "/";
    const AttentionBlock& b = blocks_[l];
    out.push_back({p + "w_q", b.w_q});
    out.push_back({p + "w_k", b.w_k});
    out.push_back({p + "w_v", b.w_v});
    out.push_back({p + "w_o", b.w_o});
    out.push_back({p + "w_up", b.w_up});
    out.push_back({p + "b_up", b.b_up});
    out.push_back({p + "w_down", b.w_down});
    out.push_back({p + "b_down", b.b_down});
  }
  out.push_back({"net/out_w", out_w_});
  out.push_back({"net/out_b", out_b_});
  return out;
}

ParameterList DenoiserModel::parameters() const {
  ParameterList out = autoencoder_parameters();
  for (auto& p : base_parameters()) out.push_back(std::move(p));
  return out;
}

void DenoiserModel::save(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.put(prefix + "config",
           Tensor({6}, {static_cast<double>(config_.latent_channels), static_cast<double>(config_.width),
                        static_cast<double>(config_.hidden), static_cast<double>(config_.time_dim),
                        static_cast<double>(config_.blocks), static_cast<double>(config_.latent_side)}));
  ckpt.put_scalar(prefix + "latent_scale", latent_scale_);
  for (const auto& p : parameters()) ckpt.put(prefix + p.name, p.value);
}

DenoiserModel DenoiserModel::load(const Checkpoint& ckpt, const std::string& prefix) {
  const Tensor cfg = ckpt.get(prefix + "config");
  if (cfg.numel() != 6) throw CheckpointError("denoiser: malformed config entry");
  DenoiserConfig config;
  config.latent_channels = static_cast<std::size_t>(cfg[0]);
  config.width = static_cast<std::size_t>(cfg[1]);
  config.hidden = static_cast<std::size_t>(cfg[2]);
  config.time_dim = static_cast<std::size_t>(cfg[3]);
  config.blocks = static_cast<int>(cfg[4]);
  config.latent_side = static_cast<std::size_t>(cfg[5]);
  DenoiserModel model(config, 0);
  model.latent_scale_ = ckpt.get_scalar(prefix + "latent_scale");
  for (const auto& p : model.parameters()) ckpt.load_into(prefix + p.name, p.value);
  return model;
}

DenoiserModel DenoiserModel::clone() const {
  Checkpoint ckpt;
  save(ckpt);
  return load(ckpt);
}

SampleResult sample(const DenoiserModel& model, const NoiseSchedule& schedule, const Conditioning& cond,
                    std::uint64_t seed, const AdapterSet* adapters, StepMode mode) {
  NoGradGuard no_grad;
  std::mt19937_64 rng(seed);
  Tensor z = Tensor::randn(model.config().latent_shape(), rng);
  Tensor z0 = model.denoise_range(schedule, z, schedule.steps, 0, cond, adapters, mode, &rng);
  return {z0, model.decode_image(z0)};
}

}  // namespace coadapt
