// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/preference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "coadapt/checkpoint.hpp"

namespace coadapt {

PreferenceModel::PreferenceModel(PreferenceConfig config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  const std::size_t c = config_.channels, w = config_.width;
  const std::size_t flat = 16 * c;
  conv1_k_ = Tensor::randn({3, 3, 3, c}, rng, std::sqrt(2.0 / 27.0));
  conv1_b_ = Tensor::zeros({c});
  conv2_k_ = Tensor::randn({3, 3, c, c}, rng, std::sqrt(2.0 / (9.0 * static_cast<double>(c))));
  conv2_b_ = Tensor::zeros({c});
  table_ = Tensor::randn({kAttributeSlots, w}, rng, 1.0 / std::sqrt(5.0));
  w_img_ = Tensor::randn({w, flat}, rng, 1.0 / std::sqrt(static_cast<double>(flat)));
  w_txt_ = Tensor::randn({w, w}, rng, 1.0 / std::sqrt(static_cast<double>(w)));
  head_w_ = Tensor::randn({config_.logits, w}, rng, 1.0 / std::sqrt(static_cast<double>(w)));
  head_b_ = Tensor::zeros({config_.logits});
  img_adapter_ = init_adapter(w, flat, std::min({config_.adapter_rank, w, flat}), rng(), config_.adapter_alpha);
  txt_adapter_ = init_adapter(w, w, std::min(config_.adapter_rank, w), rng(), config_.adapter_alpha);
}

Tensor PreferenceModel::logits(const AttributeTuple& prompt, const Tensor& image) const {
  const std::size_t flat = 16 * config_.channels;
  Tensor h = relu(conv2d(image, conv1_k_, conv1_b_, 2));
  h = relu(conv2d(h, conv2_k_, conv2_b_, 2));
  Tensor x = reshape(h, {flat, 1});
  const auto slots = attribute_slots(prompt);
  Tensor v = transpose(matmul(Tensor::ones({1, slots.size()}), take_rows(table_, slots)));
  const LoraAdapter* ia = config_.use_adapters ? &img_adapter_ : nullptr;
  const LoraAdapter* ta = config_.use_adapters ? &txt_adapter_ : nullptr;
  Tensor fused = mul(project(w_img_, x, ia), project(w_txt_, v, ta));
  return reshape(add_columnwise(matmul(head_w_, fused), head_b_), {config_.logits});
}

Tensor PreferenceModel::score_tensor(const AttributeTuple& prompt, const Tensor& image) const {
  return mean(logits(prompt, image));
}

double PreferenceModel::score(const AttributeTuple& prompt, const SpriteImage& image) const {
  NoGradGuard no_grad;
  return score_tensor(prompt, image.to_tensor()).item();
}

ParameterList PreferenceModel::base_parameters() const {
  return {{"enc/conv1_k", conv1_k_}, {"enc/conv1_b", conv1_b_}, {"enc/conv2_k", conv2_k_},
          {"enc/conv2_b", conv2_b_}, {"embed/table", table_},   {"fuse/w_img", w_img_},
          {"fuse/w_txt", w_txt_}};
}

ParameterList PreferenceModel::adapter_parameters() const {
  return {{"adapters/img/A", img_adapter_.a},
          {"adapters/img/B", img_adapter_.b},
          {"adapters/txt/A", txt_adapter_.a},
          {"adapters/txt/B", txt_adapter_.b}};
}

ParameterList PreferenceModel::head_parameters() const { return {{"head/w", head_w_}, {"head/b", head_b_}}; }

ParameterList PreferenceModel::trainable_parameters() const {
  ParameterList out = config_.use_adapters ? adapter_parameters() : base_parameters();
  for (auto& p : head_parameters()) out.push_back(std::move(p));
  return out;
}

ParameterList PreferenceModel::parameters() const {
  ParameterList out = base_parameters();
  for (auto& p : adapter_parameters()) out.push_back(std::move(p));
  for (auto& p : head_parameters()) out.push_back(std::move(p));
  return out;
}

void PreferenceModel::save(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.put(prefix + "config",
           Tensor({6}, {static_cast<double>(config_.channels), static_cast<double>(config_.width),
                        static_cast<double>(config_.logits), static_cast<double>(config_.adapter_rank),
                        config_.adapter_alpha, config_.use_adapters ? 1.0 : 0.0}));
  for (const auto& p : parameters()) ckpt.put(prefix + p.name, p.value);
}

PreferenceModel PreferenceModel::load(const Checkpoint& ckpt, const std::string& prefix) {
  const Tensor cfg = ckpt.get(prefix + "config");
  if (cfg.numel() != 6) throw CheckpointError("preference: malformed config entry");
  PreferenceConfig config;
  config.channels = static_cast<std::size_t>(cfg[0]);
  config.width = static_cast<std::size_t>(cfg[1]);
  config.logits = static_cast<std::size_t>(cfg[2]);
  config.adapter_rank = static_cast<std::size_t>(cfg[3]);
  config.adapter_alpha = cfg[4];
  config.use_adapters = cfg[5] != 0.0;
  PreferenceModel model(config, 0);
  for (const auto& p : model.parameters()) ckpt.load_into(prefix + p.name, p.value);
  return model;
}

Tensor pair_loss(const PreferenceModel& model, const PreferencePair& pair) {
  Tensor pos = model.score_tensor(pair.prompt, pair.positive.to_tensor());
  Tensor neg = model.score_tensor(pair.prompt, pair.negative.to_tensor());
  return scale(log_sigmoid(sub(pos, neg)), -1.0);
}

std::vector<double> train_preference(PreferenceModel& model, const std::vector<PreferencePair>& pairs,
                                     const PreferenceTrainConfig& config) {
  if (pairs.empty()) throw std::invalid_argument("train_preference: empty dataset");
  if (config.batch == 0 || config.epochs < 0) throw std::invalid_argument("train_preference: bad schedule");
  const ParameterList params = model.trainable_parameters();
  set_trainable(params, true);
  Adam opt(params, config.lr);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> curve;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      Tape tape;
      Tape::Scope scope(tape);
      Tensor acc = Tensor::scalar(0.0);
      for (std::size_t i = start; i < end; ++i) acc = add(acc, pair_loss(model, pairs[order[i]]));
      total += acc.item();
      opt.zero_grad();
      tape.backward(scale(acc, 1.0 / static_cast<double>(end - start)));
      opt.step();
    }
    curve.push_back(total / static_cast<double>(pairs.size()));
  }
  set_trainable(params, false);
  return curve;
}

double evaluate(const PreferenceModel& model, const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: empty pair set");
  std::size_t wins = 0;
  for (const auto& p : pairs) {
    if (model.score(p.prompt, p.positive) > model.score(p.prompt, p.negative)) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(pairs.size());
}

std::pair<AttributeTuple, AttributeTuple> make_mismatched_tuples(std::mt19937_64& rng) {
  const AttributeTuple prompt = AttributeTuple::random(rng);
  std::array<Field, 5> fields = kFields;
  std::shuffle(fields.begin(), fields.end(), rng);
  const int changes = std::uniform_int_distribution<int>(1, 5)(rng);
  AttributeTuple other = prompt;
  for (int i = 0; i < changes; ++i) {
    const FieldRange r = field_range(fields[static_cast<std::size_t>(i)]);
    // Draw from the range minus the current value.
    int v = std::uniform_int_distribution<int>(r.lo, r.hi - 1)(rng);
    if (v >= prompt.get(fields[static_cast<std::size_t>(i)])) ++v;
    other = other.with(fields[static_cast<std::size_t>(i)], v);
  }
  return {prompt, other};
}

PreferencePair make_preference_pair(std::mt19937_64& rng) {
  const auto [prompt, other] = make_mismatched_tuples(rng);
  return {prompt, render(prompt), render(other)};
}

std::vector<PreferencePair> make_preference_pairs(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PreferencePair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_preference_pair(rng));
  return out;
}

}  // namespace coadapt
