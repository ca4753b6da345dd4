// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "coadapt/tensor.hpp"

namespace coadapt {

struct NamedTensor {
  std::string name;
  Tensor value;
};

using ParameterList = std::vector<NamedTensor>;

inline std::vector<Tensor> tensors_of(const ParameterList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

inline void zero_grads(const ParameterList& params) {
  for (auto p : params) p.value.zero_grad();
}

inline void set_trainable(const ParameterList& params, bool on) {
  for (auto p : params) p.value.set_requires_grad(on);
}

inline double grad_norm(const ParameterList& params) {
  double acc = 0.0;
  for (const auto& p : params)
    for (double g : p.value.impl()->grad) acc += g * g;
  return std::sqrt(acc);
}

/// Adam over a fixed parameter list. `direction` = -1 descends, +1 ascends.
class Adam {
 public:
  explicit Adam(ParameterList params, double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.value.numel(), 0.0);
      v_.emplace_back(p.value.numel(), 0.0);
    }
  }

  void step(double direction = -1.0) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor p = params_[i].value;
      const auto& g = p.impl()->grad;
      if (g.empty()) continue;
      auto w = p.mutable_data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
        w[j] += direction * lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
      }
    }
  }

  void zero_grad() { zero_grads(params_); }
  const ParameterList& params() const { return params_; }
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  ParameterList params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace coadapt
