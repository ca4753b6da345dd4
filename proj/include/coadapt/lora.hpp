// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Low-rank adapters for square attention projections.

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>

#include "coadapt/optim.hpp"
#include "coadapt/tensor.hpp"

namespace coadapt {

/// Low-rank update (alpha / rank) * B * A on top of a frozen weight W[d_out x d_in].
struct LoraAdapter {
  Tensor a;  // [rank x d_in], small uniform at init
  Tensor b;  // [d_out x rank], zero at init
  std::size_t rank = 4;
  double alpha = 4.0;

  double scaling() const { return alpha / static_cast<double>(rank); }
  /// Dense (alpha / rank) * B * A. Only for export and checks.
  Tensor delta() const;
};

/// B = 0 and A ~ U(-1/sqrt(d_in), 1/sqrt(d_in)). Throws std::invalid_argument
/// when rank exceeds min(d_out, d_in).
LoraAdapter init_adapter(std::size_t d_out, std::size_t d_in, std::size_t rank, std::uint64_t seed,
                         double alpha = 4.0);
inline LoraAdapter init_adapter(std::size_t d, std::size_t rank, std::uint64_t seed, double alpha = 4.0) {
  return init_adapter(d, d, rank, seed, alpha);
}

/// W x + (alpha / rank) B (A x), without materializing B A.
Tensor apply(const LoraAdapter& adapter, const Tensor& w_base, const Tensor& x);

/// W + (alpha / rank) B A.
Tensor merge(const LoraAdapter& adapter, const Tensor& w_base);

/// One ascent step A += lr dR/dA, B += lr dR/dB using the gradients left by
/// the last backward pass. Throws std::logic_error if either factor has none.
void reward_step(LoraAdapter& adapter, double lr);

enum class ProjectionSite : std::uint8_t { kQuery, kKey, kValue, kOutput };

struct SiteKey {
  ProjectionSite site;
  int layer;
  auto operator<=>(const SiteKey&) const = default;
};

std::string site_name(const SiteKey& key);

/// At most one adapter per (projection, layer).
class AdapterSet {
 public:
  void add(SiteKey key, LoraAdapter adapter);
  const LoraAdapter* find(SiteKey key) const;
  LoraAdapter* find(SiteKey key);
  std::size_t size() const { return adapters_.size(); }
  bool empty() const { return adapters_.empty(); }

  /// Named A/B factors ("<prefix><site>/A").
  ParameterList parameters(const std::string& prefix = "adapters/") const;
  /// Deep copy with fresh storage.
  AdapterSet clone() const;

  auto begin() const { return adapters_.begin(); }
  auto end() const { return adapters_.end(); }
  auto begin() { return adapters_.begin(); }
  auto end() { return adapters_.end(); }

 private:
  std::map<SiteKey, LoraAdapter> adapters_;
};

/// Q/K/V/O adapters for `layers` attention blocks of width d.
AdapterSet make_attention_adapters(int layers, std::size_t d, std::size_t rank, double alpha, std::uint64_t seed);

class Checkpoint;

/// Stores every factor plus "<prefix><site>/meta" = [rank, alpha].
void save_adapters(const AdapterSet& set, Checkpoint& ckpt, const std::string& prefix = "adapters/");
/// Rebuilds the set saved under `prefix`; empty when none was saved.
AdapterSet load_adapters(const Checkpoint& ckpt, const std::string& prefix = "adapters/");

/// Projection through an optional adapter.
Tensor project(const Tensor& w_base, const Tensor& x, const LoraAdapter* adapter);

}  // namespace coadapt
