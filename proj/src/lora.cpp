// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/lora.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "coadapt/checkpoint.hpp"

namespace coadapt {

Tensor LoraAdapter::delta() const { return scale(matmul(b, a), scaling()); }

LoraAdapter init_adapter(std::size_t d_out, std::size_t d_in, std::size_t rank, std::uint64_t seed,
                         double alpha) {
  if (rank == 0 || rank > std::min(d_out, d_in)) {
    throw std::invalid_argument("init_adapter: rank " + std::to_string(rank) + " not in [1, " +
                                std::to_string(std::min(d_out, d_in)) + "]");
  }
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  LoraAdapter out;
  out.a = Tensor::uniform({rank, d_in}, rng, -bound, bound);
  out.b = Tensor::zeros({d_out, rank});
  out.rank = rank;
  out.alpha = alpha;
  return out;
}

Tensor apply(const LoraAdapter& adapter, const Tensor& w_base, const Tensor& x) {
  if (w_base.rank() != 2 || adapter.b.dim(0) != w_base.dim(0) || adapter.a.dim(1) != w_base.dim(1)) {
    throw ShapeError("lora apply: adapter does not fit weight " + to_string(w_base.shape()));
  }
  Tensor base = matmul(w_base, x);
  Tensor low = matmul(adapter.b, matmul(adapter.a, x));
  return add(base, scale(low, adapter.scaling()));
}

Tensor merge(const LoraAdapter& adapter, const Tensor& w_base) { return add(w_base, adapter.delta()); }

void reward_step(LoraAdapter& adapter, double lr) {
  if (!adapter.a.has_grad() || !adapter.b.has_grad()) {
    throw std::logic_error("reward_step: adapter factors carry no gradient");
  }
  for (Tensor* t : {&adapter.a, &adapter.b}) {
    const auto& g = t->impl()->grad;
    auto w = t->mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += lr * g[i];
  }
}

std::string site_name(const SiteKey& key) {
  static constexpr const char* kNames[] = {"q", "k", "v", "o"};
  return "L" + std::to_string(key.layer) + "/" + kNames[static_cast<int>(key.site)];
}

void AdapterSet::add(SiteKey key, LoraAdapter adapter) {
  if (!adapters_.emplace(key, std::move(adapter)).second) {
    throw std::invalid_argument("adapter set: site " + site_name(key) + " already adapted");
  }
}

const LoraAdapter* AdapterSet::find(SiteKey key) const {
  auto it = adapters_.find(key);
  return it == adapters_.end() ? nullptr : &it->second;
}

LoraAdapter* AdapterSet::find(SiteKey key) {
  auto it = adapters_.find(key);
  return it == adapters_.end() ? nullptr : &it->second;
}

ParameterList AdapterSet::parameters(const std::string& prefix) const {
  ParameterList out;
  for (const auto& [key, adapter] : adapters_) {
    out.push_back({prefix + site_name(key) + "/A", adapter.a});
    out.push_back({prefix + site_name(key) + "/B", adapter.b});
  }
  return out;
}

AdapterSet AdapterSet::clone() const {
  AdapterSet out;
  for (const auto& [key, adapter] : adapters_) {
    LoraAdapter copy = adapter;
    copy.a = adapter.a.detach().set_requires_grad(adapter.a.requires_grad());
    copy.b = adapter.b.detach().set_requires_grad(adapter.b.requires_grad());
    out.add(key, std::move(copy));
  }
  return out;
}

AdapterSet make_attention_adapters(int layers, std::size_t d, std::size_t rank, double alpha, std::uint64_t seed) {
  AdapterSet set;
  std::uint64_t s = seed;
  for (int layer = 0; layer < layers; ++layer) {
    for (auto site : {ProjectionSite::kQuery, ProjectionSite::kKey, ProjectionSite::kValue, ProjectionSite::kOutput}) {
      set.add({site, layer}, init_adapter(d, rank, s++, alpha));
    }
  }
  return set;
}

Tensor project(const Tensor& w_base, const Tensor& x, const LoraAdapter* adapter) {
  return adapter == nullptr ? matmul(w_base, x) : apply(*adapter, w_base, x);
}

void save_adapters(const AdapterSet& set, Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& [key, adapter] : set) {
    const std::string base = prefix + site_name(key);
    ckpt.put(base + "/A", adapter.a);
    ckpt.put(base + "/B", adapter.b);
    ckpt.put(base + "/meta", Tensor({2}, {static_cast<double>(adapter.rank), adapter.alpha}));
  }
}

AdapterSet load_adapters(const Checkpoint& ckpt, const std::string& prefix) {
  AdapterSet out;
  for (const auto& [name, value] : ckpt.entries()) {
    if (!name.starts_with(prefix) || !name.ends_with("/meta")) continue;
    // "<prefix>L<layer>/<q|k|v|o>/meta"
    const std::string site = name.substr(prefix.size(), name.size() - prefix.size() - 5);
    const auto slash = site.find('/');
    if (site.size() < 4 || site[0] != 'L' || slash == std::string::npos || slash + 2 != site.size()) {
      throw CheckpointError("adapter entry '" + name + "' is malformed");
    }
    static constexpr std::string_view kSites = "qkvo";
    const auto pos = kSites.find(site[slash + 1]);
    if (pos == std::string_view::npos) throw CheckpointError("adapter entry '" + name + "' has an unknown site");
    SiteKey key{static_cast<ProjectionSite>(pos), std::stoi(site.substr(1, slash - 1))};
    LoraAdapter adapter;
    const auto meta = value.data();
    if (meta.size() != 2) throw CheckpointError("adapter entry '" + name + "' has a bad meta record");
    adapter.rank = static_cast<std::size_t>(meta[0]);
    adapter.alpha = meta[1];
    adapter.a = ckpt.get(prefix + site + "/A");
    adapter.b = ckpt.get(prefix + site + "/B");
    if (adapter.a.shape().size() != 2 || adapter.a.shape()[0] != adapter.rank ||
        adapter.b.shape().size() != 2 || adapter.b.shape()[1] != adapter.rank) {
      throw CheckpointError("adapter '" + site + "' factor shapes disagree with its rank");
    }
    out.add(key, std::move(adapter));
  }
  return out;
}

}  // namespace coadapt
