// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary tensor container.
//
//   magic    8 bytes  "CADPCKPT"
//   version  u32      currently 1
//   count    u32      number of entries
//   entry    u32 name length, name bytes, u32 rank, u64 extents[rank],
//            f64 values[prod(extents)]
//   crc32    u32      over every preceding byte
//
// All integers and floats are little-endian. Names are namespaced by model
// ("denoiser/...", "adapters/...", "preference/...").

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coadapt/tensor.hpp"

namespace coadapt {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
 public:
  void put(const std::string& name, const Tensor& value);
  void put_scalar(const std::string& name, double value) { put(name, Tensor::scalar(value)); }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  /// Copy of the stored tensor. Throws CheckpointError if absent.
  Tensor get(const std::string& name) const;
  double get_scalar(const std::string& name) const { return get(name).item(); }
  /// Copies the stored values into `target` after checking the shape.
  void load_into(const std::string& name, Tensor target) const;

  const std::map<std::string, Tensor>& entries() const { return entries_; }
  /// Merges every entry of `other`, overwriting duplicates.
  void merge(const Checkpoint& other);

 private:
  std::map<std::string, Tensor> entries_;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace coadapt
