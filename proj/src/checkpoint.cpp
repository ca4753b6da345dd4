// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "coadapt/io.hpp"

namespace coadapt {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'D', 'P', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <class T>
  void put(T value) {
    auto bits = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    bytes_.insert(bytes_.end(), bits.begin(), bits.end());
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    need(sizeof(T));
    std::array<std::uint8_t, sizeof(T)> bits;
    std::memcpy(bits.data(), bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }
  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated data");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& value) { entries_[name] = value.detach(); }

Tensor Checkpoint::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw CheckpointError("checkpoint: missing entry '" + name + "'");
  return it->second.detach();
}

void Checkpoint::load_into(const std::string& name, Tensor target) const {
  Tensor src = get(name);
  if (src.shape() != target.shape()) {
    throw CheckpointError("checkpoint: entry '" + name + "' has shape " + to_string(src.shape()) + ", expected " +
                          to_string(target.shape()));
  }
  auto dst = target.mutable_data();
  std::copy(src.data().begin(), src.data().end(), dst.begin());
}

void Checkpoint::merge(const Checkpoint& other) {
  for (const auto& [name, t] : other.entries_) entries_[name] = t;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.entries().size()));
  for (const auto& [name, t] : ckpt.entries()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.put<std::uint64_t>(e);
    for (double v : t.data()) w.put<double>(v);
  }
  const std::uint32_t crc = crc_of(w.bytes());
  w.put<std::uint32_t>(crc);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) + 12) throw CheckpointError("checkpoint: file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw CheckpointError("checkpoint: bad magic");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.get<std::uint32_t>() != crc_of(body)) throw CheckpointError("checkpoint: checksum mismatch");

  Reader r(body.subspan(sizeof(kMagic)));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  Checkpoint out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.string(name_len);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>());
    const std::size_t n = shape_numel(shape);
    if (n > r.remaining() / sizeof(double)) throw CheckpointError("checkpoint: truncated tensor '" + name + "'");
    std::vector<double> values(n);
    for (double& v : values) v = r.get<double>();
    out.put(name, Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) throw CheckpointError("checkpoint: trailing bytes");
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace coadapt
