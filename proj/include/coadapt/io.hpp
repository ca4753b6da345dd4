// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// File helpers: atomic writes, line-delimited appends, PNG and base64.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "coadapt/world.hpp"

namespace coadapt {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes `contents` to a temporary sibling, fsyncs it and renames it over
/// `path`, so readers observe either the old or the new file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Appends one line (a newline is added) with a single O_APPEND write.
void append_line(const std::filesystem::path& path, std::string_view line);
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// 16-bit RGB PNG; the round trip is exact to 1/65535.
std::vector<std::uint8_t> encode_png(const SpriteImage& image);
SpriteImage decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const SpriteImage& image);
SpriteImage read_png(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace coadapt
