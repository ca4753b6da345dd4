// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sprite world: a closed attribute space rendered to 16x16 RGB bitmaps, an
// exact nearest-render perceiver, and a rule-based simulated user.

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "coadapt/tensor.hpp"

namespace coadapt {

/// Attribute fields in the fixed order used by feedback rules.
enum class Field : std::uint8_t { kShape = 0, kColor, kSize, kBackground, kCount };

inline constexpr std::array<Field, 5> kFields{Field::kShape, Field::kColor, Field::kSize,
                                              Field::kBackground, Field::kCount};

std::string_view field_name(Field field);
std::optional<Field> parse_field(std::string_view name);

/// Inclusive legal value range of a field.
struct FieldRange {
  int lo;
  int hi;
};
FieldRange field_range(Field field);

inline constexpr std::array<std::string_view, 3> kShapeNames{"circle", "square", "triangle"};
inline constexpr std::array<std::string_view, 3> kSizeNames{"small", "medium", "large"};

struct AttributeTuple {
  int shape = 0;       // 0..2 circle, square, triangle
  int color = 0;       // 0..7 palette entry
  int size = 0;        // 0..2 small, medium, large
  int background = 0;  // 0..3
  int count = 1;       // 1..3 objects

  static constexpr std::size_t kSpaceSize = 3 * 8 * 3 * 4 * 3;

  bool valid() const;
  int get(Field field) const;
  /// Copy with one field overridden; throws std::invalid_argument if the value
  /// is outside the field range.
  AttributeTuple with(Field field, int value) const;

  /// Dense index in [0, kSpaceSize).
  std::size_t index() const;
  static AttributeTuple from_index(std::size_t index);
  static AttributeTuple random(std::mt19937_64& rng);

  std::string describe() const;

  auto operator<=>(const AttributeTuple&) const = default;
};

int mismatch_count(const AttributeTuple& a, const AttributeTuple& b);

/// One-hot slot layout shared by the prompt embedders: every (field, value)
/// pair owns one of 21 rows.
inline constexpr std::size_t kAttributeSlots = 21;
std::array<std::size_t, 5> attribute_slots(const AttributeTuple& attrs);

struct SpriteImage {
  static constexpr std::size_t kSide = 16;
  static constexpr std::size_t kChannels = 3;
  static constexpr std::size_t kNumValues = kSide * kSide * kChannels;

  std::array<double, kNumValues> pixels{};  // HWC, each channel in [0, 1]

  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * kSide + x) * kChannels + c];
  }
  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * kSide + x) * kChannels + c]; }

  /// [16, 16, 3] tensor view of the pixels.
  Tensor to_tensor() const;
  /// Values are clamped into [0, 1].
  static SpriteImage from_tensor(const Tensor& t);

  bool operator==(const SpriteImage&) const = default;
};

using Rgb = std::array<double, 3>;
const Rgb& object_color(int index);
const Rgb& background_color(int index);

SpriteImage render(const AttributeTuple& attrs);

/// Nearest render (squared pixel distance) over the whole attribute space;
/// ties resolve to the lowest tuple index.
AttributeTuple perceive(const SpriteImage& image);

struct Feedback {
  enum class Kind : std::uint8_t { kAttributeCorrection, kFreeText, kAccept, kReject };

  Kind kind = Kind::kAccept;
  Field field = Field::kShape;
  int value = 0;
  std::string text;

  static Feedback accept() { return {}; }
  static Feedback reject() { return {Kind::kReject, Field::kShape, 0, {}}; }
  static Feedback correction(Field field, int value) { return {Kind::kAttributeCorrection, field, value, {}}; }
  static Feedback free_text(std::string text) { return {Kind::kFreeText, Field::kShape, 0, std::move(text)}; }

  bool operator==(const Feedback&) const = default;
};

std::string_view kind_name(Feedback::Kind kind);

struct SimulatedUser {
  AttributeTuple target;
  int patience = 10;
};

/// Accept when the perceived tuple equals the target; otherwise correct the
/// first mismatched field (fixed field order) to its target value.
Feedback user_feedback(const SimulatedUser& user, const SpriteImage& image);

enum class Choice : std::uint8_t { kA, kB };

/// Image whose perceived tuple is closer to the target; ties go to A.
Choice preference_label(const SimulatedUser& user, const SpriteImage& a, const SpriteImage& b);

}  // namespace coadapt
