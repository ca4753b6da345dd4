// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace coadapt {

namespace {

constexpr std::array<Rgb, 8> kObjectPalette{{
    {0.90, 0.10, 0.10},  // red
    {0.10, 0.80, 0.20},  // green
    {0.15, 0.30, 0.95},  // blue
    {0.95, 0.90, 0.10},  // yellow
    {0.90, 0.20, 0.85},  // magenta
    {0.10, 0.85, 0.90},  // cyan
    {1.00, 0.55, 0.05},  // orange
    {0.97, 0.97, 0.97},  // white
}};

constexpr std::array<Rgb, 4> kBackgroundPalette{{
    {0.05, 0.05, 0.05},  // black
    {0.40, 0.40, 0.40},  // gray
    {0.05, 0.08, 0.35},  // navy
    {0.05, 0.30, 0.10},  // forest
}};

constexpr std::array<double, 3> kRadius{2.0, 3.0, 4.0};

struct Center {
  double y;
  double x;
};

std::vector<Center> layout(int count) {
  switch (count) {
    case 1:
      return {{8.0, 8.0}};
    case 2:
      return {{8.0, 4.0}, {8.0, 12.0}};
    default:
      return {{4.5, 4.5}, {4.5, 11.5}, {11.5, 8.0}};
  }
}

bool covers(int shape, double radius, double dy, double dx) {
  switch (shape) {
    case 0:
      return dy * dy + dx * dx <= radius * radius;
    case 1: {
      const double half = radius - 0.2;
      return std::abs(dy) <= half && std::abs(dx) <= half;
    }
    default:
      // Apex up, base down; half-width grows linearly to `radius` at the base.
      return dy >= -radius && dy <= radius * 0.8 && std::abs(dx) <= (dy + radius) * 0.5;
  }
}

const std::vector<SpriteImage>& all_renders() {
  static const std::vector<SpriteImage> table = [] {
    std::vector<SpriteImage> out;
    out.reserve(AttributeTuple::kSpaceSize);
    for (std::size_t i = 0; i < AttributeTuple::kSpaceSize; ++i) out.push_back(render(AttributeTuple::from_index(i)));
    return out;
  }();
  return table;
}

}  // namespace

std::string_view field_name(Field field) {
  switch (field) {
    case Field::kShape:
      return "shape";
    case Field::kColor:
      return "color";
    case Field::kSize:
      return "size";
    case Field::kBackground:
      return "background";
    case Field::kCount:
      return "count";
  }
  return "?";
}

std::optional<Field> parse_field(std::string_view name) {
  for (Field f : kFields) {
    if (field_name(f) == name) return f;
  }
  return std::nullopt;
}

FieldRange field_range(Field field) {
  switch (field) {
    case Field::kShape:
      return {0, 2};
    case Field::kColor:
      return {0, 7};
    case Field::kSize:
      return {0, 2};
    case Field::kBackground:
      return {0, 3};
    case Field::kCount:
      return {1, 3};
  }
  return {0, -1};
}

bool AttributeTuple::valid() const {
  for (Field f : kFields) {
    const auto r = field_range(f);
    const int v = get(f);
    if (v < r.lo || v > r.hi) return false;
  }
  return true;
}

int AttributeTuple::get(Field field) const {
  switch (field) {
    case Field::kShape:
      return shape;
    case Field::kColor:
      return color;
    case Field::kSize:
      return size;
    case Field::kBackground:
      return background;
    case Field::kCount:
      return count;
  }
  return -1;
}

AttributeTuple AttributeTuple::with(Field field, int value) const {
  const auto r = field_range(field);
  if (value < r.lo || value > r.hi) {
    throw std::invalid_argument(std::string(field_name(field)) + " value " + std::to_string(value) +
                                " outside [" + std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
  }
  AttributeTuple out = *this;
  switch (field) {
    case Field::kShape:
      out.shape = value;
      break;
    case Field::kColor:
      out.color = value;
      break;
    case Field::kSize:
      out.size = value;
      break;
    case Field::kBackground:
      out.background = value;
      break;
    case Field::kCount:
      out.count = value;
      break;
  }
  return out;
}

std::size_t AttributeTuple::index() const {
  return static_cast<std::size_t>((((shape * 8 + color) * 3 + size) * 4 + background) * 3 + (count - 1));
}

AttributeTuple AttributeTuple::from_index(std::size_t index) {
  if (index >= kSpaceSize) throw std::out_of_range("attribute tuple index out of range");
  AttributeTuple t;
  auto i = static_cast<int>(index);
  t.count = i % 3 + 1;
  i /= 3;
  t.background = i % 4;
  i /= 4;
  t.size = i % 3;
  i /= 3;
  t.color = i % 8;
  t.shape = i / 8;
  return t;
}

AttributeTuple AttributeTuple::random(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, kSpaceSize - 1);
  return from_index(dist(rng));
}

std::string AttributeTuple::describe() const {
  std::ostringstream os;
  os << count << "x " << kSizeNames.at(static_cast<std::size_t>(size)) << ' '
     << kShapeNames.at(static_cast<std::size_t>(shape)) << " color=" << color << " bg=" << background;
  return os.str();
}

std::array<std::size_t, 5> attribute_slots(const AttributeTuple& attrs) {
  if (!attrs.valid()) throw std::invalid_argument("attribute_slots: invalid tuple");
  std::array<std::size_t, 5> out{};
  std::size_t offset = 0;
  for (std::size_t f = 0; f < kFields.size(); ++f) {
    const FieldRange r = field_range(kFields[f]);
    out[f] = offset + static_cast<std::size_t>(attrs.get(kFields[f]) - r.lo);
    offset += static_cast<std::size_t>(r.hi - r.lo + 1);
  }
  return out;
}

int mismatch_count(const AttributeTuple& a, const AttributeTuple& b) {
  int n = 0;
  for (Field f : kFields) n += a.get(f) != b.get(f) ? 1 : 0;
  return n;
}

Tensor SpriteImage::to_tensor() const {
  return Tensor({kSide, kSide, kChannels}, std::vector<double>(pixels.begin(), pixels.end()));
}

SpriteImage SpriteImage::from_tensor(const Tensor& t) {
  if (t.numel() != kNumValues) throw ShapeError("sprite image needs 768 values, got " + to_string(t.shape()));
  SpriteImage img;
  const auto d = t.data();
  for (std::size_t i = 0; i < kNumValues; ++i) img.pixels[i] = std::clamp(d[i], 0.0, 1.0);
  return img;
}

const Rgb& object_color(int index) { return kObjectPalette.at(static_cast<std::size_t>(index)); }
const Rgb& background_color(int index) { return kBackgroundPalette.at(static_cast<std::size_t>(index)); }

SpriteImage render(const AttributeTuple& attrs) {
  if (!attrs.valid()) throw std::invalid_argument("render: invalid attribute tuple");
  SpriteImage img;
  const Rgb& bg = background_color(attrs.background);
  const Rgb& fg = object_color(attrs.color);
  const double radius = kRadius.at(static_cast<std::size_t>(attrs.size));
  const auto centers = layout(attrs.count);
  for (std::size_t y = 0; y < SpriteImage::kSide; ++y) {
    for (std::size_t x = 0; x < SpriteImage::kSide; ++x) {
      const double py = static_cast<double>(y) + 0.5;
      const double px = static_cast<double>(x) + 0.5;
      bool inside = false;
      for (const Center& c : centers) inside = inside || covers(attrs.shape, radius, py - c.y, px - c.x);
      const Rgb& col = inside ? fg : bg;
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = col[ch];
    }
  }
  return img;
}

AttributeTuple perceive(const SpriteImage& image) {
  const auto& table = all_renders();
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < table.size(); ++i) {
    double d = 0.0;
    const auto& ref = table[i].pixels;
    for (std::size_t k = 0; k < SpriteImage::kNumValues && d < best_dist; ++k) {
      const double diff = image.pixels[k] - ref[k];
      d += diff * diff;
    }
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return AttributeTuple::from_index(best);
}

std::string_view kind_name(Feedback::Kind kind) {
  switch (kind) {
    case Feedback::Kind::kAttributeCorrection:
      return "correction";
    case Feedback::Kind::kFreeText:
      return "free_text";
    case Feedback::Kind::kAccept:
      return "accept";
    case Feedback::Kind::kReject:
      return "reject";
  }
  return "?";
}

Feedback user_feedback(const SimulatedUser& user, const SpriteImage& image) {
  const AttributeTuple seen = perceive(image);
  for (Field f : kFields) {
    if (seen.get(f) != user.target.get(f)) return Feedback::correction(f, user.target.get(f));
  }
  return Feedback::accept();
}

Choice preference_label(const SimulatedUser& user, const SpriteImage& a, const SpriteImage& b) {
  const int ma = mismatch_count(perceive(a), user.target);
  const int mb = mismatch_count(perceive(b), user.target);
  return mb < ma ? Choice::kB : Choice::kA;
}

}  // namespace coadapt
