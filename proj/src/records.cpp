// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/records.hpp"

#include <algorithm>
#include <charconv>

#include "coadapt/io.hpp"

namespace coadapt {

namespace {

std::string where(std::string_view what, std::string_view key) {
  return std::string(what) + "." + std::string(key);
}

std::string_view feedback_kind_wire(Feedback::Kind k) {
  switch (k) {
    case Feedback::Kind::kAccept:
      return "accept";
    case Feedback::Kind::kReject:
      return "reject";
    case Feedback::Kind::kAttributeCorrection:
      return "correction";
    case Feedback::Kind::kFreeText:
      return "free_text";
  }
  return "accept";
}

}  // namespace

void require_object(const Json& j, std::string_view what) {
  if (!j.is_object()) throw FormatError(std::string(what) + ": expected an object");
}

void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view what) {
  require_object(j, what);
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw FormatError(std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

const Json& require(const Json& j, std::string_view key, std::string_view what) {
  require_object(j, what);
  auto it = j.find(std::string(key));
  if (it == j.end()) throw FormatError(where(what, key) + ": missing");
  return *it;
}

std::int64_t get_int(const Json& j, std::string_view key, std::string_view what) {
  const Json& v = require(j, key, what);
  if (!v.is_number_integer()) throw FormatError(where(what, key) + ": expected an integer");
  return v.get<std::int64_t>();
}

double get_number(const Json& j, std::string_view key, std::string_view what) {
  const Json& v = require(j, key, what);
  if (!v.is_number()) throw FormatError(where(what, key) + ": expected a number");
  return v.get<double>();
}

std::string get_string(const Json& j, std::string_view key, std::string_view what) {
  const Json& v = require(j, key, what);
  if (!v.is_string()) throw FormatError(where(what, key) + ": expected a string");
  return v.get<std::string>();
}

bool get_bool(const Json& j, std::string_view key, std::string_view what) {
  const Json& v = require(j, key, what);
  if (!v.is_boolean()) throw FormatError(where(what, key) + ": expected a boolean");
  return v.get<bool>();
}

Json to_json(const AttributeTuple& t) {
  return {{"shape", t.shape}, {"color", t.color}, {"size", t.size}, {"background", t.background}, {"count", t.count}};
}

AttributeTuple tuple_from_json(const Json& j) {
  reject_unknown_keys(j, {"shape", "color", "size", "background", "count"}, "prompt");
  AttributeTuple t;
  for (Field f : kFields) {
    const std::string_view name = field_name(f);
    const std::int64_t v = get_int(j, name, "prompt");
    const FieldRange r = field_range(f);
    if (v < r.lo || v > r.hi) {
      throw FormatError("prompt." + std::string(name) + ": " + std::to_string(v) + " outside [" +
                        std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
    }
    t = t.with(f, static_cast<int>(v));
  }
  return t;
}

Json to_json(const Feedback& f) {
  Json j{{"kind", feedback_kind_wire(f.kind)}};
  if (f.kind == Feedback::Kind::kAttributeCorrection) {
    j["field"] = field_name(f.field);
    j["value"] = f.value;
  } else if (f.kind == Feedback::Kind::kFreeText) {
    j["text"] = f.text;
  }
  return j;
}

Feedback feedback_from_json(const Json& j) {
  const std::string kind = get_string(j, "kind", "feedback");
  if (kind == "accept" || kind == "reject") {
    reject_unknown_keys(j, {"kind"}, "feedback");
    return kind == "accept" ? Feedback::accept() : Feedback::reject();
  }
  if (kind == "correction") {
    reject_unknown_keys(j, {"kind", "field", "value"}, "feedback");
    const auto field = parse_field(get_string(j, "field", "feedback"));
    if (!field) throw FormatError("feedback.field: unknown field");
    const std::int64_t v = get_int(j, "value", "feedback");
    const FieldRange r = field_range(*field);
    if (v < r.lo || v > r.hi) throw FormatError("feedback.value: " + std::to_string(v) + " out of range");
    return Feedback::correction(*field, static_cast<int>(v));
  }
  if (kind == "free_text") {
    reject_unknown_keys(j, {"kind", "text"}, "feedback");
    return Feedback::free_text(get_string(j, "text", "feedback"));
  }
  throw FormatError("feedback.kind: unknown kind '" + kind + "'");
}

Json to_json(const RewardWeights& w) { return {{"div", w.div}, {"cons", w.cons}, {"mi", w.mi}}; }

Json to_json(const RewardBreakdown& r) {
  return {{"round", r.weights.round},
          {"lambda", to_json(r.weights)},
          {"reward", {{"div", r.r_div}, {"cons", r.r_cons}, {"mi", r.r_mi}, {"total", r.total}}}};
}

RewardBreakdown breakdown_from_json(const Json& j) {
  reject_unknown_keys(j, {"round", "lambda", "reward"}, "rewards");
  RewardBreakdown r;
  const Json& lam = require(j, "lambda", "rewards");
  const Json& rew = require(j, "reward", "rewards");
  r.weights.round = static_cast<int>(get_int(j, "round", "rewards"));
  r.weights.div = get_number(lam, "div", "rewards.lambda");
  r.weights.cons = get_number(lam, "cons", "rewards.lambda");
  r.weights.mi = get_number(lam, "mi", "rewards.lambda");
  r.r_div = get_number(rew, "div", "rewards.reward");
  r.r_cons = get_number(rew, "cons", "rewards.reward");
  r.r_mi = get_number(rew, "mi", "rewards.reward");
  r.total = get_number(rew, "total", "rewards.reward");
  return r;
}

Json to_json(const StepReport& r) {
  Json j = to_json(r.rewards);
  j["step"] = r.step;
  j["tau"] = r.tau;
  j["l_noise"] = r.l_noise;
  j["l_multi"] = r.l_multi;
  j["l_reward"] = r.l_reward;
  j["grad_norm"] = {{"adapters", r.grad_norm_adapters}, {"base", r.grad_norm_base}};
  j["checksums"] = {{"base_before_reward", r.base_before_reward},
                    {"base_after_reward", r.base_after_reward},
                    {"adapters_before_noise", r.adapters_before_noise},
                    {"adapters_after_noise", r.adapters_after_noise}};
  return j;
}

Json to_json(const PairLine& p) {
  Json j{{"prompt", to_json(p.prompt)}, {"positive", p.positive}, {"negative", p.negative}, {"label", 1}};
  if (!p.session.empty()) j["source"] = {{"session", p.session}, {"round", p.round}};
  return j;
}

PairLine pair_line_from_json(const Json& j) {
  reject_unknown_keys(j, {"prompt", "positive", "negative", "label", "source"}, "pair");
  if (get_int(j, "label", "pair") != 1) throw FormatError("pair.label: the positive image always carries label 1");
  PairLine p;
  p.prompt = tuple_from_json(require(j, "prompt", "pair"));
  p.positive = get_string(j, "positive", "pair");
  p.negative = get_string(j, "negative", "pair");
  if (j.contains("source")) {
    const Json& src = j["source"];
    reject_unknown_keys(src, {"session", "round"}, "pair.source");
    p.session = get_string(src, "session", "pair.source");
    p.round = static_cast<int>(get_int(src, "round", "pair.source"));
  }
  return p;
}

Json to_json(const DialogueLine& d) {
  return {{"dialogue", d.dialogue},
          {"round", d.round},
          {"prompt", to_json(d.prompt)},
          {"image", d.image},
          {"previous", d.previous.empty() ? Json(nullptr) : Json(d.previous)}};
}

DialogueLine dialogue_line_from_json(const Json& j) {
  reject_unknown_keys(j, {"dialogue", "round", "prompt", "image", "previous"}, "dialogue");
  DialogueLine d;
  d.dialogue = get_string(j, "dialogue", "dialogue");
  d.round = static_cast<int>(get_int(j, "round", "dialogue"));
  if (d.round < 1) throw FormatError("dialogue.round: must be >= 1");
  d.prompt = tuple_from_json(require(j, "prompt", "dialogue"));
  d.image = get_string(j, "image", "dialogue");
  const Json& prev = require(j, "previous", "dialogue");
  if (!prev.is_null()) {
    if (!prev.is_string()) throw FormatError("dialogue.previous: expected a string or null");
    d.previous = prev.get<std::string>();
  }
  return d;
}

std::vector<PreferencePair> load_pairs(const std::filesystem::path& file) {
  const auto dir = file.parent_path();
  std::vector<PreferencePair> out;
  for (const auto& line : read_lines(file)) {
    const PairLine p = pair_line_from_json(Json::parse(line));
    out.push_back({p.prompt, read_png(dir / p.positive), read_png(dir / p.negative)});
  }
  return out;
}

std::vector<FinetuneRecord> load_dialogues(const std::filesystem::path& file) {
  const auto dir = file.parent_path();
  std::vector<FinetuneRecord> out;
  for (const auto& line : read_lines(file)) {
    const DialogueLine d = dialogue_line_from_json(Json::parse(line));
    FinetuneRecord rec;
    rec.dialogue = d.dialogue;
    rec.round = d.round;
    rec.prompt = d.prompt;
    rec.target = read_png(dir / d.image);
    if (!d.previous.empty()) rec.previous = read_png(dir / d.previous);
    out.push_back(std::move(rec));
  }
  return out;
}

std::string seed_to_string(std::uint64_t seed) { return std::to_string(seed); }

std::uint64_t seed_from_json(const Json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) throw FormatError("seed: must be non-negative");
    return static_cast<std::uint64_t>(v);
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) throw FormatError("seed: not a decimal integer");
    return v;
  }
  throw FormatError("seed: expected an integer or decimal string");
}

}  // namespace coadapt
