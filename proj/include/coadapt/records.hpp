// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON wire and file formats: attribute tuples, feedback, reward
// breakdowns, step reports, dataset lines and session transcripts.

#pragma once

#include <filesystem>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coadapt/dialogue.hpp"
#include "coadapt/preference.hpp"
#include "coadapt/rewards.hpp"
#include "coadapt/trainer.hpp"
#include "coadapt/world.hpp"

namespace coadapt {

using Json = nlohmann::json;

/// Malformed or out-of-range document content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Strict object access. Every helper throws FormatError with the offending
// key in the message.
void require_object(const Json& j, std::string_view what);
void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view what);
const Json& require(const Json& j, std::string_view key, std::string_view what);
std::int64_t get_int(const Json& j, std::string_view key, std::string_view what);
double get_number(const Json& j, std::string_view key, std::string_view what);
std::string get_string(const Json& j, std::string_view key, std::string_view what);
bool get_bool(const Json& j, std::string_view key, std::string_view what);

// {"shape": 0..2, "color": 0..7, "size": 0..2, "background": 0..3, "count": 1..3}
Json to_json(const AttributeTuple& t);
AttributeTuple tuple_from_json(const Json& j);

// {"kind": "accept" | "reject"}
// {"kind": "correction", "field": "<field name>", "value": <int>}
// {"kind": "free_text", "text": "<string>"}
Json to_json(const Feedback& f);
Feedback feedback_from_json(const Json& j);

Json to_json(const RewardWeights& w);
// {"round": t, "lambda": {"div", "cons", "mi"}, "reward": {"div", "cons", "mi", "total"}}
Json to_json(const RewardBreakdown& r);
RewardBreakdown breakdown_from_json(const Json& j);

// One line of a fine-tuning log.
Json to_json(const StepReport& r);

// Dataset lines. Image paths are relative to the dataset file's directory.
// pairs:     {"prompt": tuple, "positive": path, "negative": path, "label": 1,
//             "source": {"session": id, "round": k}}   (source optional)
// dialogues: {"dialogue": id, "round": k, "prompt": tuple, "image": path,
//             "previous": path | null}
struct PairLine {
  AttributeTuple prompt;
  std::string positive;
  std::string negative;
  std::string session;  // empty unless recorded by the service
  int round = 0;
};
Json to_json(const PairLine& p);
PairLine pair_line_from_json(const Json& j);

struct DialogueLine {
  std::string dialogue;
  int round = 1;
  AttributeTuple prompt;
  std::string image;
  std::string previous;  // empty in round 1
};
Json to_json(const DialogueLine& d);
DialogueLine dialogue_line_from_json(const Json& j);

/// Reads a pairs file and loads the referenced PNGs.
std::vector<PreferencePair> load_pairs(const std::filesystem::path& file);
std::vector<FinetuneRecord> load_dialogues(const std::filesystem::path& file);

std::string seed_to_string(std::uint64_t seed);
std::uint64_t seed_from_json(const Json& j);

}  // namespace coadapt
