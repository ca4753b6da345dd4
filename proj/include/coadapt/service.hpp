// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Session service: file-backed session store, the JSON API over it and the
// HTTP binding.
//
// Store layout under the root directory:
//   sessions/<id>/session.json     transcript document, replaced atomically
//   sessions/<id>/r<k>_a.png       shown image of round k
//   sessions/<id>/r<k>_b.png       alternative candidate of round k
//   preferences.jsonl              A/B choices as preference pair lines

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coadapt/dialogue.hpp"
#include "coadapt/records.hpp"

namespace coadapt {

enum class ApiErrorCode : std::uint8_t {
  kBadRequest,       // body is not valid JSON or has the wrong shape
  kValidation,       // well-formed but out-of-range values
  kSessionNotFound,
  kRoundNotFound,
  kSessionClosed,    // accepted or abandoned
  kDuplicateChoice,
  kNoAlternative,    // the round carries no A/B pair
  kUnknownEndpoint,
  kInternal,
};

std::string_view error_code_name(ApiErrorCode code);
int http_status(ApiErrorCode code);

class ApiError : public std::runtime_error {
 public:
  ApiError(ApiErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
  ApiErrorCode code() const { return code_; }
  /// {"error": {"code": "...", "message": "..."}}
  Json to_json() const;

 private:
  ApiErrorCode code_;
};

class SessionStore {
 public:
  /// Creates the layout if needed, restores choice markers from the
  /// preference file and removes temporaries of interrupted writes. Assumes
  /// one process per store.
  explicit SessionStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path session_dir(const std::string& id) const;
  std::filesystem::path preference_file() const { return root_ / "preferences.jsonl"; }

  bool exists(const std::string& id) const;
  std::vector<std::string> list() const;

  /// Writes the images first, then the document, each atomically.
  void save(const DialogueSession& session);
  /// The stored document with image file names. Choices present in the
  /// preference file but missing from the document are filled in.
  Json load_document(const std::string& id) const;
  DialogueSession load(const std::string& id) const;

  /// Appends the pair line unless (id, round) was already recorded.
  /// Returns false for a duplicate.
  bool record_choice(const PairLine& line);
  bool has_choice(const std::string& id, int round) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex choice_mutex_;
  std::map<std::pair<std::string, int>, Choice> choices_;
};

/// Transcript document (images referenced by file name).
Json session_document(const DialogueSession& session);
/// Inverse of session_document; images are read from `dir`.
DialogueSession session_from_document(const Json& doc, const std::filesystem::path& dir);
std::string round_image_name(int round, bool alternative);
bool is_valid_session_id(std::string_view id);

class SessionService {
 public:
  /// `ctx` must stay valid for the lifetime of the service.
  SessionService(SessionStore& store, GenerationContext ctx, int default_max_rounds = 10);

  /// Body: {"prompt": tuple | "random", "seed"?: int | string, "max_rounds"?: int}
  Json create_session(const Json& body);
  /// Body: a feedback object, or {"kind": "abandon"} to close the session.
  Json post_feedback(const std::string& id, const Json& body);
  /// The stored document with "image_png" and "alt_image_png" inlined per round.
  Json get_session(const std::string& id);
  /// Body: {"choice": "A" | "B"}
  Json choose(const std::string& id, int round, const Json& body);
  Json health() const;

  /// Regenerates every stored round and compares PNG bytes and latents.
  bool verify_replay(const std::string& id) const;

 private:
  std::mutex& lock_for(const std::string& id);
  Json round_view(const DialogueSession& session, const RoundRecord& rec) const;
  Json prompt_view(const PromptState& prompt) const;

  SessionStore& store_;
  GenerationContext ctx_;
  int default_max_rounds_;
  std::mutex table_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

/// Blocks serving HTTP on host:port until the process receives SIGINT or
/// SIGTERM. Throws std::runtime_error when the address cannot be bound.
void run_http_server(SessionService& service, const std::string& host, int port);

}  // namespace coadapt
