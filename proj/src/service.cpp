// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "coadapt/service.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <random>
#include <sstream>

#include <httplib.h>

#include "coadapt/io.hpp"

namespace coadapt {

namespace {

constexpr int kMaxRoundsLimit = 100;

std::string_view choice_name(Choice c) { return c == Choice::kA ? "A" : "B"; }

std::optional<Choice> parse_choice(std::string_view s) {
  if (s == "A") return Choice::kA;
  if (s == "B") return Choice::kB;
  return std::nullopt;
}

std::string new_session_id() {
  std::random_device rd;
  const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t random_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

Json seed_json(const std::optional<std::uint64_t>& seed) {
  return seed ? Json(seed_to_string(*seed)) : Json(nullptr);
}

ApiError validation(const std::string& what) { return {ApiErrorCode::kValidation, what}; }

}  // namespace

std::string_view error_code_name(ApiErrorCode code) {
  switch (code) {
    case ApiErrorCode::kBadRequest:
      return "bad_request";
    case ApiErrorCode::kValidation:
      return "validation_failed";
    case ApiErrorCode::kSessionNotFound:
      return "session_not_found";
    case ApiErrorCode::kRoundNotFound:
      return "round_not_found";
    case ApiErrorCode::kSessionClosed:
      return "session_closed";
    case ApiErrorCode::kDuplicateChoice:
      return "duplicate_choice";
    case ApiErrorCode::kNoAlternative:
      return "no_alternative";
    case ApiErrorCode::kUnknownEndpoint:
      return "unknown_endpoint";
    case ApiErrorCode::kInternal:
      return "internal";
  }
  return "internal";
}

int http_status(ApiErrorCode code) {
  switch (code) {
    case ApiErrorCode::kBadRequest:
      return 400;
    case ApiErrorCode::kValidation:
      return 422;
    case ApiErrorCode::kSessionNotFound:
    case ApiErrorCode::kRoundNotFound:
    case ApiErrorCode::kUnknownEndpoint:
      return 404;
    case ApiErrorCode::kSessionClosed:
    case ApiErrorCode::kDuplicateChoice:
    case ApiErrorCode::kNoAlternative:
      return 409;
    case ApiErrorCode::kInternal:
      return 500;
  }
  return 500;
}

Json ApiError::to_json() const {
  return {{"error", {{"code", error_code_name(code_)}, {"message", what()}}}};
}

// --- documents -------------------------------------------------------------

std::string round_image_name(int round, bool alternative) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "r%03d_%c.png", round, alternative ? 'b' : 'a');
  return buf;
}

bool is_valid_session_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '-' || c == '_';
  });
}

Json session_document(const DialogueSession& s) {
  Json history = Json::array();
  for (const auto& [fb, tuple] : s.prompt.history) history.push_back({{"feedback", to_json(fb)}, {"prompt", to_json(tuple)}});
  Json rounds = Json::array();
  for (const RoundRecord& r : s.rounds) {
    const bool later = r.index > 1;
    rounds.push_back({
        {"index", r.index},
        {"prompt", to_json(r.prompt)},
        {"seed", seed_to_string(r.seed)},
        {"tau1", later ? Json(r.steps.tau1) : Json(nullptr)},
        {"tau2", later ? Json(r.steps.tau2) : Json(nullptr)},
        {"latent", r.latent.data()},
        {"image", round_image_name(r.index, false)},
        {"alt_seed", seed_json(r.alt_seed)},
        {"alt_image", r.alt_image ? Json(round_image_name(r.index, true)) : Json(nullptr)},
        {"rewards", to_json(r.rewards)},
        {"feedback", r.feedback ? to_json(*r.feedback) : Json(nullptr)},
        {"choice", r.choice ? Json(choice_name(*r.choice)) : Json(nullptr)},
    });
  }
  return {{"id", s.id},
          {"seed", seed_to_string(s.seed)},
          {"max_rounds", s.max_rounds},
          {"status", status_name(s.status)},
          {"prompt", {{"current", to_json(s.prompt.current)}, {"history", history}}},
          {"rounds", rounds}};
}

DialogueSession session_from_document(const Json& doc, const std::filesystem::path& dir) {
  reject_unknown_keys(doc, {"id", "seed", "max_rounds", "status", "prompt", "rounds"}, "session");
  DialogueSession s;
  s.id = get_string(doc, "id", "session");
  s.seed = seed_from_json(require(doc, "seed", "session"));
  s.max_rounds = static_cast<int>(get_int(doc, "max_rounds", "session"));
  const auto status = parse_status(get_string(doc, "status", "session"));
  if (!status) throw FormatError("session.status: unknown status");
  s.status = *status;

  const Json& prompt = require(doc, "prompt", "session");
  reject_unknown_keys(prompt, {"current", "history"}, "session.prompt");
  s.prompt.current = tuple_from_json(require(prompt, "current", "session.prompt"));
  const Json& history = require(prompt, "history", "session.prompt");
  if (!history.is_array()) throw FormatError("session.prompt.history: expected an array");
  for (const Json& h : history) {
    reject_unknown_keys(h, {"feedback", "prompt"}, "session.prompt.history");
    s.prompt.history.emplace_back(feedback_from_json(require(h, "feedback", "history")),
                                  tuple_from_json(require(h, "prompt", "history")));
  }

  const Json& rounds = require(doc, "rounds", "session");
  if (!rounds.is_array()) throw FormatError("session.rounds: expected an array");
  for (const Json& r : rounds) {
    reject_unknown_keys(r,
                        {"index", "prompt", "seed", "tau1", "tau2", "latent", "image", "alt_seed", "alt_image",
                         "rewards", "feedback", "choice"},
                        "round");
    RoundRecord rec;
    rec.index = static_cast<int>(get_int(r, "index", "round"));
    if (rec.index != static_cast<int>(s.rounds.size()) + 1) throw FormatError("round.index: rounds out of order");
    rec.prompt = tuple_from_json(require(r, "prompt", "round"));
    rec.seed = seed_from_json(require(r, "seed", "round"));
    if (rec.index > 1) {
      rec.steps.tau1 = static_cast<int>(get_int(r, "tau1", "round"));
      rec.steps.tau2 = static_cast<int>(get_int(r, "tau2", "round"));
    }
    const Json& latent = require(r, "latent", "round");
    if (!latent.is_array()) throw FormatError("round.latent: expected an array");
    rec.latent = Tensor({latent.size()}, latent.get<std::vector<double>>());
    rec.image = read_png(dir / get_string(r, "image", "round"));
    if (const Json& alt = require(r, "alt_seed", "round"); !alt.is_null()) {
      rec.alt_seed = seed_from_json(alt);
      rec.alt_image = read_png(dir / get_string(r, "alt_image", "round"));
    }
    rec.rewards = breakdown_from_json(require(r, "rewards", "round"));
    if (const Json& fb = require(r, "feedback", "round"); !fb.is_null()) rec.feedback = feedback_from_json(fb);
    if (const Json& ch = require(r, "choice", "round"); !ch.is_null()) {
      if (!ch.is_string() || !parse_choice(ch.get<std::string>())) throw FormatError("round.choice: expected A or B");
      rec.choice = parse_choice(ch.get<std::string>());
    }
    s.rounds.push_back(std::move(rec));
  }
  return s;
}

// --- store -----------------------------------------------------------------

namespace {

// The positive image of a recorded pair is the chosen one.
Choice chosen_side(const PairLine& line) {
  return line.positive.ends_with(round_image_name(line.round, true)) ? Choice::kB : Choice::kA;
}

}  // namespace

SessionStore::SessionStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_ / "sessions");
  if (std::filesystem::exists(preference_file())) {
    for (const auto& line : read_lines(preference_file())) {
      // A torn last line from a crash mid-append is skipped.
      PairLine p;
      try {
        p = pair_line_from_json(Json::parse(line));
      } catch (const std::exception&) {
        continue;
      }
      if (!p.session.empty()) choices_.emplace(std::pair{p.session, p.round}, chosen_side(p));
    }
  }
  // Temporaries left by a process killed mid-write.
  for (const auto& e : std::filesystem::recursive_directory_iterator(root_ / "sessions")) {
    if (e.is_regular_file() && e.path().filename().string().find(".tmp.") != std::string::npos) {
      std::filesystem::remove(e.path());
    }
  }
}

std::filesystem::path SessionStore::session_dir(const std::string& id) const {
  if (!is_valid_session_id(id)) throw std::invalid_argument("invalid session id");
  return root_ / "sessions" / id;
}

bool SessionStore::exists(const std::string& id) const {
  return is_valid_session_id(id) && std::filesystem::exists(session_dir(id) / "session.json");
}

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(root_ / "sessions")) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "session.json")) out.push_back(e.path().filename());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void SessionStore::save(const DialogueSession& session) {
  const auto dir = session_dir(session.id);
  std::filesystem::create_directories(dir);
  // A request killed after writing images but before the document leaves
  // files that a retry may not reproduce, so compare instead of trusting them.
  auto put = [&](const std::filesystem::path& file, const SpriteImage& image) {
    const auto bytes = encode_png(image);
    const std::string_view view(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    if (std::filesystem::exists(file) && read_file(file) == view) return;
    write_file_atomic(file, view);
  };
  for (const RoundRecord& r : session.rounds) {
    put(dir / round_image_name(r.index, false), r.image);
    if (r.alt_image) put(dir / round_image_name(r.index, true), *r.alt_image);
  }
  write_file_atomic(dir / "session.json", session_document(session).dump(2));
}

Json SessionStore::load_document(const std::string& id) const {
  Json doc = Json::parse(read_file(session_dir(id) / "session.json"));
  // A crash between the preference append and the document write loses the
  // marker in the document only; the preference file is authoritative.
  std::lock_guard lock(choice_mutex_);
  if (doc.contains("rounds") && doc["rounds"].is_array()) {
    for (Json& r : doc["rounds"]) {
      if (!r.is_object() || !r.contains("index") || !r["index"].is_number_integer()) continue;
      const auto it = choices_.find({id, r["index"].get<int>()});
      if (it != choices_.end() && r.contains("choice") && r["choice"].is_null()) r["choice"] = choice_name(it->second);
    }
  }
  return doc;
}

DialogueSession SessionStore::load(const std::string& id) const {
  return session_from_document(load_document(id), session_dir(id));
}

bool SessionStore::record_choice(const PairLine& line) {
  std::lock_guard lock(choice_mutex_);
  if (!choices_.emplace(std::pair{line.session, line.round}, chosen_side(line)).second) return false;
  try {
    append_line(preference_file(), to_json(line).dump());
  } catch (...) {
    choices_.erase({line.session, line.round});
    throw;
  }
  return true;
}

bool SessionStore::has_choice(const std::string& id, int round) const {
  std::lock_guard lock(choice_mutex_);
  return choices_.contains({id, round});
}

// --- service ---------------------------------------------------------------

SessionService::SessionService(SessionStore& store, GenerationContext ctx, int default_max_rounds)
    : store_(store), ctx_(ctx), default_max_rounds_(default_max_rounds) {
  if (ctx_.model == nullptr || ctx_.schedule == nullptr) throw std::invalid_argument("service needs a model");
  ctx_.with_alternative = true;
}

std::mutex& SessionService::lock_for(const std::string& id) {
  std::lock_guard lock(table_mutex_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

Json SessionService::prompt_view(const PromptState& prompt) const {
  Json history = Json::array();
  for (const auto& [fb, tuple] : prompt.history) history.push_back({{"feedback", to_json(fb)}, {"prompt", to_json(tuple)}});
  return {{"current", to_json(prompt.current)}, {"description", prompt.current.describe()}, {"history", history}};
}

Json SessionService::round_view(const DialogueSession& session, const RoundRecord& rec) const {
  const auto dir = store_.session_dir(session.id);
  auto png64 = [&](bool alt) {
    const std::string bytes = read_file(dir / round_image_name(rec.index, alt));
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  };
  Json j{{"index", rec.index},
         {"prompt", to_json(rec.prompt)},
         {"seed", seed_to_string(rec.seed)},
         {"tau1", rec.index > 1 ? Json(rec.steps.tau1) : Json(nullptr)},
         {"tau2", rec.index > 1 ? Json(rec.steps.tau2) : Json(nullptr)},
         {"image_png", png64(false)},
         {"alt_image_png", rec.alt_image ? Json(png64(true)) : Json(nullptr)},
         {"rewards", to_json(rec.rewards)},
         {"feedback", rec.feedback ? to_json(*rec.feedback) : Json(nullptr)},
         {"choice", rec.choice ? Json(choice_name(*rec.choice)) : Json(nullptr)}};
  return j;
}

namespace {

DialogueSession load_or_throw(const SessionStore& store, const std::string& id, const GenerationContext& ctx) {
  if (!store.exists(id)) throw ApiError(ApiErrorCode::kSessionNotFound, "no session '" + id + "'");
  DialogueSession s = store.load(id);
  const Shape shape = ctx.model->config().latent_shape();
  for (RoundRecord& r : s.rounds) r.latent = reshape(r.latent, shape);
  // Features are derived data; only the latest round feeds the next one.
  if (!s.rounds.empty()) s.rounds.back().features = ctx.model->extract_features(s.rounds.back().latent);
  return s;
}

}  // namespace

Json SessionService::create_session(const Json& body) {
  if (!body.is_object()) throw ApiError(ApiErrorCode::kBadRequest, "body must be a JSON object");
  AttributeTuple prompt;
  std::uint64_t seed = 0;
  int max_rounds = default_max_rounds_;
  try {
    reject_unknown_keys(body, {"prompt", "seed", "max_rounds"}, "body");
    seed = body.contains("seed") ? seed_from_json(body["seed"]) : random_seed();
    if (body.contains("max_rounds")) {
      const auto m = get_int(body, "max_rounds", "body");
      if (m < 1 || m > kMaxRoundsLimit) throw FormatError("body.max_rounds: must lie in [1, 100]");
      max_rounds = static_cast<int>(m);
    }
    const Json& p = require(body, "prompt", "body");
    if (p.is_string() && p.get<std::string>() == "random") {
      std::mt19937_64 rng(seed);
      prompt = AttributeTuple::random(rng);
    } else {
      prompt = tuple_from_json(p);
    }
  } catch (const FormatError& e) {
    throw validation(e.what());
  }
  std::string id = new_session_id();
  while (store_.exists(id)) id = new_session_id();
  std::lock_guard lock(lock_for(id));
  DialogueSession s = start_session(id, prompt, seed, max_rounds);
  next_round(s, ctx_);
  store_.save(s);
  return {{"id", s.id},
          {"seed", seed_to_string(s.seed)},
          {"max_rounds", s.max_rounds},
          {"status", status_name(s.status)},
          {"prompt", prompt_view(s.prompt)},
          {"round", round_view(s, s.rounds.back())},
          {"lambda", to_json(reward_schedule(1))}};
}

Json SessionService::post_feedback(const std::string& id, const Json& body) {
  if (!body.is_object()) throw ApiError(ApiErrorCode::kBadRequest, "body must be a JSON object");
  const bool abandon = body.contains("kind") && body["kind"] == "abandon";
  Feedback fb;
  try {
    if (abandon) {
      reject_unknown_keys(body, {"kind"}, "feedback");
    } else {
      fb = feedback_from_json(body);
    }
  } catch (const FormatError& e) {
    throw validation(e.what());
  }
  if (!is_valid_session_id(id)) throw ApiError(ApiErrorCode::kSessionNotFound, "no session '" + id + "'");
  std::lock_guard lock(lock_for(id));
  DialogueSession s = load_or_throw(store_, id, ctx_);
  if (s.status != SessionStatus::kActive) {
    throw ApiError(ApiErrorCode::kSessionClosed, "session is " + std::string(status_name(s.status)));
  }
  const NullRefiner refiner;
  if (abandon) {
    s.status = SessionStatus::kAbandoned;
  } else {
    try {
      apply_feedback(s, fb, refiner);
    } catch (const std::invalid_argument& e) {
      throw validation(e.what());
    }
  }
  if (s.status == SessionStatus::kActive) next_round(s, ctx_);
  store_.save(s);
  const bool fresh = s.status == SessionStatus::kActive;
  return {{"id", s.id},
          {"status", status_name(s.status)},
          {"prompt", prompt_view(s.prompt)},
          {"round", fresh ? round_view(s, s.rounds.back()) : Json(nullptr)},
          {"lambda", to_json(reward_schedule(static_cast<int>(s.rounds.size())))}};
}

Json SessionService::get_session(const std::string& id) {
  if (!is_valid_session_id(id)) throw ApiError(ApiErrorCode::kSessionNotFound, "no session '" + id + "'");
  std::lock_guard lock(lock_for(id));
  if (!store_.exists(id)) throw ApiError(ApiErrorCode::kSessionNotFound, "no session '" + id + "'");
  // The stored document verbatim, with the referenced images inlined.
  Json doc = store_.load_document(id);
  const auto dir = store_.session_dir(id);
  auto png64 = [&](const std::string& name) {
    const std::string bytes = read_file(dir / name);
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  };
  for (Json& r : doc["rounds"]) {
    r["image_png"] = png64(r["image"].get<std::string>());
    r["alt_image_png"] = r["alt_image"].is_string() ? Json(png64(r["alt_image"].get<std::string>())) : Json(nullptr);
  }
  return doc;
}

Json SessionService::choose(const std::string& id, int round, const Json& body) {
  if (!body.is_object()) throw ApiError(ApiErrorCode::kBadRequest, "body must be a JSON object");
  std::optional<Choice> choice;
  try {
    reject_unknown_keys(body, {"choice"}, "body");
    choice = parse_choice(get_string(body, "choice", "body"));
    if (!choice) throw FormatError("body.choice: expected \"A\" or \"B\"");
  } catch (const FormatError& e) {
    throw validation(e.what());
  }
  if (!is_valid_session_id(id)) throw ApiError(ApiErrorCode::kSessionNotFound, "no session '" + id + "'");
  std::lock_guard lock(lock_for(id));
  DialogueSession s = load_or_throw(store_, id, ctx_);
  if (round < 1 || round > static_cast<int>(s.rounds.size())) {
    throw ApiError(ApiErrorCode::kRoundNotFound, "no round " + std::to_string(round));
  }
  RoundRecord& rec = s.rounds[static_cast<std::size_t>(round - 1)];
  if (!rec.alt_image) throw ApiError(ApiErrorCode::kNoAlternative, "round has no alternative image");
  if (rec.choice || store_.has_choice(id, round)) {
    throw ApiError(ApiErrorCode::kDuplicateChoice, "round " + std::to_string(round) + " already has a choice");
  }
  const std::string rel = "sessions/" + id + "/";
  const bool a_wins = *choice == Choice::kA;
  PairLine line;
  line.prompt = rec.prompt;
  line.positive = rel + round_image_name(round, !a_wins);
  line.negative = rel + round_image_name(round, a_wins);
  line.session = id;
  line.round = round;
  if (!store_.record_choice(line)) {
    throw ApiError(ApiErrorCode::kDuplicateChoice, "round " + std::to_string(round) + " already has a choice");
  }
  rec.choice = choice;
  store_.save(s);
  return {{"id", id}, {"round", round}, {"choice", choice_name(*choice)}, {"pair", to_json(line)}};
}

Json SessionService::health() const {
  return {{"status", "ok"}, {"sessions", store_.list().size()}, {"steps", ctx_.schedule->steps}};
}

bool SessionService::verify_replay(const std::string& id) const {
  const DialogueSession s = store_.load(id);
  const auto dir = store_.session_dir(id);
  std::optional<RoundRecord> previous;
  for (const RoundRecord& rec : s.rounds) {
    const RoundRecord* prev = previous ? &*previous : nullptr;
    const Generation g = generate_round(ctx_, rec.prompt, rec.index, rec.seed, prev, rec.steps);
    if (!std::ranges::equal(g.latent.data(), rec.latent.data())) return false;
    const auto png = encode_png(g.image);
    const std::string stored = read_file(dir / round_image_name(rec.index, false));
    if (!std::ranges::equal(png, stored, [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); })) {
      return false;
    }
    if (rec.alt_seed) {
      const Generation alt = generate_round(ctx_, rec.prompt, rec.index, *rec.alt_seed, prev, rec.steps);
      const auto alt_png = encode_png(alt.image);
      const std::string alt_stored = read_file(dir / round_image_name(rec.index, true));
      if (!std::ranges::equal(alt_png, alt_stored,
                              [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); })) {
        return false;
      }
    }
    previous = rec;
    previous->latent = g.latent;
  }
  return true;
}

// --- http ------------------------------------------------------------------

namespace {

httplib::Server* g_server = nullptr;

void handle_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, int ok_status, F&& f) {
  try {
    send_json(res, ok_status, f());
  } catch (const ApiError& e) {
    send_json(res, http_status(e.code()), e.to_json());
  } catch (const std::exception& e) {
    const ApiError err(ApiErrorCode::kInternal, e.what());
    send_json(res, http_status(err.code()), err.to_json());
  }
}

Json parse_body(const httplib::Request& req) {
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw ApiError(ApiErrorCode::kBadRequest, "body is not valid JSON");
  return j;
}

}  // namespace

void run_http_server(SessionService& service, const std::string& host, int port) {
  httplib::Server server;
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get("/healthz", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, 200, [&] { return service.health(); });
  });
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, 201, [&] { return service.create_session(parse_body(req)); });
  });
  server.Get(R"(/sessions/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, 200, [&] { return service.get_session(req.matches[1]); });
  });
  server.Post(R"(/sessions/([^/]+)/feedback)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, 200, [&] { return service.post_feedback(req.matches[1], parse_body(req)); });
  });
  server.Post(R"(/sessions/([^/]+)/rounds/(\d{1,6})/choice)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, 201, [&] { return service.choose(req.matches[1], std::stoi(req.matches[2]), parse_body(req)); });
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) {
      const ApiError err(ApiErrorCode::kUnknownEndpoint, "no such endpoint");
      send_json(res, 404, err.to_json());
    }
  });

  if (!server.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  server.listen_after_bind();
  g_server = nullptr;
}

}  // namespace coadapt
