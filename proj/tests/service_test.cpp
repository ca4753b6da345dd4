// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <csignal>
#include <filesystem>
#include <thread>

#include <httplib.h>

#include "coadapt/io.hpp"
#include "coadapt/service.hpp"
#include "test_support.hpp"

namespace coadapt {
namespace {

namespace fs = std::filesystem;

class ServiceTest : public ::testing::Test {
 protected:
  ServiceTest()
      : root_(fs::temp_directory_path() /
              ("coadapt_service_" + std::to_string(::getpid()) + "_" +
               ::testing::UnitTest::GetInstance()->current_test_info()->name())),
        model_(testing::tiny_denoiser(), 3),
        schedule_(NoiseSchedule::linear()) {
    fs::remove_all(root_);
    testing::randomize(model_.base_parameters(), 4, 0.05);
    store_ = std::make_unique<SessionStore>(root_);
    service_ = std::make_unique<SessionService>(*store_, ctx(), 4);
  }
  ~ServiceTest() override { fs::remove_all(root_); }

  GenerationContext ctx() const { return {&model_, nullptr, &schedule_, nullptr, true}; }

  Json create(int max_rounds = 4) {
    return service_->create_session(
        {{"prompt", {{"shape", 1}, {"color", 2}, {"size", 0}, {"background", 3}, {"count", 2}}},
         {"seed", 42},
         {"max_rounds", max_rounds}});
  }

  static ApiErrorCode code_of(const std::function<void()>& f) {
    try {
      f();
    } catch (const ApiError& e) {
      return e.code();
    }
    ADD_FAILURE() << "no ApiError thrown";
    return ApiErrorCode::kInternal;
  }

  fs::path root_;
  DenoiserModel model_;
  NoiseSchedule schedule_;
  std::unique_ptr<SessionStore> store_;
  std::unique_ptr<SessionService> service_;
};

TEST(ServiceBasics, ErrorCodesAndIds) {
  EXPECT_EQ(error_code_name(ApiErrorCode::kDuplicateChoice), "duplicate_choice");
  EXPECT_EQ(http_status(ApiErrorCode::kBadRequest), 400);
  EXPECT_EQ(http_status(ApiErrorCode::kValidation), 422);
  EXPECT_EQ(http_status(ApiErrorCode::kSessionNotFound), 404);
  EXPECT_EQ(http_status(ApiErrorCode::kSessionClosed), 409);
  EXPECT_EQ(http_status(ApiErrorCode::kInternal), 500);
  const Json j = ApiError(ApiErrorCode::kRoundNotFound, "gone").to_json();
  EXPECT_EQ(j["error"]["code"], "round_not_found");
  EXPECT_EQ(j["error"]["message"], "gone");
  EXPECT_TRUE(is_valid_session_id("abc_DEF-09"));
  EXPECT_FALSE(is_valid_session_id(""));
  EXPECT_FALSE(is_valid_session_id("../etc"));
  EXPECT_FALSE(is_valid_session_id(std::string(65, 'a')));
  EXPECT_EQ(round_image_name(3, false), "r003_a.png");
  EXPECT_EQ(round_image_name(12, true), "r012_b.png");
}

TEST_F(ServiceTest, CreateWritesLayoutAndReturnsFirstRound) {
  const Json r = create();
  const std::string id = r["id"];
  EXPECT_EQ(id.size(), 16u);
  EXPECT_EQ(r["status"], "active");
  EXPECT_EQ(r["seed"], "42");
  EXPECT_EQ(r["round"]["index"], 1);
  EXPECT_TRUE(r["round"]["tau1"].is_null());
  EXPECT_DOUBLE_EQ(r["lambda"]["div"].get<double>(), reward_schedule(1).div);
  const auto png = base64_decode(r["round"]["image_png"].get<std::string>());
  EXPECT_NO_THROW(decode_png(png));
  EXPECT_TRUE(fs::exists(root_ / "sessions" / id / "session.json"));
  EXPECT_TRUE(fs::exists(root_ / "sessions" / id / "r001_a.png"));
  EXPECT_TRUE(fs::exists(root_ / "sessions" / id / "r001_b.png"));
  EXPECT_EQ(service_->health()["sessions"], 1);

  const Json random = service_->create_session({{"prompt", "random"}, {"seed", "7"}});
  EXPECT_EQ(random["max_rounds"], 4);
  EXPECT_EQ(random["seed"], "7");
}

TEST_F(ServiceTest, CreateValidation) {
  EXPECT_EQ(code_of([&] { service_->create_session(Json::array()); }), ApiErrorCode::kBadRequest);
  EXPECT_EQ(code_of([&] { service_->create_session({{"prompt", "random"}, {"max_rounds", 0}}); }),
            ApiErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { service_->create_session({{"prompt", "random"}, {"colour", 1}}); }),
            ApiErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { service_->create_session({{"prompt", {{"shape", 5}}}}); }), ApiErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { service_->create_session(Json::object()); }), ApiErrorCode::kValidation);
}

TEST_F(ServiceTest, FeedbackAdvancesAndCloses) {
  const std::string id = create(2)["id"];
  const Json r2 = service_->post_feedback(id, {{"kind", "correction"}, {"field", "color"}, {"value", 5}});
  EXPECT_EQ(r2["round"]["index"], 2);
  EXPECT_EQ(r2["round"]["prompt"]["color"], 5);
  EXPECT_EQ(r2["prompt"]["history"].size(), 1u);
  EXPECT_FALSE(r2["round"]["tau1"].is_null());
  const Json done = service_->post_feedback(id, {{"kind", "reject"}});
  EXPECT_EQ(done["status"], "abandoned");
  EXPECT_TRUE(done["round"].is_null());
  EXPECT_EQ(code_of([&] { service_->post_feedback(id, {{"kind", "accept"}}); }), ApiErrorCode::kSessionClosed);

  const std::string other = create()["id"];
  EXPECT_EQ(service_->post_feedback(other, {{"kind", "accept"}})["status"], "accepted");
  const std::string third = create()["id"];
  EXPECT_EQ(service_->post_feedback(third, {{"kind", "abandon"}})["status"], "abandoned");

  EXPECT_EQ(code_of([&] { service_->post_feedback("nope", {{"kind", "accept"}}); }), ApiErrorCode::kSessionNotFound);
  EXPECT_EQ(code_of([&] { service_->post_feedback("../x", {{"kind", "accept"}}); }), ApiErrorCode::kSessionNotFound);
  const std::string fourth = create()["id"];
  EXPECT_EQ(code_of([&] { service_->post_feedback(fourth, {{"kind", "correction"}, {"field", "size"}, {"value", 9}}); }),
            ApiErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { service_->post_feedback(fourth, {{"kind", "abandon"}, {"why", 1}}); }),
            ApiErrorCode::kValidation);
}

TEST_F(ServiceTest, ChoicesAreRecordedOnce) {
  const std::string id = create()["id"];
  const Json c = service_->choose(id, 1, {{"choice", "B"}});
  EXPECT_EQ(c["pair"]["positive"], "sessions/" + id + "/r001_b.png");
  EXPECT_EQ(c["pair"]["negative"], "sessions/" + id + "/r001_a.png");
  EXPECT_EQ(c["pair"]["label"], 1);
  EXPECT_EQ(code_of([&] { service_->choose(id, 1, {{"choice", "A"}}); }), ApiErrorCode::kDuplicateChoice);
  EXPECT_EQ(code_of([&] { service_->choose(id, 2, {{"choice", "A"}}); }), ApiErrorCode::kRoundNotFound);
  EXPECT_EQ(code_of([&] { service_->choose(id, 1, {{"choice", "C"}}); }), ApiErrorCode::kValidation);
  EXPECT_EQ(read_lines(store_->preference_file()).size(), 1u);
  EXPECT_EQ(service_->get_session(id)["rounds"][0]["choice"], "B");

  // A fresh store over the same root still knows the choice.
  SessionStore reopened(root_);
  EXPECT_TRUE(reopened.has_choice(id, 1));
  EXPECT_FALSE(reopened.record_choice(pair_line_from_json(c["pair"])));
}

TEST_F(ServiceTest, ConcurrentChoicesYieldOneWinner) {
  const std::string id = create()["id"];
  std::atomic<int> ok{0}, dup{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      try {
        service_->choose(id, 1, {{"choice", i % 2 == 0 ? "A" : "B"}});
        ++ok;
      } catch (const ApiError& e) {
        if (e.code() == ApiErrorCode::kDuplicateChoice) ++dup;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 1);
  EXPECT_EQ(dup.load(), 7);
  EXPECT_EQ(read_lines(store_->preference_file()).size(), 1u);
}

TEST_F(ServiceTest, DocumentRoundTripAndReplay) {
  const std::string id = create()["id"];
  service_->post_feedback(id, {{"kind", "correction"}, {"field", "shape"}, {"value", 2}});
  service_->post_feedback(id, {{"kind", "free_text"}, {"text", "brighter"}});
  const Json doc = store_->load_document(id);
  EXPECT_EQ(session_document(store_->load(id)), doc);
  EXPECT_EQ(doc["rounds"].size(), 3u);
  EXPECT_EQ(doc["rounds"][1]["image"], "r002_a.png");
  EXPECT_TRUE(service_->verify_replay(id));

  const Json view = service_->get_session(id);
  EXPECT_TRUE(view["rounds"][2].contains("image_png"));
  EXPECT_EQ(view["prompt"]["current"]["shape"], 2);

  // Tampering with a stored image breaks replay.
  write_png(root_ / "sessions" / id / "r002_a.png", render(AttributeTuple{}));
  EXPECT_FALSE(service_->verify_replay(id));
}

TEST_F(ServiceTest, StrictDocumentParsing) {
  const std::string id = create()["id"];
  Json doc = store_->load_document(id);
  doc["extra"] = 1;
  EXPECT_THROW(session_from_document(doc, store_->session_dir(id)), FormatError);
  doc.erase("extra");
  doc["rounds"][0]["index"] = 2;
  EXPECT_THROW(session_from_document(doc, store_->session_dir(id)), FormatError);
}

TEST_F(ServiceTest, HttpBinding) {
  const int port = 18000 + ::getpid() % 2000;
  std::thread server([&] { run_http_server(*service_, "127.0.0.1", port); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);
  httplib::Result health;
  for (int i = 0; i < 100 && !health; ++i) {
    health = cli.Get("/healthz");
    if (!health) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");

  auto created = cli.Post("/sessions", R"({"prompt": "random", "seed": 5})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const std::string id = Json::parse(created->body)["id"];

  auto fb = cli.Post("/sessions/" + id + "/feedback", R"({"kind": "reject"})", "application/json");
  EXPECT_EQ(fb->status, 200);
  EXPECT_EQ(cli.Post("/sessions/" + id + "/rounds/2/choice", R"({"choice": "A"})", "application/json")->status, 201);
  EXPECT_EQ(cli.Post("/sessions/" + id + "/rounds/2/choice", R"({"choice": "A"})", "application/json")->status, 409);
  EXPECT_EQ(cli.Get("/sessions/" + id)->status, 200);

  auto missing = cli.Get("/sessions/zzzz");
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(Json::parse(missing->body)["error"]["code"], "session_not_found");
  auto bad = cli.Post("/sessions", "{not json", "application/json");
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(Json::parse(bad->body)["error"]["code"], "bad_request");
  auto unknown = cli.Get("/nowhere");
  EXPECT_EQ(unknown->status, 404);
  EXPECT_EQ(Json::parse(unknown->body)["error"]["code"], "unknown_endpoint");
  EXPECT_EQ(cli.Options("/sessions")->status, 204);

  std::raise(SIGTERM);
  server.join();
  // Not a local address, so bind fails.
  EXPECT_THROW(run_http_server(*service_, "203.0.113.1", port), std::runtime_error);
}

}  // namespace
}  // namespace coadapt
