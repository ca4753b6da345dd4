// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <zlib.h>

#include "coadapt/checkpoint.hpp"
#include "coadapt/config.hpp"
#include "coadapt/io.hpp"
#include "coadapt/records.hpp"

namespace coadapt {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("coadapt_formats_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --- checkpoint -------------------------------------------------------------

TEST(Checkpoint, RoundTripPreservesNamesShapesAndBits) {
  Checkpoint c;
  std::mt19937_64 rng(1);
  c.put("a/w", Tensor::randn({3, 4}, rng));
  c.put("a/b", Tensor::randn({4}, rng));
  c.put_scalar("meta", -0.1);
  const auto bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  ASSERT_EQ(back.entries().size(), 3u);
  for (const auto& [name, t] : c.entries()) {
    const Tensor other = back.get(name);
    EXPECT_EQ(other.shape(), t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(other.data()[i], t.data()[i]);
  }
  EXPECT_EQ(back.get_scalar("meta"), -0.1);
}

TEST(Checkpoint, LayoutHeaderAndCrc) {
  Checkpoint c;
  c.put("x", Tensor({2}, {1.0, 2.0}));
  const auto bytes = encode_checkpoint(c);
  ASSERT_GE(bytes.size(), 20u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "CADPCKPT");
  EXPECT_EQ(bytes[8], kCheckpointVersion);
  // magic + version + count + (4 + 1) name + 4 rank + 8 extent + 2 * 8 values + crc
  EXPECT_EQ(bytes.size(), 8u + 4 + 4 + 5 + 4 + 8 + 16 + 4);
  const uLong crc = crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4));
  const std::uint32_t stored = bytes[bytes.size() - 4] | (bytes[bytes.size() - 3] << 8) |
                               (bytes[bytes.size() - 2] << 16) | (static_cast<std::uint32_t>(bytes.back()) << 24);
  EXPECT_EQ(stored, static_cast<std::uint32_t>(crc));
}

TEST(Checkpoint, CorruptionAndTruncationDetected) {
  Checkpoint c;
  c.put("x", Tensor({3}, {1.0, 2.0, 3.0}));
  auto bytes = encode_checkpoint(c);
  auto flipped = bytes;
  flipped[30] ^= 0x40;
  EXPECT_THROW(decode_checkpoint(flipped), CheckpointError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() - 5)), CheckpointError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), CheckpointError);
  EXPECT_THROW(c.get("missing"), CheckpointError);
  EXPECT_THROW(c.load_into("x", Tensor::zeros({2})), CheckpointError);
}

TEST(Checkpoint, FileRoundTrip) {
  const fs::path dir = scratch_dir("ckpt");
  Checkpoint c;
  c.put("w", Tensor({2, 2}, {1, 2, 3, 4}));
  save_checkpoint(c, dir / "m.ckpt");
  EXPECT_EQ(load_checkpoint(dir / "m.ckpt").get("w").data()[3], 4.0);
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), std::exception);
  fs::remove_all(dir);
}

// --- io ---------------------------------------------------------------------

TEST(Io, PngRoundTripWithin16BitQuantum) {
  const SpriteImage img = render(AttributeTuple{2, 5, 1, 3, 2});
  const SpriteImage back = decode_png(encode_png(img));
  for (std::size_t i = 0; i < SpriteImage::kNumValues; ++i) ASSERT_NEAR(back.pixels[i], img.pixels[i], 0.5 / 65535);
  EXPECT_EQ(encode_png(back), encode_png(img));
  const std::vector<std::uint8_t> junk{1, 2, 3};
  EXPECT_THROW(decode_png(junk), IoError);
}

TEST(Io, Base64KnownVectorsAndRoundTrip) {
  auto enc = [](std::string_view s) {
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foo"), "Zm9v");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
  std::mt19937_64 rng(3);
  for (int n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    ASSERT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
  EXPECT_THROW(base64_decode("Zm9"), IoError);
  EXPECT_THROW(base64_decode("Zm9!"), IoError);
}

TEST(Io, AtomicWriteAndLines) {
  const fs::path dir = scratch_dir("io");
  write_file_atomic(dir / "a.txt", "one");
  write_file_atomic(dir / "a.txt", "two");
  EXPECT_EQ(read_file(dir / "a.txt"), "two");
  for (const auto& entry : fs::directory_iterator(dir)) EXPECT_EQ(entry.path().filename(), "a.txt");
  append_line(dir / "l.jsonl", "x");
  append_line(dir / "l.jsonl", "y");
  EXPECT_EQ(read_lines(dir / "l.jsonl"), (std::vector<std::string>{"x", "y"}));
  fs::remove_all(dir);
}

// --- records ----------------------------------------------------------------

TEST(Records, TupleRoundTripAndRangeChecks) {
  const AttributeTuple t{1, 7, 2, 3, 3};
  EXPECT_EQ(tuple_from_json(to_json(t)), t);
  Json bad = to_json(t);
  bad["color"] = 8;
  EXPECT_THROW(tuple_from_json(bad), FormatError);
  Json extra = to_json(t);
  extra["hue"] = 1;
  EXPECT_THROW(tuple_from_json(extra), FormatError);
  Json missing = to_json(t);
  missing.erase("count");
  EXPECT_THROW(tuple_from_json(missing), FormatError);
  Json wrong_type = to_json(t);
  wrong_type["shape"] = "circle";
  EXPECT_THROW(tuple_from_json(wrong_type), FormatError);
}

TEST(Records, FeedbackWireFormat) {
  for (const Feedback& f : {Feedback::accept(), Feedback::reject(), Feedback::correction(Field::kSize, 2),
                            Feedback::free_text("bluer please")}) {
    EXPECT_EQ(feedback_from_json(to_json(f)), f);
  }
  EXPECT_EQ(to_json(Feedback::correction(Field::kBackground, 1)),
            Json::parse(R"({"kind":"correction","field":"background","value":1})"));
  EXPECT_THROW(feedback_from_json(Json::parse(R"({"kind":"correction","field":"hue","value":1})")), FormatError);
  EXPECT_THROW(feedback_from_json(Json::parse(R"({"kind":"correction","field":"count","value":0})")), FormatError);
  EXPECT_THROW(feedback_from_json(Json::parse(R"({"kind":"maybe"})")), FormatError);
  EXPECT_THROW(feedback_from_json(Json::parse(R"({"kind":"accept","x":1})")), FormatError);
}

TEST(Records, DatasetLines) {
  PairLine p{AttributeTuple{0, 1, 2, 3, 1}, "images/a.png", "images/b.png", "abc", 3};
  const Json pj = to_json(p);
  EXPECT_EQ(pj["label"], 1);
  const PairLine pb = pair_line_from_json(pj);
  EXPECT_EQ(pb.prompt, p.prompt);
  EXPECT_EQ(pb.session, "abc");
  EXPECT_EQ(pb.round, 3);
  Json zero = pj;
  zero["label"] = 0;
  EXPECT_THROW(pair_line_from_json(zero), FormatError);

  DialogueLine d{"d7", 2, AttributeTuple{}, "images/x.png", "images/y.png"};
  const DialogueLine db = dialogue_line_from_json(to_json(d));
  EXPECT_EQ(db.previous, "images/y.png");
  DialogueLine first{"d7", 1, AttributeTuple{}, "images/x.png", ""};
  EXPECT_TRUE(to_json(first)["previous"].is_null());
  EXPECT_EQ(dialogue_line_from_json(to_json(first)).previous, "");
}

TEST(Records, SeedsSurviveAsDecimalStrings) {
  const std::uint64_t big = 18446744073709551615ULL;
  EXPECT_EQ(seed_to_string(big), "18446744073709551615");
  EXPECT_EQ(seed_from_json(Json(seed_to_string(big))), big);
  EXPECT_EQ(seed_from_json(Json(42)), 42u);
  EXPECT_THROW(seed_from_json(Json(-1)), FormatError);
  EXPECT_THROW(seed_from_json(Json("12x")), FormatError);
  EXPECT_THROW(seed_from_json(Json(1.5)), FormatError);
}

TEST(Records, BreakdownRoundTrip) {
  const RewardBreakdown b = combine_rewards(3, 0.2, 0.8, 1.5);
  const RewardBreakdown back = breakdown_from_json(to_json(b));
  EXPECT_EQ(back.total, b.total);
  EXPECT_EQ(back.weights.round, 3);
}

// --- config -----------------------------------------------------------------

TEST(Config, EmptyObjectGivesDefaults) {
  const PipelineConfig c = pipeline_config_from_json(Json::object());
  EXPECT_EQ(c.schedule.steps, 70);
  EXPECT_EQ(c.adapters.rank, 4u);
  EXPECT_EQ(c.adapters.alpha, 4.0);
  EXPECT_EQ(c.finetune.lr, 3e-4);
  EXPECT_EQ(c.finetune.mode, UpdateMode::kPpoClip);
}

TEST(Config, RoundTripThroughJson) {
  PipelineConfig c;
  c.finetune.steps = 17;
  c.finetune.mask.cons = false;
  c.finetune.mode = UpdateMode::kPlainGradient;
  c.eval.sessions = 9;
  const PipelineConfig back = pipeline_config_from_json(to_json(c));
  EXPECT_EQ(back.finetune.steps, 17);
  EXPECT_FALSE(back.finetune.mask.cons);
  EXPECT_EQ(back.finetune.mode, UpdateMode::kPlainGradient);
  EXPECT_EQ(back.eval.sessions, 9);
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_THROW(pipeline_config_from_json(Json::parse(R"({"trainer": {}})")), FormatError);
  EXPECT_THROW(pipeline_config_from_json(Json::parse(R"({"finetune": {"learning_rate": 1}})")), FormatError);
  EXPECT_THROW(pipeline_config_from_json(Json::parse(R"({"finetune": {"mask": {"div": true, "x": 1}}})")),
               FormatError);
  EXPECT_THROW(pipeline_config_from_json(Json::parse(R"({"finetune": {"mode": "sgd"}})")), FormatError);
  EXPECT_THROW(pipeline_config_from_json(Json::parse(R"({"schedule": {"steps": 0}})")), FormatError);
  EXPECT_THROW(pipeline_config_from_json(Json::parse(R"({"eval": {"sessions": "ten"}})")), FormatError);
  EXPECT_THROW(pipeline_config_from_json(Json::parse("[]")), FormatError);
}

TEST(Config, LoadFromFile) {
  const fs::path dir = scratch_dir("config");
  write_file_atomic(dir / "c.json", R"({"adapters": {"rank": 2}})");
  EXPECT_EQ(load_pipeline_config(dir / "c.json").adapters.rank, 2u);
  write_file_atomic(dir / "bad.json", "{");
  EXPECT_THROW(load_pipeline_config(dir / "bad.json"), FormatError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace coadapt
