// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>
#include <zlib.h>

#include <cstring>

#include "turbowave/checkpoint.hpp"
#include "turbowave/config.hpp"
#include "turbowave/errors.hpp"
#include "turbowave/train.hpp"

namespace turbowave {
namespace {

TEST(KeyValueConfig, ParsesCommentsOverridesAndTypes) {
  auto kv = KeyValueConfig::parse(
      "# header\n"
      "train.lr = 2e-4   # trailing\n"
      "\n"
      "model.periods = 2,3,5\n"
      "loss.use_gan = false\n"
      "train.steps = 12\n");
  EXPECT_DOUBLE_EQ(kv.get_double("train.lr", 0.0), 2e-4);
  EXPECT_EQ(kv.get_int_list("model.periods", {}), (std::vector<int>{2, 3, 5}));
  EXPECT_FALSE(kv.get_bool("loss.use_gan", true));
  EXPECT_EQ(kv.get_int("missing", 9), 9);
  kv.apply_override("train.steps=40");
  kv.apply_override("train.steps=41");
  EXPECT_EQ(kv.get_int64("train.steps", 0), 41);
  EXPECT_THROW(kv.apply_override("no_equals"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("just words\n"), ConfigError);
  kv.set("x", "1.5abc");
  EXPECT_THROW(kv.get_double("x", 0.0), ConfigError);
  EXPECT_THROW(kv.get_bool("x", false), ConfigError);
}

TEST(KeyValueConfig, DumpIsSortedAndReparses) {
  KeyValueConfig a;
  a.set("z.last", "1");
  a.set("a.first", "hello");
  const auto text = a.dump();
  EXPECT_LT(text.find("a.first"), text.find("z.last"));
  EXPECT_EQ(KeyValueConfig::parse(text).dump(), text);
}

Archive sample_archive() {
  Archive a;
  a.metadata = {{"format", "test"}, {"step", 3}, {"nested", {{"k", "v"}}}};
  a.tensors.emplace_back("f32", torch::randn({3, 4}));
  a.tensors.emplace_back("f64", torch::randn({5}, torch::kFloat64));
  a.tensors.emplace_back("i64", torch::arange(7, torch::kLong));
  a.tensors.emplace_back("scalar", torch::scalar_tensor(2.5));
  return a;
}

TEST(Archive, RoundTripAndStableBytes) {
  const auto a = sample_archive();
  const auto bytes = encode_archive(a);
  const auto b = decode_archive(bytes);
  EXPECT_EQ(b.metadata, a.metadata);
  ASSERT_EQ(b.tensors.size(), a.tensors.size());
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(b.tensors[i].first, a.tensors[i].first);
    EXPECT_TRUE(torch::equal(b.tensors[i].second, a.tensors[i].second)) << a.tensors[i].first;
  }
  EXPECT_EQ(encode_archive(b), bytes);
  ASSERT_NE(b.find("f64"), nullptr);
  EXPECT_EQ(b.find("absent"), nullptr);

  const auto path = std::filesystem::temp_directory_path() /
                    ("turbowave_ckpt_" + std::to_string(::getpid()) + ".twck");
  save_archive(path, a);
  EXPECT_EQ(encode_archive(load_archive(path)), bytes);
  std::filesystem::remove(path);
  EXPECT_THROW(load_archive(path), DecodeError);
}

TEST(Archive, CorruptionIsDetected) {
  const auto bytes = encode_archive(sample_archive());
  for (size_t pos : {size_t{0}, size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x40);
    EXPECT_THROW(decode_archive(bad), IntegrityError) << pos;
  }
  EXPECT_THROW(decode_archive(bytes.substr(0, bytes.size() - 9)), IntegrityError);
  EXPECT_THROW(decode_archive(""), IntegrityError);
}

TEST(Archive, FutureVersionIsRejectedEvenWithAValidChecksum) {
  auto bytes = encode_archive(sample_archive());
  const uint32_t version = kArchiveVersion + 1;
  std::memcpy(bytes.data() + 8, &version, 4);  // after the 8-byte magic
  const auto body = bytes.size() - 4;
  const uint32_t crc =
      static_cast<uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), body));
  std::memcpy(bytes.data() + body, &crc, 4);
  try {
    decode_archive(bytes);
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
}

TEST(TrainConfig, ResolvedRecordRoundTrips) {
  for (const char* stage : {"fm", "turbo"}) {
    KeyValueConfig kv;
    kv.set("train.stage", stage);
    kv.set("train.allow_scratch_turbo", "true");
    kv.set("train.init", "scratch");
    const auto cfg = TrainConfig::from_config(kv);
    const auto dumped = cfg.to_config().dump();
    EXPECT_EQ(TrainConfig::from_config(cfg.to_config()).to_config().dump(), dumped) << stage;
    EXPECT_NE(dumped.find("loss.lambda_mel"), std::string::npos);
  }
}

TEST(TrainConfig, StageDefaults) {
  KeyValueConfig fm;
  fm.set("train.stage", "fm");
  const auto a = TrainConfig::from_config(fm);
  EXPECT_DOUBLE_EQ(a.lr, 2e-4);
  EXPECT_EQ(a.batch_size, 128);
  EXPECT_EQ(a.grad_clip, 0.0);
  KeyValueConfig turbo;
  turbo.set("train.stage", "turbo");
  const auto b = TrainConfig::from_config(turbo);
  EXPECT_DOUBLE_EQ(b.lr, 2e-5);
  EXPECT_EQ(b.batch_size, 32);
  EXPECT_EQ(b.grad_clip, 1.0);
  EXPECT_EQ(b.init, InitMode::kFromCheckpoint);
  EXPECT_EQ(b.n_steps, 4);
  EXPECT_EQ(b.weights.lambda_fm, 2.0);
  EXPECT_EQ(b.weights.lambda_mel, 45.0);
}

TEST(TrainConfig, RejectsBadRecords) {
  KeyValueConfig unknown;
  unknown.set("train.learning_rate", "1e-3");
  EXPECT_THROW(TrainConfig::from_config(unknown), ConfigError);

  KeyValueConfig scratch;
  scratch.set("train.stage", "turbo");
  scratch.set("train.init", "scratch");
  EXPECT_THROW(TrainConfig::from_config(scratch).validate(), ConfigError);
  scratch.set("train.allow_scratch_turbo", "true");
  EXPECT_NO_THROW(TrainConfig::from_config(scratch).validate());

  KeyValueConfig steps;
  steps.set("flow.n_steps", "3");
  EXPECT_THROW(TrainConfig::from_config(steps).validate(), ConfigError);
  KeyValueConfig lr;
  lr.set("train.lr", "0");
  EXPECT_THROW(TrainConfig::from_config(lr).validate(), ConfigError);
}

}  // namespace
}  // namespace turbowave
