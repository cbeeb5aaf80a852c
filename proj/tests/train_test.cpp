// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <fstream>

#include "turbowave/errors.hpp"
#include "turbowave/train.hpp"

namespace turbowave {
namespace {

namespace fs = std::filesystem;

// Six half-second toy items shared by every test in this file.
class TrainTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("turbowave_train_" + std::to_string(::getpid()));
    ToyCorpusOptions opts;
    opts.root = root_ / "corpus";
    opts.n_items = 6;
    opts.duration_s = 0.5;
    make_toy_corpus(opts);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static TrainConfig config(const std::string& stage) {
    KeyValueConfig kv;
    kv.set("train.stage", stage);
    kv.set("train.batch_size", "2");
    kv.set("train.seed", "11");
    kv.set("train.steps", "4");
    kv.set("data.segment_length", "4096");
    kv.set("data.corpus", (root_ / "corpus").string());
    return TrainConfig::from_config(kv);
  }

  static Corpus corpus(const TrainConfig& cfg) { return Corpus(cfg.dataset_spec(), "train"); }

  static Archive teacher() {
    auto cfg = config("fm");
    Trainer t(cfg);
    auto data = corpus(cfg);
    t.step(data);
    return t.to_archive();
  }

  static inline fs::path root_;
};

void expect_same_parameters(const torch::nn::Module& a, const torch::nn::Module& b) {
  auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (const auto& p : pa) {
    EXPECT_TRUE(torch::equal(p.value(), pb[p.key()])) << p.key();
  }
}

TEST_F(TrainTest, SameSeedSameTrajectory) {
  auto cfg = config("fm");
  auto data = corpus(cfg);
  Trainer a(cfg), b(cfg);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(a.step(data).losses, b.step(data).losses) << "step " << i + 1;
  }
  expect_same_parameters(*a.generator(), *b.generator());
  EXPECT_TRUE(std::isfinite(a.running_losses().at("cfm")));
}

TEST_F(TrainTest, ResumedFlowMatchingRunMatchesUninterrupted) {
  auto cfg = config("fm");
  auto data = corpus(cfg);
  Trainer straight(cfg);
  std::vector<std::map<std::string, double>> expect;
  for (int i = 0; i < 12; ++i) expect.push_back(straight.step(data).losses);

  Trainer first(cfg);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(first.step(data).losses, expect[i]);
  auto resumed = Trainer::from_archive(decode_archive(encode_archive(first.to_archive())));
  EXPECT_EQ(resumed.step_count(), 6);
  EXPECT_EQ(resumed.running_losses(), first.running_losses());
  for (int i = 6; i < 12; ++i) {
    EXPECT_EQ(resumed.step(data).losses, expect[i]) << "step " << i + 1;
  }
  expect_same_parameters(*resumed.generator(), *straight.generator());
  EXPECT_EQ(encode_archive(resumed.to_archive()), encode_archive(straight.to_archive()));
}

TEST_F(TrainTest, ResumedTurboRunMatchesUninterrupted) {
  auto cfg = config("turbo");
  auto data = corpus(cfg);
  const auto init = teacher();
  Trainer straight(cfg, init);
  std::vector<std::map<std::string, double>> expect;
  for (int i = 0; i < 3; ++i) expect.push_back(straight.step(data).losses);
  EXPECT_EQ(expect[0].count("d"), 1u);

  Trainer first(cfg, init);
  EXPECT_EQ(first.step(data).losses, expect[0]);
  auto resumed = Trainer::from_archive(first.to_archive());
  ASSERT_TRUE(resumed.discriminator());
  for (int i = 1; i < 3; ++i) EXPECT_EQ(resumed.step(data).losses, expect[i]);
  expect_same_parameters(*resumed.generator(), *straight.generator());
  expect_same_parameters(*resumed.discriminator(), *straight.discriminator());
}

TEST_F(TrainTest, TurboStartsFromTheTeacher) {
  const auto init = teacher();
  auto student = Trainer(config("turbo"), init).generator();
  expect_same_parameters(*student, *generator_from_archive(init));
  EXPECT_THROW(Trainer(config("turbo")), ConfigError);

  KeyValueConfig kv = config("fm").to_config();
  kv.set("model.scale", "S");
  auto other = Trainer(TrainConfig::from_config(kv)).generator();
  EXPECT_THROW(load_generator(other, init), StructureError);
}

TEST_F(TrainTest, WithoutGanTheObjectiveIsWeightedMel) {
  auto cfg = config("turbo");
  cfg.use_gan = false;
  auto data = corpus(cfg);
  Trainer t(cfg, teacher());
  EXPECT_FALSE(t.discriminator());
  for (int i = 0; i < 2; ++i) {
    const auto l = t.step(data).losses;
    EXPECT_EQ(l.count("d"), 0u);
    EXPECT_EQ(l.at("adv_g"), 0.0);
    EXPECT_EQ(l.at("fm"), 0.0);
    EXPECT_NEAR(l.at("g_total"), 45.0 * l.at("mel"), 1e-6 * l.at("g_total"));
  }
}

TEST_F(TrainTest, ZeroStepsLeavesTheInitialization) {
  auto cfg = config("fm");
  cfg.steps = 0;
  auto data = corpus(cfg);
  Trainer t(cfg);
  const auto out = run_training(t, data, root_ / "zero");
  auto saved = generator_from_archive(load_archive(out.checkpoint));
  expect_same_parameters(*saved, *Trainer(cfg).generator());
  EXPECT_TRUE(out.records.empty());
}

TEST_F(TrainTest, RunWritesLogConfigAndCheckpoints) {
  auto cfg = config("fm");
  cfg.checkpoint_every = 2;
  auto data = corpus(cfg);
  Trainer t(cfg);
  const auto dir = root_ / "run";
  const auto out = run_training(t, data, dir);
  EXPECT_EQ(out.records.size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "step_2.twck"));
  EXPECT_TRUE(fs::exists(dir / "step_4.twck"));
  EXPECT_EQ(load_archive(out.checkpoint).metadata.at("step"), 4);
  std::ifstream log(out.log);
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto rec = nlohmann::json::parse(line);
    EXPECT_EQ(rec.at("step"), ++lines);
    EXPECT_TRUE(rec.contains("loss.cfm"));
    EXPECT_TRUE(rec.contains("wall_clock_s"));
  }
  EXPECT_EQ(lines, 4);
  const auto resolved = KeyValueConfig::load(dir / "resolved.cfg");
  EXPECT_EQ(TrainConfig::from_config(resolved).to_config().dump(), resolved.dump());
}

TEST_F(TrainTest, CorpusSegmentsMustMatchTheConfig) {
  auto cfg = config("fm");
  Corpus raw(DatasetSpec::load(root_ / "corpus"), "train");  // default segment length
  ASSERT_NE(raw.spec().segment_length, cfg.segment_length);
  Trainer t(cfg);
  EXPECT_THROW(t.step(raw), ConfigError);
  EXPECT_EQ(t.step_count(), 0);
}

TEST_F(TrainTest, DivergenceHaltsWithACheckpoint) {
  auto cfg = config("fm");
  cfg.lr = 1e12;
  cfg.steps = 20;
  auto data = corpus(cfg);
  Trainer t(cfg);
  const auto dir = root_ / "halt";
  EXPECT_THROW(run_training(t, data, dir), TrainingHalt);
  EXPECT_TRUE(fs::exists(dir / "halt.twck"));
}

}  // namespace
}  // namespace turbowave
