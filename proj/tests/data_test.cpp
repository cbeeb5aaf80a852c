// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "oracles.hpp"
#include "turbowave/data.hpp"
#include "turbowave/errors.hpp"
#include "turbowave/eval.hpp"

namespace turbowave {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("turbowave_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

TEST(Wav, Pcm16RoundTripWithinOneStep) {
  TempDir dir;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(1);
  auto x = torch::rand({5000}, gen) * 1.8 - 0.9;
  save_audio(dir.path() / "a.wav", AudioBuffer(x, 16000));
  auto y = load_audio(dir.path() / "a.wav");
  EXPECT_EQ(y.sample_rate, 16000);
  ASSERT_EQ(y.length(), 5000);
  EXPECT_LE((x - y.samples).abs().max().item<double>(), 1.0 / 32768.0 + 1e-7);
}

TEST(Wav, FullScaleCodeNormalization) {
  TempDir dir;
  auto x = torch::tensor({32767.0f / 32768.0f, -1.0f, 0.0f});
  save_audio(dir.path() / "b.wav", AudioBuffer(x, 22050));
  auto y = oracle::values(load_audio(dir.path() / "b.wav").samples);
  EXPECT_NEAR(y[0], 0.99997, 1e-5);
  EXPECT_EQ(y[1], -1.0);
  EXPECT_EQ(y[2], 0.0);
}

TEST(Wav, Float32RoundTripIsExact) {
  TempDir dir;
  auto x = torch::randn({777}) * 0.2;
  save_audio(dir.path() / "c.wav", AudioBuffer(x, 22050), WavFormat::kFloat32);
  EXPECT_TRUE(torch::equal(load_audio(dir.path() / "c.wav").samples, x));
}

TEST(Wav, BadFilesAreDecodeErrors) {
  TempDir dir;
  std::ofstream(dir.path() / "empty.wav").close();
  EXPECT_THROW(load_audio(dir.path() / "empty.wav"), DecodeError);
  std::ofstream(dir.path() / "junk.wav") << "definitely not a wave file, just text";
  EXPECT_THROW(load_audio(dir.path() / "junk.wav"), DecodeError);
  EXPECT_THROW(load_audio(dir.path() / "missing.wav"), DecodeError);
}

TEST(Resample, PreservesASineBelowCutoff) {
  const int from = 44100, to = 22050;
  const double f = 440.0;
  auto n = torch::arange(44100, torch::kFloat64);
  auto x = torch::sin(2.0 * M_PI * f * n / from);
  auto y = resample(x, from, to);
  ASSERT_EQ(y.size(0), 22050);
  auto m = torch::arange(22050, torch::kFloat64);
  auto expect = torch::sin(2.0 * M_PI * f * m / to);
  // Away from the edges the band-limited resampler is close to exact.
  auto mid = (y - expect).narrow(0, 1000, 20050).abs().max().item<double>();
  EXPECT_LT(mid, 2e-3);
  EXPECT_TRUE(torch::equal(resample(x, from, from), x));
  EXPECT_THROW(resample(x, 0, to), ConfigError);
}

TEST(Segment, HopAlignedDeterministicAndConditionedOnTheCrop) {
  const StftConfig stft;
  const MelConfig mel;
  AudioBuffer ramp(torch::arange(44100, torch::kFloat32), 22050);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto g1 = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto g2 = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto a = sample_segment(ramp, 8192, stft, mel, g1);
    auto b = sample_segment(ramp, 8192, stft, mel, g2);
    EXPECT_TRUE(torch::equal(a.segment, b.segment));
    const auto start = static_cast<int64_t>(a.segment[0].item<float>());
    EXPECT_EQ(start % stft.hop_size, 0);
    EXPECT_EQ(a.segment[8191].item<float>(), static_cast<float>(start + 8191));
  }
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  AudioBuffer noise(torch::randn({40000}, gen) * 0.1, 22050);
  auto ex = sample_segment(noise, 32768, stft, mel, gen);
  EXPECT_EQ(ex.condition.sizes(), (std::vector<int64_t>{80, 128}));
  auto again = conditioning_mel(AudioBuffer(ex.segment, 22050), stft, mel).values;
  EXPECT_TRUE(torch::allclose(ex.condition, again));
  EXPECT_THROW(sample_segment(noise, 1000, stft, mel, gen), ConfigError);
}

TEST(Segment, ShortClipsArePaddedAtTheEnd) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(0);
  AudioBuffer clip(torch::ones({1000}), 22050);
  auto ex = sample_segment(clip, 2048, StftConfig{}, MelConfig{}, gen);
  EXPECT_EQ(ex.segment.narrow(0, 0, 1000).sum().item<double>(), 1000.0);
  EXPECT_EQ(ex.segment.narrow(0, 1000, 1048).abs().sum().item<double>(), 0.0);
  EXPECT_EQ(crop_to_hop(AudioBuffer(torch::ones({1000}), 22050), 256).length(), 768);
  EXPECT_EQ(crop_to_hop(AudioBuffer(torch::ones({100}), 22050), 256).length(), 256);
}

TEST(ToyCorpus, SameSeedSameBytes) {
  TempDir a, b;
  ToyCorpusOptions opts;
  opts.n_items = 6;
  opts.duration_s = 0.5;
  opts.root = a.path();
  auto spec = make_toy_corpus(opts);
  opts.root = b.path();
  make_toy_corpus(opts);
  size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path());
    EXPECT_EQ(read_bytes(e.path()), read_bytes(b.path() / rel)) << rel;
    ++files;
  }
  EXPECT_GE(files, 6u + 3u);
  EXPECT_EQ(spec.train.size() + spec.dev.size() + spec.test.size(), 6u);
  EXPECT_FALSE(spec.dev.empty());
  auto loaded = DatasetSpec::load(a.path());
  EXPECT_EQ(loaded.dev, spec.dev);
  EXPECT_EQ(loaded.sample_rate, 22050);
  Corpus dev(loaded, "dev");
  EXPECT_EQ(dev.size(), spec.dev.size());
  EXPECT_THROW(loaded.split("holdout"), ConfigError);
}

TEST(ToyCorpus, ToneHasTheRequestedPitch) {
  HarmonicTone tone;
  tone.f0 = 100.0;
  auto x = synthesize_tone(tone, 1.0, 22050, 5);
  EXPECT_LE(x.abs().max().item<double>(), 0.5 + 1e-3);
  auto track = extract_pitch(x, 22050, 256);
  std::vector<double> voiced;
  for (size_t i = 0; i < track.frames(); ++i) {
    if (track.voiced(i)) voiced.push_back(track.f0[i]);
  }
  ASSERT_GT(voiced.size(), track.frames() / 2);
  std::nth_element(voiced.begin(), voiced.begin() + voiced.size() / 2, voiced.end());
  EXPECT_NEAR(voiced[voiced.size() / 2], 100.0, 3.0);
}

}  // namespace
}  // namespace turbowave
