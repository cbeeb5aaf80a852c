// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "turbowave/signal.hpp"

namespace turbowave {

enum class WavFormat { kPcm16, kFloat32 };

// Reads PCM16 or float32 WAV, keeps the first channel and normalizes PCM by
// 1/32768. When target_rate > 0 and differs from the file rate the signal is
// passed through resample().
AudioBuffer load_audio(const std::filesystem::path& path, int target_rate = 0);

void save_audio(const std::filesystem::path& path, const AudioBuffer& audio,
                WavFormat format = WavFormat::kPcm16);

// Linear-phase windowed-sinc resampler (Hann-tapered, 32 zero crossings,
// cutoff at 0.95 of the lower Nyquist). [T] in, [T * to / from] out.
torch::Tensor resample(const torch::Tensor& samples, int from_rate, int to_rate);

struct DatasetSpec {
  std::filesystem::path root;
  int sample_rate = 22050;
  StftConfig stft;
  MelConfig mel;
  int64_t segment_length = 32768;
  std::vector<std::string> train, dev, test;

  void validate() const;
  const std::vector<std::string>& split(const std::string& name) const;

  // Reads corpus.cfg and {train,dev,test}.txt under `root`.
  static DatasetSpec load(const std::filesystem::path& root);
};

struct TrainingExample {
  torch::Tensor segment;    // [segment_length]
  torch::Tensor condition;  // [n_mels, segment_length / hop]
};

// Uniform hop-aligned crop; clips shorter than the segment are zero-padded
// at the end. The condition is computed from the crop itself.
TrainingExample sample_segment(const AudioBuffer& audio, int64_t segment_length,
                               const StftConfig& stft, const MelConfig& mel,
                               torch::Generator& gen);

// Truncates to the largest multiple of `hop` (at least one hop, zero-padded).
AudioBuffer crop_to_hop(const AudioBuffer& audio, int hop);

struct Batch {
  torch::Tensor audio;      // [B, T]
  torch::Tensor condition;  // [B, n_mels, T / hop]
};

// One split held in memory.
class Corpus {
 public:
  Corpus(const DatasetSpec& spec, const std::string& split);

  size_t size() const { return items_.size(); }
  const DatasetSpec& spec() const { return spec_; }
  const AudioBuffer& item(size_t i) const { return items_.at(i); }
  const std::string& name(size_t i) const { return names_.at(i); }

  // Items drawn uniformly with replacement, then sample_segment on each.
  Batch draw(int batch_size, torch::Generator& gen) const;

 private:
  DatasetSpec spec_;
  std::vector<AudioBuffer> items_;
  std::vector<std::string> names_;
};

struct HarmonicTone {
  double f0 = 100.0;
  int harmonics = 4;
  double vibrato_depth = 0.01;  // fraction of f0
  double vibrato_rate = 5.0;    // Hz
  double am_depth = 0.5;        // 0 = steady, 1 = gated to silence
  double am_rate = 1.0;         // Hz
  double peak = 0.5;
  double noise_db = -40.0;      // noise floor relative to peak
};

// Harmonic stack with 1/k partial amplitudes, random partial phases drawn
// from `seed`.
torch::Tensor synthesize_tone(const HarmonicTone& tone, double duration_s,
                              int sample_rate, uint64_t seed);

struct ToyCorpusOptions {
  std::filesystem::path root;
  int n_items = 64;
  double duration_s = 2.0;
  int sample_rate = 22050;
  uint64_t seed = 1234;
};

// Writes wav/item_NNN.wav (PCM16), split manifests and corpus.cfg. Tone
// parameters: f0 in [80, 400] Hz, 1-8 partials, amplitude modulation and a
// -40 dB noise floor. Same seed, same bytes.
DatasetSpec make_toy_corpus(const ToyCorpusOptions& opts);

}  // namespace turbowave
