// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace turbowave {

// Mono waveform. `samples` is [T] for a single clip or [B, T] for a batch of
// equal-length clips; every operation treats the last axis as time.
struct AudioBuffer {
  torch::Tensor samples;
  int sample_rate = 22050;

  AudioBuffer() = default;
  AudioBuffer(torch::Tensor s, int sr) : samples(std::move(s)), sample_rate(sr) {}

  int64_t length() const { return samples.size(-1); }
  double duration_s() const {
    return static_cast<double>(length()) / sample_rate;
  }
  // Throws InputError on empty / non-finite data or a non-positive rate.
  void validate() const;
};

enum class Window { kHann, kRect };

Window parse_window(const std::string& name);
std::string window_name(Window w);

struct StftConfig {
  int n_fft = 1024;
  int hop_size = 256;
  int win_size = 1024;
  Window window = Window::kHann;

  void validate() const;
  // Frame count under centered reflect padding of n_fft/2 on both sides.
  int64_t frames(int64_t length) const {
    return (length + 2 * (n_fft / 2) - n_fft) / hop_size + 1;
  }
  int bins() const { return n_fft / 2 + 1; }
};

struct MelConfig {
  int n_mels = 80;
  double f_min = 0.0;
  double f_max = 11025.0;
  double log_floor = 1e-5;

  void validate(int sample_rate) const;
};

// Constant-Q analysis. `scales` lists the hop sizes of the resolution
// variants used by the multi-scale discriminator; `hop_size` is the hop of
// a single cqt() call.
struct CqtConfig {
  double f_min = 86.1328125;  // 22050 / 256
  int octaves = 7;
  int bins_per_octave = 12;
  int hop_size = 256;
  std::vector<int> scales = {256, 512, 1024};
  double log_floor = 1e-5;

  void validate(int sample_rate) const;
  int bins() const { return octaves * bins_per_octave; }
  double center_frequency(int bin) const;
  CqtConfig at_scale(size_t i) const;
};

struct ComplexSpectrogram {
  torch::Tensor values;  // complex, [..., bins, frames]
  StftConfig config;
};

struct MelSpectrogram {
  torch::Tensor values;  // real log-Mel, [..., n_mels, frames]
  StftConfig stft;
  MelConfig mel;
  int sample_rate = 22050;

  int64_t frames() const { return values.size(-1); }
};

struct CqtSpectrogram {
  torch::Tensor values;  // real log-magnitude, [..., bins, frames]
  CqtConfig config;
};

ComplexSpectrogram stft(const AudioBuffer& audio, const StftConfig& cfg);

// sqrt(|X|^2 + 1e-9) of the centered STFT, [..., bins, frames]. Smooth
// everywhere so it can sit under a loss.
torch::Tensor stft_magnitude(const torch::Tensor& samples,
                             const StftConfig& cfg);

// Slaney-style triangular filterbank with area normalization,
// [n_mels, n_fft/2 + 1], double precision.
torch::Tensor mel_filterbank(int sample_rate, int n_fft, const MelConfig& mel);

MelSpectrogram mel_spectrogram(const AudioBuffer& audio, const StftConfig& cfg,
                               const MelConfig& mel);

// Mel frames aligned to the waveform: drops the trailing centered frame so
// that frames * hop == length. Requires length % hop == 0.
MelSpectrogram conditioning_mel(const AudioBuffer& audio, const StftConfig& cfg,
                                const MelConfig& mel);

// Complex kernel bank as [2 * bins, L] real rows (real parts first, then
// imaginary parts). L is the even-rounded length of the lowest-bin kernel.
torch::Tensor cqt_kernels(int sample_rate, const CqtConfig& cfg);

CqtSpectrogram cqt(const AudioBuffer& audio, const CqtConfig& cfg);

// cqt() against a prebuilt kernel bank; [..., T] -> [..., bins, frames].
torch::Tensor cqt_log_magnitude(const torch::Tensor& samples,
                                const torch::Tensor& kernels,
                                const CqtConfig& cfg);

// [..., T] -> [..., period, ceil(T / period)] with zero right-padding.
// Row r holds samples r, r + period, r + 2 * period, ...
torch::Tensor reshape_periods(const torch::Tensor& samples, int period);

// Inverse of reshape_periods without truncation: [..., p, n] -> [..., p * n].
torch::Tensor unfold_periods(const torch::Tensor& grid);

}  // namespace turbowave
