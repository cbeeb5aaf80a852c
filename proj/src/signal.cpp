// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "turbowave/signal.hpp"

#include <cmath>
#include <numbers>

#include "turbowave/errors.hpp"

namespace turbowave {

namespace {

constexpr double kMagnitudeEps = 1e-9;
constexpr double kCqtMagnitudeEps = 1e-12;

// Slaney mel scale: linear below 1 kHz, logarithmic above.
constexpr double kMelFSp = 200.0 / 3.0;
constexpr double kMelMinLogHz = 1000.0;
constexpr double kMelMinLogMel = kMelMinLogHz / kMelFSp;

double hz_to_mel(double hz) {
  const double logstep = std::log(6.4) / 27.0;
  if (hz < kMelMinLogHz) return hz / kMelFSp;
  return kMelMinLogMel + std::log(hz / kMelMinLogHz) / logstep;
}

double mel_to_hz(double mel) {
  const double logstep = std::log(6.4) / 27.0;
  if (mel < kMelMinLogMel) return mel * kMelFSp;
  return kMelMinLogHz * std::exp(logstep * (mel - kMelMinLogMel));
}

torch::Tensor make_window(Window w, int length, const torch::TensorOptions& opts) {
  if (w == Window::kRect) return torch::ones({length}, opts);
  return torch::hann_window(length, /*periodic=*/true, opts);
}

void check_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw InputError(std::string(what) + " contains non-finite values");
  }
}

}  // namespace

void AudioBuffer::validate() const {
  if (!samples.defined() || samples.dim() < 1 || samples.dim() > 2) {
    throw InputError("audio samples must be a [T] or [B, T] tensor");
  }
  if (length() < 1) throw InputError("audio must contain at least one sample");
  if (sample_rate <= 0) throw InputError("sample rate must be positive");
  check_finite(samples, "audio");
}

Window parse_window(const std::string& name) {
  if (name == "hann") return Window::kHann;
  if (name == "rect") return Window::kRect;
  throw ConfigError("unknown window '" + name + "'");
}

std::string window_name(Window w) { return w == Window::kHann ? "hann" : "rect"; }

void StftConfig::validate() const {
  if (hop_size <= 0 || hop_size > win_size || win_size > n_fft) {
    throw ConfigError("STFT config requires 0 < hop <= win <= n_fft (hop=" +
                      std::to_string(hop_size) + ", win=" +
                      std::to_string(win_size) + ", n_fft=" +
                      std::to_string(n_fft) + ")");
  }
}

void MelConfig::validate(int sample_rate) const {
  if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
  if (f_min < 0.0 || f_min >= f_max) {
    throw ConfigError("mel band requires 0 <= f_min < f_max");
  }
  if (f_max > sample_rate / 2.0) {
    throw ConfigError("mel f_max " + std::to_string(f_max) +
                      " exceeds Nyquist " + std::to_string(sample_rate / 2.0));
  }
  if (!(log_floor > 0.0)) throw ConfigError("mel log_floor must be positive");
}

void CqtConfig::validate(int sample_rate) const {
  if (bins_per_octave < 1 || octaves < 1) {
    throw ConfigError("CQT needs >= 1 octave and >= 1 bin per octave");
  }
  if (!(f_min > 0.0)) throw ConfigError("CQT f_min must be positive");
  if (hop_size < 1) throw ConfigError("CQT hop must be positive");
  if (f_min * std::pow(2.0, octaves) > sample_rate / 2.0 + 1e-9) {
    throw ConfigError("CQT range f_min * 2^octaves exceeds Nyquist");
  }
  for (int h : scales) {
    if (h < 1) throw ConfigError("CQT scale hops must be positive");
  }
}

double CqtConfig::center_frequency(int bin) const {
  return f_min * std::pow(2.0, static_cast<double>(bin) / bins_per_octave);
}

CqtConfig CqtConfig::at_scale(size_t i) const {
  CqtConfig out = *this;
  out.hop_size = scales.at(i);
  return out;
}

ComplexSpectrogram stft(const AudioBuffer& audio, const StftConfig& cfg) {
  audio.validate();
  cfg.validate();
  if (audio.length() <= cfg.n_fft / 2) {
    throw LengthError("reflect padding needs more than n_fft/2 = " +
                      std::to_string(cfg.n_fft / 2) + " samples, got " +
                      std::to_string(audio.length()));
  }
  auto window = make_window(cfg.window, cfg.win_size, audio.samples.options());
  auto spec = torch::stft(audio.samples, cfg.n_fft, cfg.hop_size, cfg.win_size,
                          window, /*center=*/true, "reflect",
                          /*normalized=*/false, /*onesided=*/true,
                          /*return_complex=*/true);
  return {spec, cfg};
}

torch::Tensor stft_magnitude(const torch::Tensor& samples,
                             const StftConfig& cfg) {
  auto spec = stft(AudioBuffer(samples, 1), cfg).values;
  auto ri = torch::view_as_real(spec);
  return torch::sqrt(ri.pow(2).sum(-1) + kMagnitudeEps);
}

torch::Tensor mel_filterbank(int sample_rate, int n_fft, const MelConfig& mel) {
  mel.validate(sample_rate);
  const int bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(mel.f_min);
  const double mel_hi = hz_to_mel(mel.f_max);
  std::vector<double> edges(mel.n_mels + 2);
  for (int i = 0; i < mel.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (mel.n_mels + 1));
  }
  auto fb = torch::zeros({mel.n_mels, bins}, torch::kFloat64);
  auto acc = fb.accessor<double, 2>();
  for (int m = 0; m < mel.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double enorm = 2.0 / (hi - lo);
    bool any = false;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      const double rise = (f - lo) / (mid - lo);
      const double fall = (hi - f) / (hi - mid);
      const double w = std::max(0.0, std::min(rise, fall));
      acc[m][k] = w * enorm;
      any = any || w > 0.0;
    }
    if (!any) {
      throw ConfigError("mel filter " + std::to_string(m) + " of " +
                        std::to_string(mel.n_mels) + " covers no FFT bin (n_fft=" +
                        std::to_string(n_fft) + ")");
    }
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const AudioBuffer& audio, const StftConfig& cfg,
                               const MelConfig& mel) {
  audio.validate();
  auto fb = mel_filterbank(audio.sample_rate, cfg.n_fft, mel)
                .to(audio.samples.scalar_type());
  auto mag = stft_magnitude(audio.samples, cfg);
  auto projected = torch::matmul(fb, mag);
  auto values = torch::log(torch::clamp_min(projected, mel.log_floor));
  return {values, cfg, mel, audio.sample_rate};
}

MelSpectrogram conditioning_mel(const AudioBuffer& audio, const StftConfig& cfg,
                                const MelConfig& mel) {
  if (audio.length() % cfg.hop_size != 0) {
    throw ShapeError("conditioning audio length " +
                     std::to_string(audio.length()) +
                     " is not a multiple of hop " + std::to_string(cfg.hop_size));
  }
  auto full = mel_spectrogram(audio, cfg, mel);
  const int64_t frames = audio.length() / cfg.hop_size;
  full.values = full.values.narrow(-1, 0, frames);
  return full;
}

torch::Tensor cqt_kernels(int sample_rate, const CqtConfig& cfg) {
  cfg.validate(sample_rate);
  const int bins = cfg.bins();
  const double q = 1.0 / (std::pow(2.0, 1.0 / cfg.bins_per_octave) - 1.0);
  auto kernel_len = [&](int k) {
    return static_cast<int>(std::ceil(q * sample_rate / cfg.center_frequency(k)));
  };
  int longest = kernel_len(0);
  longest += longest % 2;
  auto bank = torch::zeros({2 * bins, longest}, torch::kFloat64);
  auto acc = bank.accessor<double, 2>();
  for (int k = 0; k < bins; ++k) {
    const int n = kernel_len(k);
    const int offset = (longest - n) / 2;
    const double f = cfg.center_frequency(k);
    for (int i = 0; i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
      const double phase = 2.0 * std::numbers::pi * f * (i - n / 2.0) / sample_rate;
      acc[k][offset + i] = w * std::cos(phase) / n;
      acc[bins + k][offset + i] = -w * std::sin(phase) / n;
    }
  }
  return bank;
}

torch::Tensor cqt_log_magnitude(const torch::Tensor& samples,
                                const torch::Tensor& kernels,
                                const CqtConfig& cfg) {
  const int64_t len = kernels.size(1);
  const int bins = cfg.bins();
  auto padded = torch::constant_pad_nd(samples, {len / 2, len / 2});
  // [..., frames, len]
  auto frames = padded.unfold(-1, len, cfg.hop_size);
  auto resp = torch::matmul(frames, kernels.t());  // [..., frames, 2 * bins]
  auto re = resp.narrow(-1, 0, bins);
  auto im = resp.narrow(-1, bins, bins);
  auto mag = torch::sqrt(re * re + im * im + kCqtMagnitudeEps);
  return torch::log(torch::clamp_min(mag, cfg.log_floor)).transpose(-1, -2);
}

CqtSpectrogram cqt(const AudioBuffer& audio, const CqtConfig& cfg) {
  audio.validate();
  auto bank = cqt_kernels(audio.sample_rate, cfg).to(audio.samples.scalar_type());
  return {cqt_log_magnitude(audio.samples, bank, cfg), cfg};
}

torch::Tensor reshape_periods(const torch::Tensor& samples, int period) {
  if (period < 1) throw ConfigError("period must be >= 1");
  const int64_t len = samples.size(-1);
  const int64_t cols = (len + period - 1) / period;
  auto padded = torch::constant_pad_nd(samples, {0, cols * period - len});
  auto sizes = padded.sizes().vec();
  sizes.back() = cols;
  sizes.push_back(period);
  return padded.reshape(sizes).transpose(-1, -2);
}

torch::Tensor unfold_periods(const torch::Tensor& grid) {
  auto sizes = grid.sizes().vec();
  const int64_t period = sizes[sizes.size() - 2];
  const int64_t cols = sizes.back();
  sizes.pop_back();
  sizes.back() = period * cols;
  return grid.transpose(-1, -2).reshape(sizes);
}

}  // namespace turbowave
