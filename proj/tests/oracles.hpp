// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Independent reference computations for the tests. Everything here is
// written from the textbook definitions with plain loops, never through the
// library code paths it checks.

#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline std::vector<double> values(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous().view({-1});
  return std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

// Periodic Hann of length n.
inline std::vector<double> hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// Centered STFT by direct DFT: reflect padding of n_fft/2, window of length
// win zero-padded to n_fft around the center. Returns [bins][frames].
inline std::vector<std::vector<std::complex<double>>> dft_stft(const std::vector<double>& x,
                                                               int n_fft, int hop,
                                                               const std::vector<double>& w) {
  const int pad = n_fft / 2;
  const int n = static_cast<int>(x.size());
  std::vector<double> xp(n + 2 * pad);
  for (int i = 0; i < static_cast<int>(xp.size()); ++i) {
    int j = i - pad;
    if (j < 0) j = -j;
    if (j >= n) j = 2 * (n - 1) - j;
    xp[i] = x[j];
  }
  std::vector<double> wf(n_fft, 0.0);
  const int off = (n_fft - static_cast<int>(w.size())) / 2;
  for (size_t i = 0; i < w.size(); ++i) wf[off + i] = w[i];
  const int frames = (static_cast<int>(xp.size()) - n_fft) / hop + 1;
  const int bins = n_fft / 2 + 1;
  std::vector<std::vector<std::complex<double>>> out(bins, std::vector<std::complex<double>>(frames));
  for (int m = 0; m < frames; ++m) {
    for (int k = 0; k < bins; ++k) {
      std::complex<double> acc = 0.0;
      for (int i = 0; i < n_fft; ++i) {
        const double ph = -2.0 * std::numbers::pi * k * i / n_fft;
        acc += xp[m * hop + i] * wf[i] * std::complex<double>(std::cos(ph), std::sin(ph));
      }
      out[k][m] = acc;
    }
  }
  return out;
}

inline double hz_to_mel(double f) {
  const double f_sp = 200.0 / 3.0, min_log_hz = 1000.0;
  if (f < min_log_hz) return f / f_sp;
  return min_log_hz / f_sp + std::log(f / min_log_hz) / (std::log(6.4) / 27.0);
}

inline double mel_to_hz(double m) {
  const double f_sp = 200.0 / 3.0, min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp;
  if (m < min_log_mel) return m * f_sp;
  return min_log_hz * std::exp((std::log(6.4) / 27.0) * (m - min_log_mel));
}

// Slaney-normalized triangular filterbank, [n_mels][bins].
inline std::vector<std::vector<double>> slaney_filterbank(int sr, int n_fft, int n_mels,
                                                          double f_min, double f_max) {
  const int bins = n_fft / 2 + 1;
  std::vector<double> pts(n_mels + 2);
  const double lo = hz_to_mel(f_min), hi = hz_to_mel(f_max);
  for (int i = 0; i < n_mels + 2; ++i) pts[i] = mel_to_hz(lo + (hi - lo) * i / (n_mels + 1));
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(bins, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    const double norm = 2.0 / (pts[m + 2] - pts[m]);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sr / n_fft;
      const double up = (f - pts[m]) / (pts[m + 1] - pts[m]);
      const double down = (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1]);
      fb[m][k] = std::max(0.0, std::min(up, down)) * norm;
    }
  }
  return fb;
}

// Relative error with an absolute floor so tiny gradients do not dominate.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f along direction d at x (x is modified in place
// and restored).
inline double directional_fd(const std::function<double()>& f, torch::Tensor x,
                             const torch::Tensor& d, double h) {
  torch::NoGradGuard guard;
  x.add_(d, h);
  const double up = f();
  x.add_(d, -2.0 * h);
  const double down = f();
  x.add_(d, h);
  return (up - down) / (2.0 * h);
}

}  // namespace oracle
