// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "turbowave/model.hpp"
#include "turbowave/signal.hpp"

namespace turbowave {

struct MelResolution {
  StftConfig stft;
  MelConfig mel;
};

struct MultiScaleMelSpec {
  std::vector<MelResolution> resolutions;

  int64_t max_window() const;

  // Hops 8..512 (x2), win = n_fft = 4 * hop. Each resolution gets the
  // largest filter count <= min(80, 10 * hop) for which no filter is empty.
  static MultiScaleMelSpec defaults(int sample_rate);
};

// Default analysis grid of the M-STFT objective and distance:
// n_fft {512, 1024, 2048}, hop {50, 120, 240}, win {240, 600, 1200}.
std::vector<StftConfig> mstft_resolutions();

// Hop grid of the multi-scale Mel loss, reused by the M-STFT ablation loss.
std::vector<StftConfig> multiscale_stft_resolutions();

struct LossWeights {
  double lambda_fm = 2.0;
  double lambda_mel = 45.0;

  void validate() const;
};

// Mean |log-Mel(x) - log-Mel(x_hat)|. Inputs are [T] or [B, T].
torch::Tensor mel_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                       int sample_rate, const StftConfig& cfg, const MelConfig& mel);

// Arithmetic mean of mel_loss over every resolution of `spec`.
torch::Tensor multiscale_mel_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                                  int sample_rate, const MultiScaleMelSpec& spec);

// Spectral convergence plus mean log-magnitude L1 for one resolution,
// averaged over the batch.
torch::Tensor stft_distance(const torch::Tensor& x, const torch::Tensor& x_hat,
                            const StftConfig& cfg);

// Mean of stft_distance over `resolutions`.
torch::Tensor multi_resolution_stft_loss(const torch::Tensor& x,
                                         const torch::Tensor& x_hat,
                                         const std::vector<StftConfig>& resolutions);

// LSGAN discriminator objective: sum over branches of
// mean[(D(x) - 1)^2] + mean[D(x_hat)^2].
torch::Tensor adv_d_loss(const std::vector<DiscriminatorOutput>& real,
                         const std::vector<DiscriminatorOutput>& fake);
// Runs the ensemble; x_hat is detached.
torch::Tensor adv_d_loss(DiscriminatorEnsemble& ens, const torch::Tensor& x,
                         const torch::Tensor& x_hat);

// LSGAN generator objective: sum over branches of mean[(D(x_hat) - 1)^2].
torch::Tensor adv_g_loss(const std::vector<DiscriminatorOutput>& fake);
torch::Tensor adv_g_loss(DiscriminatorEnsemble& ens, const torch::Tensor& x_hat);

// Sum over branches and layers of mean |f_real - f_fake|; real features are
// treated as constants.
torch::Tensor feature_matching_loss(const std::vector<DiscriminatorOutput>& real,
                                    const std::vector<DiscriminatorOutput>& fake);

// adv + lambda_fm * fm + lambda_mel * mel. Throws TrainingHalt naming the
// first non-finite component.
torch::Tensor final_generator_loss(const torch::Tensor& adv_g, const torch::Tensor& fm,
                                   const torch::Tensor& mel, const LossWeights& w);

}  // namespace turbowave
