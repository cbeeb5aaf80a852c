// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "turbowave/signal.hpp"

namespace turbowave {

struct ModelScale {
  std::string name = "tiny";
  int hidden_dim = 32;
  int final_dim = 4;

  void validate() const;

  static ModelScale tiny() { return {"tiny", 32, 4}; }
  static ModelScale small() { return {"S", 256, 16}; }
  static ModelScale base() { return {"B", 512, 32}; }
  static ModelScale large() { return {"L", 768, 48}; }
  // Accepts tiny / S / B / L (case-insensitive).
  static ModelScale preset(const std::string& name);
};

struct EstimatorConfig {
  ModelScale scale = ModelScale::tiny();
  std::vector<int> periods = {2, 3, 5, 7, 11};
  int n_mels = 80;
  int conditioning_hop = 256;

  void validate() const;
};

// Period-aware vector-field estimator G(x_t, c, t).
//
// The noisy waveform is lifted to hidden_dim channels and summed with the
// upsampled mel condition and a sinusoidal time embedding. A shared dilated
// encoder feeds one 2-D branch per period; each branch folds the sequence
// with reshape_periods, convolves along the fold (samples one period
// apart), and unfolds back. Branch outputs are averaged and projected
// through final_dim channels to a single-channel field.
class VectorFieldEstimatorImpl : public torch::nn::Module {
 public:
  explicit VectorFieldEstimatorImpl(EstimatorConfig cfg);

  // x_t: [B, T]; condition: [B, n_mels, T / hop]; t: [B] in [0, 1].
  // Returns the field as [B, T].
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& condition,
                        const torch::Tensor& t);

  const EstimatorConfig& config() const { return cfg_; }

 private:
  torch::Tensor time_embedding(const torch::Tensor& t) const;

  EstimatorConfig cfg_;
  torch::nn::Linear time_in_{nullptr}, time_out_{nullptr};
  torch::nn::Conv1d input_proj_{nullptr}, cond_proj_{nullptr};
  torch::nn::ModuleList encoder_{nullptr};
  torch::nn::ModuleList branches_{nullptr};
  torch::nn::ModuleList branch_time_{nullptr};
  torch::nn::Conv1d head_{nullptr}, out_{nullptr};
};
TORCH_MODULE(VectorFieldEstimator);

struct DiscriminatorOutput {
  torch::Tensor score;                 // logits, any shape
  std::vector<torch::Tensor> features;  // intermediate activations
};

struct DiscriminatorConfig {
  std::vector<int> periods = {2, 3, 5, 7, 11};
  std::vector<int> mpd_channels = {8, 16, 32, 32};
  CqtConfig cqt;
  int cqt_channels = 8;
  int sample_rate = 22050;

  void validate() const;
};

class PeriodDiscriminatorImpl : public torch::nn::Module {
 public:
  PeriodDiscriminatorImpl(int period, const std::vector<int>& channels);
  DiscriminatorOutput forward(const torch::Tensor& x);
  int period() const { return period_; }
  int64_t min_length() const { return period_; }

 private:
  int period_;
  torch::nn::ModuleList convs_{nullptr};
  torch::nn::Conv2d post_{nullptr};
};
TORCH_MODULE(PeriodDiscriminator);

// One constant-Q resolution, split into per-octave sub-bands with their own
// input convolutions before a shared 2-D stack.
class SubBandCqtDiscriminatorImpl : public torch::nn::Module {
 public:
  SubBandCqtDiscriminatorImpl(CqtConfig cfg, int sample_rate, int channels);
  DiscriminatorOutput forward(const torch::Tensor& x);
  int64_t min_length() const { return cfg_.hop_size; }

 private:
  CqtConfig cfg_;
  int sample_rate_;
  torch::Tensor kernels_;
  torch::nn::ModuleList band_convs_{nullptr};
  torch::nn::ModuleList convs_{nullptr};
  torch::nn::Conv2d post_{nullptr};
};
TORCH_MODULE(SubBandCqtDiscriminator);

// MPD branches (one per period) followed by one MS-SB-CQTD branch per CQT
// scale.
class DiscriminatorEnsembleImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorEnsembleImpl(DiscriminatorConfig cfg);

  // x: [B, T]. Throws LengthError if T is below min_length().
  std::vector<DiscriminatorOutput> forward(const torch::Tensor& x);

  size_t branch_count() const { return mpd_.size() + cqtd_.size(); }
  int64_t min_length() const;
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<PeriodDiscriminator> mpd_;
  std::vector<SubBandCqtDiscriminator> cqtd_;
};
TORCH_MODULE(DiscriminatorEnsemble);

// Exact number of learnable scalars.
int64_t count_parameters(const torch::nn::Module& module);

}  // namespace turbowave
