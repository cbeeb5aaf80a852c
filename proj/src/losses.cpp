// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "turbowave/losses.hpp"

#include <algorithm>

#include "turbowave/errors.hpp"

namespace turbowave {

namespace {

void check_pair(const torch::Tensor& x, const torch::Tensor& x_hat) {
  if (x.sizes() != x_hat.sizes()) {
    throw ShapeError("reference and generated audio differ in shape");
  }
}

bool filterbank_ok(int sample_rate, int n_fft, const MelConfig& mel) {
  try {
    mel_filterbank(sample_rate, n_fft, mel);
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

torch::Tensor zero_like_scalar(const torch::Tensor& like) {
  return torch::zeros({}, like.options());
}

}  // namespace

int64_t MultiScaleMelSpec::max_window() const {
  int64_t m = 0;
  for (const auto& r : resolutions) m = std::max<int64_t>(m, r.stft.n_fft);
  return m;
}

MultiScaleMelSpec MultiScaleMelSpec::defaults(int sample_rate) {
  MultiScaleMelSpec spec;
  for (int hop : {8, 16, 32, 64, 128, 256, 512}) {
    MelResolution r;
    r.stft = StftConfig{4 * hop, hop, 4 * hop, Window::kHann};
    r.mel.f_min = 0.0;
    r.mel.f_max = sample_rate / 2.0;
    int n = std::min({80, 10 * hop, r.stft.bins()});
    r.mel.n_mels = n;
    while (n > 1 && !filterbank_ok(sample_rate, r.stft.n_fft, r.mel)) {
      r.mel.n_mels = --n;
    }
    spec.resolutions.push_back(r);
  }
  return spec;
}

std::vector<StftConfig> mstft_resolutions() {
  return {StftConfig{512, 50, 240, Window::kHann},
          StftConfig{1024, 120, 600, Window::kHann},
          StftConfig{2048, 240, 1200, Window::kHann}};
}

std::vector<StftConfig> multiscale_stft_resolutions() {
  std::vector<StftConfig> out;
  for (int hop : {8, 16, 32, 64, 128, 256, 512}) {
    out.push_back(StftConfig{4 * hop, hop, 4 * hop, Window::kHann});
  }
  return out;
}

void LossWeights::validate() const {
  if (lambda_fm < 0.0 || lambda_mel < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

torch::Tensor mel_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                       int sample_rate, const StftConfig& cfg, const MelConfig& mel) {
  check_pair(x, x_hat);
  auto ref = mel_spectrogram(AudioBuffer(x, sample_rate), cfg, mel).values;
  auto gen = mel_spectrogram(AudioBuffer(x_hat, sample_rate), cfg, mel).values;
  return (ref - gen).abs().mean();
}

torch::Tensor multiscale_mel_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                                  int sample_rate, const MultiScaleMelSpec& spec) {
  check_pair(x, x_hat);
  if (spec.resolutions.empty()) throw ConfigError("no mel resolutions");
  if (x.size(-1) < spec.max_window()) {
    throw LengthError("multi-scale mel loss needs >= " +
                      std::to_string(spec.max_window()) + " samples, got " +
                      std::to_string(x.size(-1)));
  }
  auto total = zero_like_scalar(x_hat);
  for (const auto& r : spec.resolutions) {
    total = total + mel_loss(x, x_hat, sample_rate, r.stft, r.mel);
  }
  return total / static_cast<double>(spec.resolutions.size());
}

torch::Tensor stft_distance(const torch::Tensor& x, const torch::Tensor& x_hat,
                            const StftConfig& cfg) {
  check_pair(x, x_hat);
  auto ref = stft_magnitude(x, cfg);
  auto gen = stft_magnitude(x_hat, cfg);
  // Per-item spectral convergence over the last two axes.
  auto diff_norm = (ref - gen).pow(2).sum({-2, -1}).sqrt();
  auto ref_norm = ref.pow(2).sum({-2, -1}).sqrt();
  auto sc = (diff_norm / ref_norm).mean();
  auto log_mag = (ref.log() - gen.log()).abs().mean();
  return sc + log_mag;
}

torch::Tensor multi_resolution_stft_loss(const torch::Tensor& x,
                                         const torch::Tensor& x_hat,
                                         const std::vector<StftConfig>& resolutions) {
  if (resolutions.empty()) throw ConfigError("no STFT resolutions");
  int64_t longest = 0;
  for (const auto& r : resolutions) longest = std::max<int64_t>(longest, r.win_size);
  if (x.size(-1) < longest) {
    throw LengthError("multi-resolution STFT needs >= " + std::to_string(longest) +
                      " samples, got " + std::to_string(x.size(-1)));
  }
  auto total = zero_like_scalar(x_hat);
  for (const auto& r : resolutions) total = total + stft_distance(x, x_hat, r);
  return total / static_cast<double>(resolutions.size());
}

torch::Tensor adv_d_loss(const std::vector<DiscriminatorOutput>& real,
                         const std::vector<DiscriminatorOutput>& fake) {
  if (real.size() != fake.size() || real.empty()) {
    throw ShapeError("discriminator output lists differ in branch count");
  }
  auto total = zero_like_scalar(real.front().score);
  for (size_t b = 0; b < real.size(); ++b) {
    total = total + (real[b].score - 1.0).pow(2).mean() + fake[b].score.pow(2).mean();
  }
  return total;
}

torch::Tensor adv_d_loss(DiscriminatorEnsemble& ens, const torch::Tensor& x,
                         const torch::Tensor& x_hat) {
  return adv_d_loss(ens->forward(x), ens->forward(x_hat.detach()));
}

torch::Tensor adv_g_loss(const std::vector<DiscriminatorOutput>& fake) {
  if (fake.empty()) throw ShapeError("no discriminator outputs");
  auto total = zero_like_scalar(fake.front().score);
  for (const auto& out : fake) total = total + (out.score - 1.0).pow(2).mean();
  return total;
}

torch::Tensor adv_g_loss(DiscriminatorEnsemble& ens, const torch::Tensor& x_hat) {
  return adv_g_loss(ens->forward(x_hat));
}

torch::Tensor feature_matching_loss(const std::vector<DiscriminatorOutput>& real,
                                    const std::vector<DiscriminatorOutput>& fake) {
  if (real.size() != fake.size() || real.empty()) {
    throw ShapeError("discriminator output lists differ in branch count");
  }
  auto total = zero_like_scalar(fake.front().score);
  for (size_t b = 0; b < real.size(); ++b) {
    const auto& rf = real[b].features;
    const auto& ff = fake[b].features;
    if (rf.size() != ff.size()) {
      throw ShapeError("branch " + std::to_string(b) + " feature counts differ");
    }
    for (size_t l = 0; l < rf.size(); ++l) {
      if (rf[l].sizes() != ff[l].sizes()) {
        throw ShapeError("branch " + std::to_string(b) + " layer " +
                         std::to_string(l) + " feature shapes differ");
      }
      total = total + (rf[l].detach() - ff[l]).abs().mean();
    }
  }
  return total;
}

torch::Tensor final_generator_loss(const torch::Tensor& adv_g, const torch::Tensor& fm,
                                   const torch::Tensor& mel, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, const torch::Tensor*> parts[] = {
      {"adv_g", &adv_g}, {"fm", &fm}, {"mel", &mel}};
  for (const auto& [name, t] : parts) {
    if (!torch::isfinite(*t).all().item<bool>()) {
      throw TrainingHalt(std::string("non-finite generator loss component '") +
                         name + "'");
    }
  }
  return adv_g + w.lambda_fm * fm + w.lambda_mel * mel;
}

}  // namespace turbowave
