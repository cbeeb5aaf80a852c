// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "turbowave/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "turbowave/errors.hpp"

namespace turbowave {

namespace F = torch::nn::functional;

namespace {

constexpr double kLeakySlope = 0.1;
constexpr int kBranchKernel = 3;
const std::vector<int> kEncoderDilations = {1, 3};
const std::vector<int> kBranchDilations = {1, 2, 4};

torch::Tensor leaky(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeakySlope));
}

}  // namespace

void ModelScale::validate() const {
  if (final_dim < 1 || hidden_dim < final_dim) {
    throw ConfigError("model scale requires hidden_dim >= final_dim >= 1");
  }
}

ModelScale ModelScale::preset(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "tiny") return tiny();
  if (lower == "s") return small();
  if (lower == "b") return base();
  if (lower == "l") return large();
  throw ConfigError("unknown model scale '" + name + "'");
}

void EstimatorConfig::validate() const {
  scale.validate();
  if (periods.empty()) throw ConfigError("estimator needs at least one period");
  for (int p : periods) {
    if (p < 1) throw ConfigError("periods must be positive");
  }
  if (n_mels < 1 || conditioning_hop < 1) {
    throw ConfigError("estimator needs n_mels >= 1 and conditioning_hop >= 1");
  }
}

VectorFieldEstimatorImpl::VectorFieldEstimatorImpl(EstimatorConfig cfg)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int h = cfg_.scale.hidden_dim;
  const int f = cfg_.scale.final_dim;
  time_in_ = register_module("time_in", torch::nn::Linear(h, 2 * h));
  time_out_ = register_module("time_out", torch::nn::Linear(2 * h, h));
  input_proj_ = register_module(
      "input_proj",
      torch::nn::Conv1d(torch::nn::Conv1dOptions(1, h, 7).padding(3)));
  cond_proj_ = register_module(
      "cond_proj",
      torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg_.n_mels, h, 3).padding(1)));

  encoder_ = register_module("encoder", torch::nn::ModuleList());
  for (int d : kEncoderDilations) {
    encoder_->push_back(torch::nn::Conv1d(
        torch::nn::Conv1dOptions(h, h, 3).dilation(d).padding(d)));
  }

  branches_ = register_module("branches", torch::nn::ModuleList());
  branch_time_ = register_module("branch_time", torch::nn::ModuleList());
  for (size_t b = 0; b < cfg_.periods.size(); ++b) {
    auto stack = torch::nn::ModuleList();
    for (int d : kBranchDilations) {
      stack->push_back(torch::nn::Conv2d(
          torch::nn::Conv2dOptions(h, h, {1, kBranchKernel})
              .dilation({1, d})
              .padding({0, d * (kBranchKernel / 2)})));
    }
    branches_->push_back(stack);
    branch_time_->push_back(torch::nn::Linear(h, h));
  }

  head_ = register_module(
      "head", torch::nn::Conv1d(torch::nn::Conv1dOptions(h, f, 3).padding(1)));
  out_ = register_module(
      "out", torch::nn::Conv1d(torch::nn::Conv1dOptions(f, 1, 3).padding(1)));
}

torch::Tensor VectorFieldEstimatorImpl::time_embedding(const torch::Tensor& t) const {
  const int64_t half = cfg_.scale.hidden_dim / 2;
  auto idx = torch::arange(half, t.options());
  auto freqs = torch::exp(-std::log(10000.0) * idx / std::max<int64_t>(half, 1));
  auto args = (1000.0 * t).unsqueeze(1) * freqs.unsqueeze(0);
  auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
  if (emb.size(1) < cfg_.scale.hidden_dim) {
    emb = torch::constant_pad_nd(emb, {0, cfg_.scale.hidden_dim - emb.size(1)});
  }
  return emb;
}

torch::Tensor VectorFieldEstimatorImpl::forward(const torch::Tensor& x_t,
                                                const torch::Tensor& condition,
                                                const torch::Tensor& t) {
  if (x_t.dim() != 2 || condition.dim() != 3 || t.dim() != 1) {
    throw ShapeError("estimator expects x_t [B, T], condition [B, M, F], t [B]");
  }
  const int64_t batch = x_t.size(0);
  const int64_t len = x_t.size(1);
  if (condition.size(0) != batch || t.size(0) != batch) {
    throw ShapeError("estimator batch sizes disagree");
  }
  if (condition.size(1) != cfg_.n_mels) {
    throw ShapeError("condition has " + std::to_string(condition.size(1)) +
                     " mel bins, estimator expects " + std::to_string(cfg_.n_mels));
  }
  if (len != condition.size(2) * cfg_.conditioning_hop) {
    throw ShapeError("x_t length " + std::to_string(len) + " != frames " +
                     std::to_string(condition.size(2)) + " x hop " +
                     std::to_string(cfg_.conditioning_hop));
  }

  auto temb = time_out_(torch::silu(time_in_(time_embedding(t))));
  auto cond = F::interpolate(cond_proj_(condition),
                             F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{len})
                                 .mode(torch::kLinear)
                                 .align_corners(false));
  auto h = input_proj_(x_t.unsqueeze(1)) + cond + temb.unsqueeze(-1);
  for (auto& m : *encoder_) {
    h = h + m->as<torch::nn::Conv1d>()->forward(torch::silu(h));
  }

  torch::Tensor mixed;
  for (size_t b = 0; b < cfg_.periods.size(); ++b) {
    auto bias = branch_time_[b]->as<torch::nn::Linear>()->forward(temb);
    auto g = reshape_periods(h + bias.unsqueeze(-1), cfg_.periods[b]);
    for (auto& m : *branches_[b]->as<torch::nn::ModuleList>()) {
      g = g + m->as<torch::nn::Conv2d>()->forward(torch::silu(g));
    }
    auto branch = unfold_periods(g).narrow(-1, 0, len);
    mixed = mixed.defined() ? mixed + branch : branch;
  }
  mixed = mixed / static_cast<double>(cfg_.periods.size());

  auto y = out_(torch::silu(head_(torch::silu(mixed))));
  return y.squeeze(1);
}

void DiscriminatorConfig::validate() const {
  if (periods.empty() && cqt.scales.empty()) {
    throw ConfigError("discriminator ensemble has no branches");
  }
  if (mpd_channels.empty() || cqt_channels < 1) {
    throw ConfigError("discriminator channel counts must be positive");
  }
  cqt.validate(sample_rate);
}

PeriodDiscriminatorImpl::PeriodDiscriminatorImpl(int period,
                                                 const std::vector<int>& channels)
    : period_(period) {
  if (period < 1) throw ConfigError("period must be >= 1");
  convs_ = register_module("convs", torch::nn::ModuleList());
  int in = 1;
  for (int c : channels) {
    convs_->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, c, {1, 5}).stride({1, 3}).padding({0, 2})));
    in = c;
  }
  convs_->push_back(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in, in, {1, 5}).padding({0, 2})));
  post_ = register_module(
      "post", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, {1, 3}).padding({0, 1})));
}

DiscriminatorOutput PeriodDiscriminatorImpl::forward(const torch::Tensor& x) {
  DiscriminatorOutput out;
  auto h = reshape_periods(x, period_).unsqueeze(1);  // [B, 1, p, cols]
  for (auto& m : *convs_) {
    h = leaky(m->as<torch::nn::Conv2d>()->forward(h));
    out.features.push_back(h);
  }
  out.score = post_(h).flatten(1);
  out.features.push_back(out.score);
  return out;
}

SubBandCqtDiscriminatorImpl::SubBandCqtDiscriminatorImpl(CqtConfig cfg,
                                                         int sample_rate,
                                                         int channels)
    : cfg_(std::move(cfg)), sample_rate_(sample_rate) {
  cfg_.validate(sample_rate_);
  kernels_ = register_buffer("kernels",
                             cqt_kernels(sample_rate_, cfg_).to(torch::kFloat32));
  band_convs_ = register_module("band_convs", torch::nn::ModuleList());
  for (int o = 0; o < cfg_.octaves; ++o) {
    band_convs_->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(1, channels, {3, 3}).padding({1, 1})));
  }
  convs_ = register_module("convs", torch::nn::ModuleList());
  for (int i = 0; i < 2; ++i) {
    convs_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, {3, 3})
                                            .stride({2, 1})
                                            .padding({1, 1})));
  }
  convs_->push_back(torch::nn::Conv2d(
      torch::nn::Conv2dOptions(channels, channels, {3, 3}).padding({1, 1})));
  post_ = register_module(
      "post",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 1, {3, 3}).padding({1, 1})));
}

DiscriminatorOutput SubBandCqtDiscriminatorImpl::forward(const torch::Tensor& x) {
  auto spec = cqt_log_magnitude(x, kernels_.to(x.scalar_type()), cfg_)
                  .unsqueeze(1);  // [B, 1, bins, frames]

  DiscriminatorOutput out;
  std::vector<torch::Tensor> bands;
  for (int o = 0; o < cfg_.octaves; ++o) {
    auto band = spec.narrow(2, o * cfg_.bins_per_octave, cfg_.bins_per_octave);
    bands.push_back(band_convs_[o]->as<torch::nn::Conv2d>()->forward(band));
  }
  auto h = leaky(torch::cat(bands, 2));
  out.features.push_back(h);
  for (auto& m : *convs_) {
    h = leaky(m->as<torch::nn::Conv2d>()->forward(h));
    out.features.push_back(h);
  }
  out.score = post_(h).flatten(1);
  out.features.push_back(out.score);
  return out;
}

DiscriminatorEnsembleImpl::DiscriminatorEnsembleImpl(DiscriminatorConfig cfg)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (int p : cfg_.periods) {
    mpd_.push_back(register_module("mpd_" + std::to_string(p),
                                   PeriodDiscriminator(p, cfg_.mpd_channels)));
  }
  for (size_t s = 0; s < cfg_.cqt.scales.size(); ++s) {
    cqtd_.push_back(register_module(
        "cqtd_" + std::to_string(s),
        SubBandCqtDiscriminator(cfg_.cqt.at_scale(s), cfg_.sample_rate,
                                cfg_.cqt_channels)));
  }
}

int64_t DiscriminatorEnsembleImpl::min_length() const {
  int64_t m = 1;
  for (const auto& d : mpd_) m = std::max(m, d->min_length());
  for (const auto& d : cqtd_) m = std::max(m, d->min_length());
  return m;
}

std::vector<DiscriminatorOutput> DiscriminatorEnsembleImpl::forward(
    const torch::Tensor& x) {
  if (x.dim() != 2) throw ShapeError("discriminator expects [B, T] input");
  if (x.size(1) < min_length()) {
    throw LengthError("discriminator input of " + std::to_string(x.size(1)) +
                      " samples is shorter than the minimum " +
                      std::to_string(min_length()));
  }
  std::vector<DiscriminatorOutput> outs;
  outs.reserve(branch_count());
  for (auto& d : mpd_) outs.push_back(d->forward(x));
  for (auto& d : cqtd_) outs.push_back(d->forward(x));
  return outs;
}

int64_t count_parameters(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace turbowave
