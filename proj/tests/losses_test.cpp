// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <limits>

#include "oracles.hpp"
#include "turbowave/errors.hpp"
#include "turbowave/flow.hpp"
#include "turbowave/losses.hpp"

namespace turbowave {
namespace {

constexpr int kSr = 22050;

torch::Tensor noise(std::vector<int64_t> shape, uint64_t seed, double scale = 0.1) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn(shape, gen, torch::kFloat64) * scale;
}

// Stub discriminator outputs: every branch emits a constant score map.
std::vector<DiscriminatorOutput> stub(double value, size_t branches) {
  std::vector<DiscriminatorOutput> outs;
  for (size_t b = 0; b < branches; ++b) {
    DiscriminatorOutput o;
    o.score = torch::full({2, static_cast<int64_t>(3 + b)}, value, torch::kFloat64);
    o.features = {o.score};
    outs.push_back(o);
  }
  return outs;
}

DiscriminatorOutput single_feature(std::vector<double> v) {
  DiscriminatorOutput o;
  o.score = torch::zeros({1});
  o.features = {torch::tensor(v, torch::kFloat64)};
  return o;
}

TEST(MelLoss, ZeroOnIdenticalInputs) {
  auto x = noise({2, 4096}, 1);
  StftConfig cfg;
  MelConfig mel;
  EXPECT_EQ(mel_loss(x, x.clone(), kSr, cfg, mel).item<double>(), 0.0);
  auto z = torch::zeros({4096}, torch::kFloat64);
  EXPECT_EQ(mel_loss(z, z, kSr, cfg, mel).item<double>(), 0.0);
  EXPECT_EQ(multiscale_mel_loss(x, x.clone(), kSr, MultiScaleMelSpec::defaults(kSr)).item<double>(),
            0.0);
}

TEST(MelLoss, GrowsWithPerturbationSize) {
  auto x = noise({4096}, 2);
  auto e = noise({4096}, 3, 1.0);
  StftConfig cfg;
  MelConfig mel;
  const double small = mel_loss(x, x + 1e-3 * e, kSr, cfg, mel).item<double>();
  const double large = mel_loss(x, x + 1e-2 * e, kSr, cfg, mel).item<double>();
  EXPECT_GT(small, 0.0);
  EXPECT_GT(large, small);
  EXPECT_THROW(mel_loss(x, x.narrow(0, 0, 4000), kSr, cfg, mel), ShapeError);
}

TEST(MultiScaleMel, DefaultResolutions) {
  const auto spec = MultiScaleMelSpec::defaults(kSr);
  ASSERT_EQ(spec.resolutions.size(), 7u);
  const std::vector<int> hops = {8, 16, 32, 64, 128, 256, 512};
  const std::vector<int> mels = {8, 18, 37, 76, 80, 80, 80};
  for (size_t i = 0; i < 7; ++i) {
    const auto& r = spec.resolutions[i];
    EXPECT_EQ(r.stft.hop_size, hops[i]);
    EXPECT_EQ(r.stft.win_size, 4 * hops[i]);
    EXPECT_GE(r.stft.n_fft, r.stft.win_size);
    EXPECT_EQ(r.mel.n_mels, mels[i]) << "hop " << hops[i];
    EXPECT_LE(r.mel.n_mels, std::min(80, 10 * hops[i]));
    // Every filter has support, and one more filter would leave a row empty
    // unless the count is already at its cap.
    EXPECT_NO_THROW(mel_filterbank(kSr, r.stft.n_fft, r.mel));
    if (r.mel.n_mels < std::min(80, 10 * hops[i])) {
      auto more = r.mel;
      ++more.n_mels;
      EXPECT_THROW(mel_filterbank(kSr, r.stft.n_fft, more), ConfigError);
    }
  }
  EXPECT_EQ(spec.max_window(), 2048);
}

TEST(MultiScaleMel, IsTheMeanOfPerResolutionLosses) {
  auto x = noise({2, 4096}, 4);
  auto y = x + noise({2, 4096}, 5, 0.02);
  const auto spec = MultiScaleMelSpec::defaults(kSr);
  double sum = 0.0;
  for (const auto& r : spec.resolutions) sum += mel_loss(x, y, kSr, r.stft, r.mel).item<double>();
  EXPECT_NEAR(multiscale_mel_loss(x, y, kSr, spec).item<double>(), sum / 7.0, 1e-7);
}

TEST(MultiScaleMel, ShortInputIsALengthError) {
  auto x = noise({2000}, 6);
  EXPECT_THROW(multiscale_mel_loss(x, x, kSr, MultiScaleMelSpec::defaults(kSr)), LengthError);
}

TEST(MultiScaleMel, GradientMatchesFiniteDifferences) {
  auto x = noise({2048}, 7);
  auto y = (x + noise({2048}, 8, 0.05)).requires_grad_(true);
  const auto spec = MultiScaleMelSpec::defaults(kSr);
  auto f = [&] { return multiscale_mel_loss(x, y, kSr, spec); };
  auto grad = torch::autograd::grad({f()}, {y})[0];
  for (int trial = 0; trial < 6; ++trial) {
    auto d = noise({2048}, 200 + trial, 1.0);
    const double analytic = (grad * d).sum().item<double>();
    const double numeric = oracle::directional_fd([&] { return f().item<double>(); }, y, d, 1e-6);
    EXPECT_LT(oracle::rel_err(analytic, numeric), 1e-3) << analytic << " vs " << numeric;
  }
  auto single = [&] { return mel_loss(x, y, kSr, StftConfig{}, MelConfig{}); };
  auto g1 = torch::autograd::grad({single()}, {y})[0];
  auto d = noise({2048}, 300, 1.0);
  EXPECT_LT(oracle::rel_err((g1 * d).sum().item<double>(),
                            oracle::directional_fd([&] { return single().item<double>(); }, y, d,
                                                   1e-6)),
            1e-3);
}

TEST(StftLoss, ZeroOnIdenticalAndDecomposes) {
  auto x = noise({2, 4096}, 9);
  auto y = 0.5 * x;
  EXPECT_EQ(multi_resolution_stft_loss(x, x, mstft_resolutions()).item<double>(), 0.0);
  const double v = multi_resolution_stft_loss(x, y, mstft_resolutions()).item<double>();
  EXPECT_GT(v, 0.0);
  double sum = 0.0;
  for (const auto& r : mstft_resolutions()) sum += stft_distance(x, y, r).item<double>();
  EXPECT_NEAR(v, sum / 3.0, 1e-12);
  EXPECT_EQ(multiscale_stft_resolutions().size(), 7u);
}

TEST(StftLoss, SpectralConvergenceOracle) {
  // Hand evaluation on one resolution with per-item norms.
  auto x = noise({2, 1024}, 10);
  auto y = x + noise({2, 1024}, 11, 0.03);
  StftConfig cfg{256, 64, 256, Window::kHann};
  auto rx = stft_magnitude(x, cfg), ry = stft_magnitude(y, cfg);
  double sc = 0.0;
  for (int b = 0; b < 2; ++b) {
    const auto a = oracle::values(rx[b]), c = oracle::values(ry[b]);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      num += (a[i] - c[i]) * (a[i] - c[i]);
      den += a[i] * a[i];
    }
    sc += std::sqrt(num) / std::sqrt(den) / 2.0;
  }
  const auto la = oracle::values(rx.log()), lc = oracle::values(ry.log());
  double l1 = 0.0;
  for (size_t i = 0; i < la.size(); ++i) l1 += std::abs(la[i] - lc[i]);
  l1 /= static_cast<double>(la.size());
  EXPECT_NEAR(stft_distance(x, y, cfg).item<double>(), sc + l1, 1e-10);
}

TEST(Adversarial, StubDiscriminatorClosedForms) {
  for (size_t branches : {1u, 8u}) {
    const double n = static_cast<double>(branches);
    EXPECT_EQ(adv_d_loss(stub(1.0, branches), stub(0.0, branches)).item<double>(), 0.0);
    EXPECT_EQ(adv_d_loss(stub(0.0, branches), stub(1.0, branches)).item<double>(), 2.0 * n);
    EXPECT_EQ(adv_d_loss(stub(0.5, branches), stub(0.5, branches)).item<double>(), 0.5 * n);
    EXPECT_EQ(adv_g_loss(stub(1.0, branches)).item<double>(), 0.0);
    EXPECT_EQ(adv_g_loss(stub(0.0, branches)).item<double>(), n);
  }
  EXPECT_THROW(adv_d_loss(stub(0.0, 2), stub(0.0, 3)), ShapeError);
}

TEST(Adversarial, InvariantToBatchOrder) {
  torch::manual_seed(3);
  DiscriminatorEnsemble d(DiscriminatorConfig{});
  d->eval();
  auto x = noise({3, 4096}, 12, 0.3).to(torch::kFloat32);
  auto y = noise({3, 4096}, 13, 0.3).to(torch::kFloat32);
  auto perm = torch::tensor({2, 0, 1}, torch::kLong);
  torch::NoGradGuard guard;
  const double a = (adv_d_loss(d, x, y) + adv_g_loss(d, y)).item<double>();
  const double b =
      (adv_d_loss(d, x.index_select(0, perm), y.index_select(0, perm)) +
       adv_g_loss(d, y.index_select(0, perm)))
          .item<double>();
  EXPECT_LT(oracle::rel_err(a, b), 1e-5);
}

TEST(Adversarial, DiscriminatorLossDoesNotReachGenerator) {
  torch::manual_seed(4);
  DiscriminatorEnsemble d(DiscriminatorConfig{});
  auto x = noise({1, 4096}, 14, 0.3).to(torch::kFloat32);
  auto y = noise({1, 4096}, 15, 0.3).to(torch::kFloat32).requires_grad_(true);
  adv_d_loss(d, x, y).backward();
  EXPECT_FALSE(y.grad().defined());
}

TEST(Adversarial, GeneratorGradientAfterOneDiscriminatorStep) {
  torch::manual_seed(5);
  DiscriminatorEnsemble d(DiscriminatorConfig{});
  torch::optim::AdamW opt(d->parameters(), torch::optim::AdamWOptions(1e-3));
  auto x = noise({1, 4096}, 16, 0.3).to(torch::kFloat32);
  auto y = noise({1, 4096}, 17, 0.3).to(torch::kFloat32).requires_grad_(true);
  opt.zero_grad();
  adv_d_loss(d, x, y).backward();
  opt.step();
  auto g = torch::autograd::grad({adv_g_loss(d, y)}, {y})[0];
  EXPECT_GT(g.abs().max().item<double>(), 0.0);
}

TEST(FeatureMatching, HandEvaluatedValue) {
  const double v =
      feature_matching_loss({single_feature({1.0, 2.0})}, {single_feature({2.0, 4.0})})
          .item<double>();
  EXPECT_DOUBLE_EQ(v, 1.5);
  auto a = stub(0.3, 4), b = stub(0.7, 4);
  EXPECT_EQ(feature_matching_loss(a, a).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(feature_matching_loss(a, b).item<double>(),
                   feature_matching_loss(b, a).item<double>());
  EXPECT_GE(feature_matching_loss(a, b).item<double>(), 0.0);
}

TEST(FeatureMatching, RealFeaturesAreConstantsAndStructureIsChecked) {
  auto real = single_feature({1.0, 2.0});
  auto fake = single_feature({2.0, 4.0});
  real.features[0].requires_grad_(true);
  fake.features[0].requires_grad_(true);
  feature_matching_loss({real}, {fake}).backward();
  EXPECT_FALSE(real.features[0].grad().defined());
  EXPECT_TRUE(fake.features[0].grad().defined());
  auto extra = stub(0.0, 1);
  extra[0].features.push_back(extra[0].score);
  EXPECT_THROW(feature_matching_loss(stub(0.0, 1), extra), ShapeError);
  EXPECT_THROW(feature_matching_loss({single_feature({1.0, 2.0})}, {single_feature({1.0})}),
               ShapeError);
}

TEST(FinalLoss, WeightedComposition) {
  const LossWeights w;
  EXPECT_EQ(w.lambda_fm, 2.0);
  EXPECT_EQ(w.lambda_mel, 45.0);
  auto s = [](double v) { return torch::scalar_tensor(v, torch::kFloat64); };
  EXPECT_EQ(final_generator_loss(s(1.0), s(0.5), s(0.1), w).item<double>(), 6.5);
  auto f = [](double v) { return torch::scalar_tensor(v, torch::kFloat32); };
  EXPECT_EQ(final_generator_loss(f(1.0), f(0.5), f(0.1), w).item<float>(), 6.5f);
  EXPECT_EQ(final_generator_loss(s(0.0), s(0.0), s(0.0), w).item<double>(), 0.0);
  EXPECT_EQ(final_generator_loss(s(0.7), s(3.0), s(9.0), LossWeights{0.0, 0.0}).item<double>(),
            0.7);
}

TEST(FinalLoss, NonFiniteComponentHalts) {
  auto s = [](double v) { return torch::scalar_tensor(v, torch::kFloat64); };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    final_generator_loss(s(1.0), s(nan), s(0.1), LossWeights{});
    FAIL() << "expected TrainingHalt";
  } catch (const TrainingHalt& e) {
    EXPECT_NE(std::string(e.what()).find("fm"), std::string::npos) << e.what();
  }
  EXPECT_THROW(final_generator_loss(s(1.0), s(0.5), s(INFINITY), LossWeights{}), TrainingHalt);
  EXPECT_THROW(LossWeights({-1.0, 45.0}).validate(), ConfigError);
}

TEST(FixedStepGradient, MatchesFiniteDifferencesOnTinyModel) {
  torch::manual_seed(8);
  VectorFieldEstimator est(EstimatorConfig{});
  est->to(torch::kFloat64);
  auto x0 = noise({1, 2048}, 18, 1.0);
  auto cond = noise({1, 80, 8}, 19, 1.0);
  auto target = noise({1, 2048}, 20, 0.3);
  const auto spec = MultiScaleMelSpec::defaults(kSr);
  auto f = [&] {
    auto y = fixed_step_generate(as_field(est), x0, cond, 4);
    return multiscale_mel_loss(target, y, kSr, spec) + (y - target).pow(2).mean();
  };
  auto params = est->parameters();
  auto grads = torch::autograd::grad({f()}, params);
  int checked = 0;
  for (size_t i = 0; i < params.size(); i += 3) {
    auto d = noise(params[i].sizes().vec(), 400 + i, 1.0);
    const double analytic = (grads[i] * d).sum().item<double>();
    const double numeric =
        oracle::directional_fd([&] { return f().item<double>(); }, params[i], d, 1e-6);
    EXPECT_LT(oracle::rel_err(analytic, numeric), 1e-3)
        << "param " << i << ": " << analytic << " vs " << numeric;
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

}  // namespace
}  // namespace turbowave
