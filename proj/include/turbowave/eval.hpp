// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "turbowave/data.hpp"
#include "turbowave/flow.hpp"
#include "turbowave/model.hpp"
#include "turbowave/signal.hpp"

namespace turbowave {

// M-STFT distance on the fixed 3-resolution grid of mstft_resolutions().
// x_hat is trimmed or zero-padded to x. Inputs are [T]; LengthError when x
// is shorter than the largest analysis window.
double mstft_distance(const torch::Tensor& x, const torch::Tensor& x_hat);

struct PitchConfig {
  int window = 1024;
  double f_min = 50.0;
  double f_max = 800.0;
  double threshold = 0.15;    // on the cumulative-mean-normalized difference
  double silence_db = -80.0;  // frames below this mean power are unvoiced
};

// One value per frame of `hop` samples; f0 is 0 on unvoiced frames.
struct PitchTrack {
  std::vector<double> f0;
  std::vector<double> periodicity;  // 1 - d' at the chosen lag, in [0, 1]
  int hop = 256;
  int sample_rate = 22050;

  size_t frames() const { return f0.size(); }
  bool voiced(size_t i) const { return f0[i] > 0.0; }
};

// YIN-style tracker. Frame i analyses samples [i * hop, i * hop + window +
// max lag), zero-padded past the end; there are T / hop frames.
PitchTrack extract_pitch(const torch::Tensor& audio, int sample_rate, int hop,
                         const PitchConfig& cfg = {});

struct PitchMetrics {
  double periodicity = 0.0;  // RMSE of per-frame periodicity
  double vuv_f1 = 1.0;       // reference = first track
  std::optional<double> pitch_hz;     // RMSE over frames voiced in both
  std::optional<double> pitch_cents;  // same frames, in cents
};

// Tracks must have equal frame counts (ShapeError otherwise). When neither
// track has a voiced frame the F1 is 1.
PitchMetrics pitch_metrics(const PitchTrack& ref, const PitchTrack& hyp);

struct ItemMetrics {
  std::string name;
  double mstft = 0.0;
  double periodicity = 0.0;
  double vuv_f1 = 1.0;
  std::optional<double> pitch_hz;
  std::optional<double> pitch_cents;
  double nfe = 0.0;
  double wall_clock_s = 0.0;
  double audio_s = 0.0;
  double xrt = 0.0;
};

// Aggregates are means over items; pitch means skip items without a value
// and stay empty when no item has one.
struct MetricReport {
  std::string model_id;
  std::string config_hash;
  std::vector<ItemMetrics> items;

  ItemMetrics aggregate() const;
};

enum class ReportFormat { kJson, kCsv, kMarkdown };

ReportFormat parse_report_format(const std::string& name);

// CSV columns, in order:
//   item,mstft,periodicity,vuv_f1,pitch_hz,pitch_cents,nfe,wall_clock_s,xrt,pesq,utmos
// The last row is the aggregate under item name "mean". Missing values and
// the unsupported pesq/utmos columns are written as n/a.
void emit_report(const MetricReport& report, const std::filesystem::path& path,
                 ReportFormat format);
MetricReport load_report(const std::filesystem::path& path);  // json only

// Identifier covering every setting that changes metric values.
std::string metric_config_hash(const TimeGrid& grid, const PitchConfig& pitch,
                               int sample_rate, int hop);

// x0 ~ N(0, 1) from `seed`, integrated over `grid`. condition: [M, F];
// returns [F * hop].
torch::Tensor generate(VectorFieldEstimator est, const torch::Tensor& condition,
                       const TimeGrid& grid, uint64_t seed, int hop);

struct BenchmarkResult {
  double nfe = 0.0;  // estimator calls per generated item
  double wall_clock_s = 0.0;
  double audio_s = 0.0;
  double xrt = 0.0;  // audio seconds per wall-clock second
};

// Generates every condition once as warm-up, then times `repeats` passes.
BenchmarkResult benchmark_generation(VectorFieldEstimator est, const TimeGrid& grid,
                                     const std::vector<torch::Tensor>& conditions,
                                     int sample_rate, int hop, int repeats = 1);

// Copy synthesis: each item is cropped to the hop grid, conditioned on its own
// mel and regenerated with noise seed `seed + index`.
MetricReport evaluate_copy_synthesis(VectorFieldEstimator est, const Corpus& data,
                                     const TimeGrid& grid, const StftConfig& stft,
                                     const MelConfig& mel, uint64_t seed,
                                     const PitchConfig& pitch = {});

// Metrics for already generated audio; speed fields stay 0.
ItemMetrics compare_audio(const std::string& name, const AudioBuffer& ref,
                          const AudioBuffer& hyp, int hop, const PitchConfig& pitch = {});

}  // namespace turbowave
