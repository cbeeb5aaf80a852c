// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "turbowave/eval.hpp"

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "turbowave/errors.hpp"
#include "turbowave/losses.hpp"

namespace turbowave {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kNotAvailable = "n/a";
constexpr const char* kPesqReason = "PESQ needs the ITU-T P.862 reference implementation";
constexpr const char* kUtmosReason = "UTMOS needs a pretrained MOS predictor";

std::vector<double> to_vector(const torch::Tensor& audio) {
  auto t = audio.detach().to(torch::kFloat64).contiguous().view({-1});
  const double* p = t.data_ptr<double>();
  return std::vector<double>(p, p + t.numel());
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : kNotAvailable; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json item_json(const ItemMetrics& m) {
  return {{"name", m.name},
          {"mstft", m.mstft},
          {"periodicity", m.periodicity},
          {"vuv_f1", m.vuv_f1},
          {"pitch_hz", optional_json(m.pitch_hz)},
          {"pitch_cents", optional_json(m.pitch_cents)},
          {"nfe", m.nfe},
          {"wall_clock_s", m.wall_clock_s},
          {"audio_s", m.audio_s},
          {"xrt", m.xrt}};
}

ItemMetrics item_from(const json& j) {
  ItemMetrics m;
  m.name = j.at("name").get<std::string>();
  m.mstft = j.at("mstft").get<double>();
  m.periodicity = j.at("periodicity").get<double>();
  m.vuv_f1 = j.at("vuv_f1").get<double>();
  m.pitch_hz = optional_from(j.at("pitch_hz"));
  m.pitch_cents = optional_from(j.at("pitch_cents"));
  m.nfe = j.at("nfe").get<double>();
  m.wall_clock_s = j.at("wall_clock_s").get<double>();
  m.audio_s = j.at("audio_s").get<double>();
  m.xrt = j.at("xrt").get<double>();
  return m;
}

std::string csv_row(const ItemMetrics& m) {
  std::ostringstream s;
  s << m.name << ',' << fmt(m.mstft) << ',' << fmt(m.periodicity) << ',' << fmt(m.vuv_f1)
    << ',' << fmt(m.pitch_hz) << ',' << fmt(m.pitch_cents) << ',' << fmt(m.nfe) << ','
    << fmt(m.wall_clock_s) << ',' << fmt(m.xrt) << ',' << kNotAvailable << ','
    << kNotAvailable;
  return s.str();
}

std::string markdown_row(const ItemMetrics& m) {
  std::ostringstream s;
  s << "| " << m.name << " | " << fmt(m.mstft) << " | " << fmt(m.periodicity) << " | "
    << fmt(m.vuv_f1) << " | " << fmt(m.pitch_hz) << " | " << fmt(m.nfe) << " | "
    << fmt(m.xrt) << " |";
  return s.str();
}

// Counts estimator calls made through the wrapped field.
struct CountingField {
  VectorField inner;
  int64_t* calls;

  torch::Tensor operator()(const torch::Tensor& x, const torch::Tensor& c,
                           const torch::Tensor& t) const {
    ++*calls;
    return inner(x, c, t);
  }
};

}  // namespace

double mstft_distance(const torch::Tensor& x, const torch::Tensor& x_hat) {
  if (x.dim() != 1 || x_hat.dim() != 1) throw ShapeError("mstft_distance expects [T] inputs");
  const int64_t n = x.size(0);
  auto y = x_hat.size(0) >= n ? x_hat.slice(0, 0, n)
                              : torch::constant_pad_nd(x_hat, {0, n - x_hat.size(0)});
  torch::NoGradGuard guard;
  return multi_resolution_stft_loss(x.to(torch::kFloat64), y.to(torch::kFloat64),
                                    mstft_resolutions())
      .item<double>();
}

PitchTrack extract_pitch(const torch::Tensor& audio, int sample_rate, int hop,
                         const PitchConfig& cfg) {
  if (hop < 1 || cfg.window < 2) throw ConfigError("pitch hop and window must be positive");
  if (!(cfg.f_min > 0.0) || !(cfg.f_max > cfg.f_min)) {
    throw ConfigError("pitch range must satisfy 0 < f_min < f_max");
  }
  const auto x = to_vector(audio);
  const int tau_min = std::max(2, static_cast<int>(std::floor(sample_rate / cfg.f_max)));
  const int tau_max = static_cast<int>(std::ceil(sample_rate / cfg.f_min));
  const int w = cfg.window;
  const double silence = std::pow(10.0, cfg.silence_db / 10.0);

  PitchTrack track;
  track.hop = hop;
  track.sample_rate = sample_rate;
  const size_t n_frames = x.size() / static_cast<size_t>(hop);
  track.f0.assign(n_frames, 0.0);
  track.periodicity.assign(n_frames, 0.0);

  std::vector<double> frame(static_cast<size_t>(w + tau_max + 1));
  std::vector<double> dn(static_cast<size_t>(tau_max + 2));
  for (size_t i = 0; i < n_frames; ++i) {
    const size_t start = i * static_cast<size_t>(hop);
    for (size_t j = 0; j < frame.size(); ++j) {
      frame[j] = start + j < x.size() ? x[start + j] : 0.0;
    }
    double energy = 0.0;
    for (int j = 0; j < w; ++j) energy += frame[j] * frame[j];
    if (energy / w < silence) continue;

    // d(tau) = sum (x_j - x_{j+tau})^2 over the window, cumulative-mean
    // normalized as d'(tau) = d(tau) * tau / sum_{k<=tau} d(k).
    double running = 0.0;
    dn[0] = 1.0;
    for (int tau = 1; tau <= tau_max + 1; ++tau) {
      double s = 0.0;
      for (int j = 0; j < w; ++j) {
        const double diff = frame[j] - frame[j + tau];
        s += diff * diff;
      }
      running += s;
      dn[tau] = running > 0.0 ? s * tau / running : 1.0;
    }

    int best = -1;
    for (int tau = tau_min; tau <= tau_max; ++tau) {
      if (dn[tau] < cfg.threshold) {
        while (tau + 1 <= tau_max && dn[tau + 1] < dn[tau]) ++tau;
        best = tau;
        break;
      }
    }
    bool voiced = best >= 0;
    if (!voiced) {
      best = tau_min;
      for (int tau = tau_min; tau <= tau_max; ++tau) {
        if (dn[tau] < dn[best]) best = tau;
      }
    }
    track.periodicity[i] = std::clamp(1.0 - dn[best], 0.0, 1.0);
    if (!voiced) continue;

    double lag = best;
    const double a = dn[best - 1], b = dn[best], c = dn[best + 1];
    const double denom = a - 2.0 * b + c;
    if (denom > 0.0) lag += std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
    const double f0 = sample_rate / lag;
    if (f0 >= cfg.f_min && f0 <= cfg.f_max) track.f0[i] = f0;
  }
  return track;
}

PitchMetrics pitch_metrics(const PitchTrack& ref, const PitchTrack& hyp) {
  if (ref.frames() != hyp.frames()) {
    throw ShapeError("pitch tracks have " + std::to_string(ref.frames()) + " and " +
                     std::to_string(hyp.frames()) + " frames");
  }
  PitchMetrics m;
  const size_t n = ref.frames();
  double per = 0.0, hz = 0.0, cents = 0.0;
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < n; ++i) {
    const double dp = ref.periodicity[i] - hyp.periodicity[i];
    per += dp * dp;
    const bool r = ref.voiced(i), h = hyp.voiced(i);
    if (r && h) {
      ++tp;
      const double df = hyp.f0[i] - ref.f0[i];
      hz += df * df;
      const double dc = 1200.0 * std::log2(hyp.f0[i] / ref.f0[i]);
      cents += dc * dc;
    } else if (h) {
      ++fp;
    } else if (r) {
      ++fn;
    }
  }
  m.periodicity = n > 0 ? std::sqrt(per / static_cast<double>(n)) : 0.0;
  m.vuv_f1 = tp + fp + fn == 0 ? 1.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  if (tp > 0) {
    m.pitch_hz = std::sqrt(hz / static_cast<double>(tp));
    m.pitch_cents = std::sqrt(cents / static_cast<double>(tp));
  }
  return m;
}

ItemMetrics MetricReport::aggregate() const {
  ItemMetrics a;
  a.name = "mean";
  if (items.empty()) return a;
  std::vector<double> mstft, per, f1, nfe, wall, audio, xrt, hz, cents;
  for (const auto& m : items) {
    mstft.push_back(m.mstft);
    per.push_back(m.periodicity);
    f1.push_back(m.vuv_f1);
    nfe.push_back(m.nfe);
    wall.push_back(m.wall_clock_s);
    audio.push_back(m.audio_s);
    xrt.push_back(m.xrt);
    if (m.pitch_hz) hz.push_back(*m.pitch_hz);
    if (m.pitch_cents) cents.push_back(*m.pitch_cents);
  }
  a.mstft = mean_of(mstft);
  a.periodicity = mean_of(per);
  a.vuv_f1 = mean_of(f1);
  a.nfe = mean_of(nfe);
  a.wall_clock_s = mean_of(wall);
  a.audio_s = mean_of(audio);
  a.xrt = mean_of(xrt);
  if (!hz.empty()) a.pitch_hz = mean_of(hz);
  if (!cents.empty()) a.pitch_cents = mean_of(cents);
  return a;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "markdown" || name == "md") return ReportFormat::kMarkdown;
  throw ConfigError("report format must be json|csv|markdown, got '" + name + "'");
}

void emit_report(const MetricReport& report, const fs::path& path, ReportFormat format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  const auto agg = report.aggregate();
  switch (format) {
    case ReportFormat::kJson: {
      json j;
      j["model_id"] = report.model_id;
      j["config_hash"] = report.config_hash;
      j["items"] = json::array();
      for (const auto& m : report.items) j["items"].push_back(item_json(m));
      j["aggregate"] = item_json(agg);
      j["pesq"] = {{"value", kNotAvailable}, {"reason", kPesqReason}};
      j["utmos"] = {{"value", kNotAvailable}, {"reason", kUtmosReason}};
      out << j.dump(2) << "\n";
      break;
    }
    case ReportFormat::kCsv:
      out << "item,mstft,periodicity,vuv_f1,pitch_hz,pitch_cents,nfe,wall_clock_s,xrt,"
             "pesq,utmos\n";
      for (const auto& m : report.items) out << csv_row(m) << "\n";
      out << csv_row(agg) << "\n";
      break;
    case ReportFormat::kMarkdown:
      out << "Model: " << report.model_id << " (config " << report.config_hash << ")\n\n";
      out << "| Item | M-STFT | Period. | V/UV | Pitch | NFE | xRT |\n";
      out << "|---|---|---|---|---|---|---|\n";
      for (const auto& m : report.items) out << markdown_row(m) << "\n";
      out << markdown_row(agg) << "\n\n";
      out << "Pitch is RMSE in Hz. PESQ: n/a (" << kPesqReason << "). UTMOS: n/a ("
          << kUtmosReason << ").\n";
      break;
  }
  if (!out) throw IoError("short write to " + path.string());
}

MetricReport load_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report " + path.string());
  MetricReport r;
  try {
    const auto j = json::parse(in);
    r.model_id = j.at("model_id").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& item : j.at("items")) r.items.push_back(item_from(item));
  } catch (const json::exception& e) {
    throw DecodeError("malformed report " + path.string() + ": " + e.what());
  }
  return r;
}

std::string metric_config_hash(const TimeGrid& grid, const PitchConfig& pitch,
                               int sample_rate, int hop) {
  std::ostringstream s;
  s << "mstft";
  for (const auto& r : mstft_resolutions()) {
    s << ':' << r.n_fft << '/' << r.hop_size << '/' << r.win_size << '/'
      << window_name(r.window);
  }
  s << ";pitch:" << pitch.window << '/' << pitch.f_min << '/' << pitch.f_max << '/'
    << pitch.threshold << '/' << pitch.silence_db << ";sr:" << sample_rate
    << ";hop:" << hop << ";solver:" << solver_name(grid.solver) << ";knots";
  for (double k : grid.knots) s << ':' << k;
  const auto text = s.str();
  const auto crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(text.data()),
                         static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

torch::Tensor generate(VectorFieldEstimator est, const torch::Tensor& condition,
                       const TimeGrid& grid, uint64_t seed, int hop) {
  if (condition.dim() != 2) throw ShapeError("generate expects a [n_mels, frames] condition");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto x0 = torch::randn({1, condition.size(1) * hop}, gen, condition.options());
  torch::NoGradGuard guard;
  est->eval();
  return ode_sample(as_field(est), x0, condition.unsqueeze(0), grid).squeeze(0);
}

BenchmarkResult benchmark_generation(VectorFieldEstimator est, const TimeGrid& grid,
                                     const std::vector<torch::Tensor>& conditions,
                                     int sample_rate, int hop, int repeats) {
  grid.validate();
  if (conditions.empty()) throw InputError("benchmark needs at least one item");
  if (repeats < 1) throw ConfigError("benchmark repeats must be >= 1");
  torch::NoGradGuard guard;
  est->eval();
  int64_t calls = 0;
  const VectorField field = CountingField{as_field(est), &calls};
  auto run = [&](uint64_t seed) {
    for (size_t i = 0; i < conditions.size(); ++i) {
      const auto& c = conditions[i];
      auto gen = at::make_generator<at::CPUGeneratorImpl>(seed + i);
      auto x0 = torch::randn({1, c.size(1) * hop}, gen, c.options());
      ode_sample(field, x0, c.unsqueeze(0), grid);
    }
  };
  run(0);
  calls = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) run(static_cast<uint64_t>(r + 1) * 1000003);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  double audio = 0.0;
  for (const auto& c : conditions) audio += static_cast<double>(c.size(1) * hop) / sample_rate;
  BenchmarkResult b;
  const double generated = static_cast<double>(conditions.size()) * repeats;
  b.nfe = static_cast<double>(calls) / generated;
  b.wall_clock_s = wall / repeats;
  b.audio_s = audio;
  b.xrt = b.wall_clock_s > 0.0 ? audio / b.wall_clock_s : 0.0;
  return b;
}

ItemMetrics compare_audio(const std::string& name, const AudioBuffer& ref,
                          const AudioBuffer& hyp, int hop, const PitchConfig& pitch) {
  if (ref.sample_rate != hyp.sample_rate) {
    throw InputError("sample rates differ for '" + name + "'");
  }
  auto x = ref.samples.view({-1});
  auto y = hyp.samples.view({-1});
  const int64_t n = x.size(0);
  y = y.size(0) >= n ? y.slice(0, 0, n) : torch::constant_pad_nd(y, {0, n - y.size(0)});
  ItemMetrics m;
  m.name = name;
  m.mstft = mstft_distance(x, y);
  const auto pm = pitch_metrics(extract_pitch(x, ref.sample_rate, hop, pitch),
                                extract_pitch(y, ref.sample_rate, hop, pitch));
  m.periodicity = pm.periodicity;
  m.vuv_f1 = pm.vuv_f1;
  m.pitch_hz = pm.pitch_hz;
  m.pitch_cents = pm.pitch_cents;
  m.audio_s = static_cast<double>(n) / ref.sample_rate;
  return m;
}

MetricReport evaluate_copy_synthesis(VectorFieldEstimator est, const Corpus& data,
                                     const TimeGrid& grid, const StftConfig& stft,
                                     const MelConfig& mel, uint64_t seed,
                                     const PitchConfig& pitch) {
  grid.validate();
  if (data.size() == 0) throw InputError("evaluation split is empty");
  MetricReport report;
  torch::NoGradGuard guard;
  est->eval();
  for (size_t i = 0; i < data.size(); ++i) {
    const auto ref = crop_to_hop(data.item(i), stft.hop_size);
    const auto cond = conditioning_mel(ref, stft, mel).values;
    int64_t calls = 0;
    const VectorField field = CountingField{as_field(est), &calls};
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed + i);
    auto x0 = torch::randn({1, ref.length()}, gen, ref.samples.options());
    const auto start = std::chrono::steady_clock::now();
    auto y = ode_sample(field, x0, cond.unsqueeze(0), grid).squeeze(0);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    auto m = compare_audio(data.name(i), ref, AudioBuffer(y, ref.sample_rate),
                           stft.hop_size, pitch);
    m.nfe = static_cast<double>(calls);
    m.wall_clock_s = wall;
    m.xrt = wall > 0.0 ? m.audio_s / wall : 0.0;
    report.items.push_back(std::move(m));
  }
  report.config_hash = metric_config_hash(grid, pitch, data.item(0).sample_rate, stft.hop_size);
  return report;
}

}  // namespace turbowave
