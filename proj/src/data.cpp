// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "turbowave/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "turbowave/config.hpp"
#include "turbowave/errors.hpp"

namespace turbowave {

namespace fs = std::filesystem;

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t read_u16(const unsigned char* p) { return p[0] | (p[1] << 8); }

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DecodeError("cannot read manifest " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) f << l << "\n";
}

}  // namespace

AudioBuffer load_audio(const fs::path& path, int target_rate) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DecodeError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DecodeError(path.string() + " is not a RIFF/WAVE file");
  }
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  size_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t size = read_u32(chunk + 4);
    const size_t body = pos + 8;
    const size_t avail = std::min<size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) format = read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (format == 0 || data == nullptr) {
    throw DecodeError(path.string() + ": missing fmt or data chunk");
  }
  if (channels == 0 || rate == 0) throw DecodeError(path.string() + ": bad fmt chunk");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw DecodeError(path.string() + ": unsupported codec (format " +
                      std::to_string(format) + ", " + std::to_string(bits) + " bit)");
  }
  const size_t frame_bytes = static_cast<size_t>(channels) * bits / 8;
  const int64_t frames = static_cast<int64_t>(data_size / frame_bytes);
  if (frames < 1) throw DecodeError(path.string() + ": no samples");

  auto samples = torch::empty({frames}, torch::kFloat32);
  auto* out = samples.data_ptr<float>();
  for (int64_t i = 0; i < frames; ++i) {
    const unsigned char* p = data + i * frame_bytes;
    if (pcm16) {
      out[i] = static_cast<int16_t>(read_u16(p)) / 32768.0f;
    } else {
      uint32_t raw = read_u32(p);
      std::memcpy(&out[i], &raw, sizeof(float));
    }
  }
  AudioBuffer audio(samples, static_cast<int>(rate));
  if (target_rate > 0 && target_rate != audio.sample_rate) {
    audio = AudioBuffer(resample(samples, audio.sample_rate, target_rate), target_rate);
  }
  audio.validate();
  return audio;
}

void save_audio(const fs::path& path, const AudioBuffer& audio, WavFormat format) {
  audio.validate();
  if (audio.samples.dim() != 1) throw ShapeError("save_audio expects a [T] buffer");
  auto s = audio.samples.detach().to(torch::kFloat32).contiguous();
  const float* in = s.data_ptr<float>();
  const int64_t n = s.numel();
  const uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const uint32_t data_bytes = static_cast<uint32_t>(n * (bits / 8));

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<uint32_t>(audio.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_bytes);
  for (int64_t i = 0; i < n; ++i) {
    if (format == WavFormat::kPcm16) {
      const long q = std::lround(static_cast<double>(in[i]) * 32768.0);
      put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(std::clamp(q, -32768L, 32767L))));
    } else {
      uint32_t raw;
      std::memcpy(&raw, &in[i], sizeof(float));
      put_u32(out, raw);
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path.string());
}

torch::Tensor resample(const torch::Tensor& samples, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw ConfigError("sample rates must be positive");
  if (from_rate == to_rate) return samples.clone();
  constexpr int kZeroCrossings = 32;
  auto in = samples.detach().to(torch::kFloat64).contiguous();
  const double* x = in.data_ptr<double>();
  const int64_t n_in = in.numel();
  const int64_t n_out = n_in * to_rate / from_rate;
  const double ratio = static_cast<double>(from_rate) / to_rate;
  // Cutoff relative to the input rate.
  const double cutoff = 0.95 * 0.5 * std::min(1.0, 1.0 / ratio);
  const double half_width = kZeroCrossings / (2.0 * cutoff);
  auto out = torch::zeros({n_out}, torch::kFloat64);
  double* y = out.data_ptr<double>();
  for (int64_t j = 0; j < n_out; ++j) {
    const double center = j * ratio;
    const int64_t lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(center - half_width)));
    const int64_t hi = std::min<int64_t>(n_in - 1, static_cast<int64_t>(std::floor(center + half_width)));
    double acc = 0.0;
    for (int64_t k = lo; k <= hi; ++k) {
      const double d = k - center;
      const double arg = 2.0 * cutoff * d;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * d / half_width);
      acc += x[k] * 2.0 * cutoff * sinc * w;
    }
    y[j] = acc;
  }
  return out.to(samples.scalar_type());
}

void DatasetSpec::validate() const {
  stft.validate();
  mel.validate(sample_rate);
  if (segment_length < stft.hop_size || segment_length % stft.hop_size != 0) {
    throw ConfigError("segment_length must be a positive multiple of hop_size");
  }
}

const std::vector<std::string>& DatasetSpec::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "'");
}

DatasetSpec DatasetSpec::load(const fs::path& root) {
  auto meta = KeyValueConfig::load(root / "corpus.cfg");
  DatasetSpec spec;
  spec.root = root;
  spec.sample_rate = meta.get_int("corpus.sample_rate", 22050);
  spec.mel.f_max = spec.sample_rate / 2.0;
  spec.train = read_lines(root / "train.txt");
  spec.dev = read_lines(root / "dev.txt");
  spec.test = read_lines(root / "test.txt");
  return spec;
}

TrainingExample sample_segment(const AudioBuffer& audio, int64_t segment_length,
                               const StftConfig& stft, const MelConfig& mel,
                               torch::Generator& gen) {
  if (audio.samples.dim() != 1) throw ShapeError("sample_segment expects a [T] clip");
  if (segment_length % stft.hop_size != 0) {
    throw ConfigError("segment_length must be a multiple of hop_size");
  }
  const int64_t len = audio.length();
  torch::Tensor seg;
  if (len <= segment_length) {
    seg = torch::constant_pad_nd(audio.samples, {0, segment_length - len});
  } else {
    const int64_t positions = (len - segment_length) / stft.hop_size + 1;
    const int64_t k = torch::randint(positions, {1}, gen, torch::kLong).item<int64_t>();
    seg = audio.samples.narrow(0, k * stft.hop_size, segment_length).clone();
  }
  auto cond = conditioning_mel(AudioBuffer(seg, audio.sample_rate), stft, mel).values;
  return {seg, cond};
}

AudioBuffer crop_to_hop(const AudioBuffer& audio, int hop) {
  const int64_t len = audio.length();
  const int64_t keep = std::max<int64_t>(hop, (len / hop) * hop);
  if (keep > len) {
    return AudioBuffer(torch::constant_pad_nd(audio.samples, {0, keep - len}),
                       audio.sample_rate);
  }
  return AudioBuffer(audio.samples.narrow(-1, 0, keep), audio.sample_rate);
}

Corpus::Corpus(const DatasetSpec& spec, const std::string& split) : spec_(spec) {
  spec_.validate();
  for (const auto& rel : spec_.split(split)) {
    items_.push_back(load_audio(spec_.root / rel, spec_.sample_rate));
    names_.push_back(rel);
  }
  if (items_.empty()) throw ConfigError("split '" + split + "' is empty");
}

Batch Corpus::draw(int batch_size, torch::Generator& gen) const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<torch::Tensor> audio, cond;
  for (int b = 0; b < batch_size; ++b) {
    const int64_t idx =
        torch::randint(static_cast<int64_t>(items_.size()), {1}, gen, torch::kLong)
            .item<int64_t>();
    auto ex = sample_segment(items_[idx], spec_.segment_length, spec_.stft, spec_.mel, gen);
    audio.push_back(ex.segment);
    cond.push_back(ex.condition);
  }
  return {torch::stack(audio), torch::stack(cond)};
}

torch::Tensor synthesize_tone(const HarmonicTone& tone, double duration_s,
                              int sample_rate, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int64_t n = static_cast<int64_t>(std::llround(duration_s * sample_rate));
  const double nyquist = sample_rate / 2.0;
  std::vector<double> partial_phase(tone.harmonics);
  for (auto& p : partial_phase) p = phase(rng);
  const double am_phase = phase(rng);
  const double vib_phase = phase(rng);

  double norm = 0.0;
  for (int k = 1; k <= tone.harmonics; ++k) norm += 1.0 / k;
  const double noise_std = tone.peak * std::pow(10.0, tone.noise_db / 20.0);

  auto out = torch::empty({n}, torch::kFloat32);
  auto* y = out.data_ptr<float>();
  double f0_phase = 0.0;  // integrated fundamental phase
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f0 = tone.f0 * (1.0 + tone.vibrato_depth *
                                           std::sin(2.0 * std::numbers::pi * tone.vibrato_rate * t + vib_phase));
    double v = 0.0;
    for (int k = 1; k <= tone.harmonics; ++k) {
      if (k * f0 >= nyquist) break;
      v += std::sin(k * f0_phase + partial_phase[k - 1]) / k;
    }
    const double env = 1.0 - tone.am_depth * (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * tone.am_rate * t + am_phase));
    y[i] = static_cast<float>(tone.peak * env * v / norm + noise_std * normal(rng));
    f0_phase += 2.0 * std::numbers::pi * f0 / sample_rate;
  }
  return out;
}

DatasetSpec make_toy_corpus(const ToyCorpusOptions& opts) {
  if (opts.n_items < 3) throw ConfigError("toy corpus needs at least 3 items");
  std::error_code ec;
  fs::create_directories(opts.root / "wav", ec);
  if (ec) throw IoError("cannot create " + (opts.root / "wav").string() + ": " + ec.message());

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> partials(1, 8);

  DatasetSpec spec;
  spec.root = opts.root;
  spec.sample_rate = opts.sample_rate;
  spec.mel.f_max = opts.sample_rate / 2.0;

  const int n_dev = std::max(1, opts.n_items / 8);
  const int n_test = std::max(1, opts.n_items / 8);
  const int n_train = opts.n_items - n_dev - n_test;
  for (int i = 0; i < opts.n_items; ++i) {
    HarmonicTone tone;
    tone.f0 = 80.0 + 320.0 * unit(rng);
    tone.harmonics = partials(rng);
    tone.vibrato_depth = 0.02 * unit(rng);
    tone.vibrato_rate = 3.0 + 4.0 * unit(rng);
    tone.am_depth = 0.3 + 0.7 * unit(rng);
    tone.am_rate = 0.5 + 2.5 * unit(rng);
    const uint64_t item_seed = rng();
    auto samples = synthesize_tone(tone, opts.duration_s, opts.sample_rate, item_seed);

    char name[32];
    std::snprintf(name, sizeof(name), "wav/item_%03d.wav", i);
    save_audio(opts.root / name, AudioBuffer(samples, opts.sample_rate));
    auto& bucket = i < n_train ? spec.train : (i < n_train + n_dev ? spec.dev : spec.test);
    bucket.push_back(name);
  }
  write_lines(opts.root / "train.txt", spec.train);
  write_lines(opts.root / "dev.txt", spec.dev);
  write_lines(opts.root / "test.txt", spec.test);

  KeyValueConfig meta;
  meta.set("corpus.kind", "toy-harmonic");
  meta.set("corpus.n_items", std::to_string(opts.n_items));
  meta.set("corpus.duration_s", format_double(opts.duration_s));
  meta.set("corpus.sample_rate", std::to_string(opts.sample_rate));
  meta.set("corpus.seed", std::to_string(opts.seed));
  meta.set("corpus.format", "pcm16");
  meta.set("corpus.f0_range_hz", "80,400");
  meta.set("corpus.partials", "1,8");
  meta.set("corpus.noise_floor_db", "-40");
  meta.save(opts.root / "corpus.cfg");
  return spec;
}

}  // namespace turbowave
