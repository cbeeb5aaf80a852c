// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// turbowave <verb> [options]
//
//   make-corpus  write the synthetic harmonic corpus
//   pretrain     flow-matching pretraining
//   finetune     fixed-step adversarial fine-tuning from a teacher
//   synthesize   generate WAVs from wav or .npy mel inputs
//   evaluate     copy-synthesis metrics on a corpus split, or on wav pairs
//   bench        NFE / wall-clock / xRT table

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "turbowave/checkpoint.hpp"
#include "turbowave/config.hpp"
#include "turbowave/data.hpp"
#include "turbowave/errors.hpp"
#include "turbowave/eval.hpp"
#include "turbowave/flow.hpp"
#include "turbowave/train.hpp"

namespace fs = std::filesystem;
using namespace turbowave;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<uint64_t> seed;
};

struct Options {
  CommonOptions common;
  std::optional<int64_t> steps;
  std::string solver;
  std::string checkpoint;
  std::string teacher;
  std::string split = "dev";
  std::string reference;
  std::string generated;
  std::vector<std::string> inputs;
  int items = 64;
  double duration = 2.0;
  int repeats = 1;
};

fs::path cache_root() {
  if (const char* env = std::getenv("TURBOWAVE_CACHE"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) {
    return fs::path(home) / ".cache" / "turbowave";
  }
  return fs::path(".turbowave_cache");
}

fs::path default_corpus() { return cache_root() / "toy_corpus"; }

fs::path out_dir(const CommonOptions& c, const std::string& fallback) {
  fs::path p = c.out.empty() ? fs::path(fallback) : fs::path(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
  return p;
}

void apply_user_config(KeyValueConfig& kv, const CommonOptions& c) {
  if (!c.config.empty()) {
    const auto file = KeyValueConfig::load(c.config);
    for (const auto& [k, v] : file.values()) kv.set(k, v);
  }
  for (const auto& o : c.overrides) kv.apply_override(o);
  if (c.seed) kv.set("train.seed", std::to_string(*c.seed));
}

// The toy corpus is created in the cache on first use.
void ensure_corpus(KeyValueConfig& kv) {
  if (kv.contains("data.corpus") && !kv.get_string("data.corpus", "").empty()) return;
  const auto root = default_corpus();
  if (!fs::exists(root / "corpus.cfg")) {
    std::cerr << "creating toy corpus in " << root.string() << "\n";
    ToyCorpusOptions opts;
    opts.root = root;
    make_toy_corpus(opts);
  }
  kv.set("data.corpus", root.string());
}

KeyValueConfig archive_config(const Archive& a) {
  KeyValueConfig kv;
  if (!a.metadata.contains("config")) throw StructureError("checkpoint has no config record");
  for (const auto& [k, v] : a.metadata.at("config").items()) kv.set(k, v.get<std::string>());
  return kv;
}

void print_records(const RunOutputs& out) {
  if (out.records.empty()) return;
  const auto& last = out.records.back();
  std::cout << "step " << last.step;
  for (const auto& [k, v] : last.losses) std::cout << " " << k << "=" << v;
  std::cout << "\ncheckpoint " << out.checkpoint.string() << "\n";
}

RunOutputs train_verb(const Options& o, Stage stage) {
  const auto dir = out_dir(o.common, stage == Stage::kFlowMatching ? "runs/pretrain"
                                                                    : "runs/finetune");
  if (!o.checkpoint.empty()) {
    // Resume: the archived config wins, --steps may extend the run.
    auto archive = load_archive(o.checkpoint);
    if (o.steps) archive.metadata["config"]["train.steps"] = std::to_string(*o.steps);
    auto trainer = Trainer::from_archive(archive);
    if (trainer.config().stage != stage) {
      throw ConfigError("checkpoint stage is " + stage_name(trainer.config().stage));
    }
    Corpus data(trainer.config().dataset_spec(), "train");
    return run_training(trainer, data, dir);
  }
  KeyValueConfig kv;
  kv.set("train.stage", stage_name(stage));
  apply_user_config(kv, o.common);
  if (kv.get_string("train.stage", "") != stage_name(stage)) {
    throw ConfigError("train.stage conflicts with the verb");
  }
  if (o.steps) kv.set("train.steps", std::to_string(*o.steps));
  ensure_corpus(kv);
  const auto cfg = TrainConfig::from_config(kv);
  if (stage == Stage::kFlowMatching) return pretrain_fm(cfg, dir);
  std::optional<fs::path> teacher;
  if (!o.teacher.empty()) teacher = o.teacher;
  return finetune_turbo(cfg, teacher, dir);
}

TimeGrid grid_from(const Options& o, int default_steps, Solver default_solver) {
  const Solver s = o.solver.empty() ? default_solver : parse_solver(o.solver);
  const int steps = o.steps ? static_cast<int>(*o.steps) : default_steps;
  return TimeGrid::uniform(steps, s);
}

// Minimal reader for 2-D little-endian float32/float64 C-order .npy files.
torch::Tensor load_npy(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DecodeError("cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    throw DecodeError(path.string() + " is not a .npy file");
  }
  uint32_t header_len = 0;
  if (magic[6] == 1) {
    uint16_t n;
    f.read(reinterpret_cast<char*>(&n), 2);
    header_len = n;
  } else {
    f.read(reinterpret_cast<char*>(&header_len), 4);
  }
  std::string header(header_len, '\0');
  f.read(header.data(), header_len);
  if (!f) throw DecodeError(path.string() + " has a truncated header");
  torch::ScalarType dtype;
  if (header.find("'<f4'") != std::string::npos) {
    dtype = torch::kFloat32;
  } else if (header.find("'<f8'") != std::string::npos) {
    dtype = torch::kFloat64;
  } else {
    throw DecodeError(path.string() + ": only <f4 / <f8 arrays are supported");
  }
  if (header.find("'fortran_order': True") != std::string::npos) {
    throw DecodeError(path.string() + ": Fortran-ordered arrays are not supported");
  }
  const auto open = header.find('(', header.find("'shape'"));
  const auto close = header.find(')', open);
  std::vector<int64_t> shape;
  std::stringstream dims(header.substr(open + 1, close - open - 1));
  for (std::string tok; std::getline(dims, tok, ',');) {
    if (tok.find_first_not_of(' ') != std::string::npos) shape.push_back(std::stoll(tok));
  }
  if (shape.size() != 2) throw ShapeError(path.string() + ": expected a [n_mels, frames] array");
  auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
  f.read(static_cast<char*>(t.data_ptr()), t.numel() * t.element_size());
  if (!f) throw DecodeError(path.string() + " is truncated");
  return t.to(torch::kFloat32);
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto ext = e.path().extension();
        if (ext == ".wav" || ext == ".npy") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  if (out.empty()) throw InputError("no inputs given");
  return out;
}

void synthesize_verb(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("synthesize needs --checkpoint");
  const auto archive = load_archive(o.checkpoint);
  auto kv = archive_config(archive);
  apply_user_config(kv, o.common);
  const auto cfg = TrainConfig::from_config(kv);
  const auto grid = grid_from(o, 4, Solver::kEuler);
  auto est = generator_from_archive(archive);
  const auto dir = out_dir(o.common, "synth");
  const uint64_t seed = o.common.seed.value_or(cfg.seed);

  uint64_t index = 0;
  for (const auto& path : expand_inputs(o.inputs)) {
    torch::Tensor cond;
    if (path.extension() == ".npy") {
      cond = load_npy(path);
    } else {
      auto audio = crop_to_hop(load_audio(path, cfg.sample_rate), cfg.stft.hop_size);
      cond = conditioning_mel(audio, cfg.stft, cfg.mel).values;
    }
    auto y = generate(est, cond, grid, seed + index++, cfg.stft.hop_size);
    const auto target = dir / (path.stem().string() + ".wav");
    save_audio(target, AudioBuffer(y, cfg.sample_rate));
    std::cout << target.string() << "\n";
  }
  kv.set("synth.solver", solver_name(grid.solver));
  kv.set("synth.steps", std::to_string(grid.steps()));
  kv.set("synth.seed", std::to_string(seed));
  kv.set("synth.checkpoint", o.checkpoint);
  kv.save(dir / "resolved.cfg");
}

void write_report(const MetricReport& report, const fs::path& dir) {
  emit_report(report, dir / "report.json", ReportFormat::kJson);
  emit_report(report, dir / "report.csv", ReportFormat::kCsv);
  emit_report(report, dir / "report.md", ReportFormat::kMarkdown);
  std::ifstream md(dir / "report.md");
  std::cout << md.rdbuf();
}

void evaluate_verb(const Options& o) {
  const auto dir = out_dir(o.common, "eval");
  PitchConfig pitch;
  if (!o.reference.empty() || !o.generated.empty()) {
    if (o.reference.empty() || o.generated.empty()) {
      throw ConfigError("pair mode needs both --reference and --generated");
    }
    KeyValueConfig kv;
    apply_user_config(kv, o.common);
    const int hop = kv.get_int("stft.hop_size", 256);
    MetricReport report;
    report.model_id = o.generated;
    int sample_rate = 0;
    for (const auto& hyp_path : expand_inputs({o.generated})) {
      const auto ref_path = fs::path(o.reference) / hyp_path.filename();
      if (!fs::exists(ref_path)) throw InputError("no reference for " + hyp_path.string());
      const auto ref = load_audio(ref_path);
      const auto hyp = load_audio(hyp_path);
      sample_rate = ref.sample_rate;
      report.items.push_back(compare_audio(hyp_path.stem().string(), ref, hyp, hop, pitch));
    }
    report.config_hash = metric_config_hash(TimeGrid{}, pitch, sample_rate, hop);
    kv.set("eval.reference", o.reference);
    kv.set("eval.generated", o.generated);
    kv.save(dir / "resolved.cfg");
    write_report(report, dir);
    return;
  }
  if (o.checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint or a wav pair");
  const auto archive = load_archive(o.checkpoint);
  auto kv = archive_config(archive);
  apply_user_config(kv, o.common);
  ensure_corpus(kv);
  const auto cfg = TrainConfig::from_config(kv);
  const auto grid = grid_from(o, 4, Solver::kEuler);
  const uint64_t seed = o.common.seed.value_or(cfg.seed);
  Corpus data(cfg.dataset_spec(), o.split);
  auto report = evaluate_copy_synthesis(generator_from_archive(archive), data, grid, cfg.stft,
                                        cfg.mel, seed, pitch);
  report.model_id = o.checkpoint;
  kv.set("eval.split", o.split);
  kv.set("eval.solver", solver_name(grid.solver));
  kv.set("eval.steps", std::to_string(grid.steps()));
  kv.set("eval.seed", std::to_string(seed));
  kv.save(dir / "resolved.cfg");
  write_report(report, dir);
}

void bench_verb(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("bench needs --checkpoint");
  const auto archive = load_archive(o.checkpoint);
  auto kv = archive_config(archive);
  apply_user_config(kv, o.common);
  ensure_corpus(kv);
  const auto cfg = TrainConfig::from_config(kv);
  Corpus data(cfg.dataset_spec(), o.split);
  std::vector<torch::Tensor> conds;
  for (size_t i = 0; i < data.size(); ++i) {
    const auto audio = crop_to_hop(data.item(i), cfg.stft.hop_size);
    conds.push_back(conditioning_mel(audio, cfg.stft, cfg.mel).values);
  }
  std::vector<TimeGrid> grids;
  if (o.steps || !o.solver.empty()) {
    grids.push_back(grid_from(o, 4, Solver::kEuler));
  } else {
    grids = {TimeGrid::uniform(4, Solver::kEuler), TimeGrid::uniform(16, Solver::kMidpoint)};
  }
  auto est = generator_from_archive(archive);
  const auto dir = out_dir(o.common, "bench");
  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream table;
  table << "| Solver | Steps | NFE | Wall (s) | Audio (s) | xRT |\n|---|---|---|---|---|---|\n";
  for (const auto& g : grids) {
    const auto b = benchmark_generation(est, g, conds, cfg.sample_rate, cfg.stft.hop_size,
                                        o.repeats);
    table << "| " << solver_name(g.solver) << " | " << g.steps() << " | " << b.nfe << " | "
          << b.wall_clock_s << " | " << b.audio_s << " | " << b.xrt << " |\n";
    rows.push_back({{"solver", solver_name(g.solver)},
                    {"steps", g.steps()},
                    {"nfe", b.nfe},
                    {"wall_clock_s", b.wall_clock_s},
                    {"audio_s", b.audio_s},
                    {"xrt", b.xrt}});
  }
  std::ofstream(dir / "bench.md") << table.str();
  std::ofstream(dir / "bench.json") << rows.dump(2) << "\n";
  kv.set("bench.split", o.split);
  kv.set("bench.repeats", std::to_string(o.repeats));
  kv.save(dir / "resolved.cfg");
  std::cout << table.str();
}

void make_corpus_verb(const Options& o) {
  ToyCorpusOptions opts;
  opts.root = o.common.out.empty() ? default_corpus() : fs::path(o.common.out);
  opts.n_items = o.items;
  opts.duration_s = o.duration;
  if (o.common.seed) opts.seed = *o.common.seed;
  make_toy_corpus(opts);
  KeyValueConfig kv;
  kv.set("corpus.items", std::to_string(opts.n_items));
  kv.set("corpus.duration_s", format_double(opts.duration_s));
  kv.set("corpus.sample_rate", std::to_string(opts.sample_rate));
  kv.set("corpus.seed", std::to_string(opts.seed));
  kv.save(opts.root / "resolved.cfg");
  std::cout << opts.root.string() << "\n";
}

void add_common(CLI::App* cmd, CommonOptions& c) {
  cmd->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--override", c.overrides, "dotted key=value, repeatable");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-matching waveform generator with fixed-step adversarial fine-tuning"};
  app.require_subcommand(1);
  Options o;

  auto* make = app.add_subcommand("make-corpus", "write the synthetic harmonic corpus");
  add_common(make, o.common);
  make->add_option("--items", o.items, "number of clips");
  make->add_option("--duration", o.duration, "clip length in seconds");

  auto* pre = app.add_subcommand("pretrain", "flow-matching pretraining");
  add_common(pre, o.common);
  pre->add_option("--steps", o.steps, "total optimization steps");
  pre->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");

  auto* fine = app.add_subcommand("finetune", "fixed-step adversarial fine-tuning");
  add_common(fine, o.common);
  fine->add_option("--steps", o.steps, "total optimization steps");
  fine->add_option("--teacher", o.teacher, "pretrained checkpoint");
  fine->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");

  auto* synth = app.add_subcommand("synthesize", "generate audio from wav or .npy mel inputs");
  add_common(synth, o.common);
  synth->add_option("--checkpoint", o.checkpoint, "generator checkpoint")->required();
  synth->add_option("--steps", o.steps, "ODE steps");
  synth->add_option("--solver", o.solver, "euler | midpoint")
      ->check(CLI::IsMember({"euler", "midpoint"}));
  synth->add_option("inputs", o.inputs, "wav / npy files or directories")->required();

  auto* eval = app.add_subcommand("evaluate", "objective metrics");
  add_common(eval, o.common);
  eval->add_option("--checkpoint", o.checkpoint, "generator checkpoint");
  eval->add_option("--steps", o.steps, "ODE steps");
  eval->add_option("--solver", o.solver, "euler | midpoint")
      ->check(CLI::IsMember({"euler", "midpoint"}));
  eval->add_option("--split", o.split, "train | dev | test");
  eval->add_option("--reference", o.reference, "directory of reference wavs");
  eval->add_option("--generated", o.generated, "directory of generated wavs (same names)");

  auto* bench = app.add_subcommand("bench", "speed table");
  add_common(bench, o.common);
  bench->add_option("--checkpoint", o.checkpoint, "generator checkpoint")->required();
  bench->add_option("--steps", o.steps, "ODE steps");
  bench->add_option("--solver", o.solver, "euler | midpoint")
      ->check(CLI::IsMember({"euler", "midpoint"}));
  bench->add_option("--split", o.split, "train | dev | test");
  bench->add_option("--repeats", o.repeats, "timed passes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: UsageError: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    torch::set_num_threads(1);
    if (*make) {
      make_corpus_verb(o);
    } else if (*pre) {
      print_records(train_verb(o, Stage::kFlowMatching));
    } else if (*fine) {
      print_records(train_verb(o, Stage::kTurbo));
    } else if (*synth) {
      synthesize_verb(o);
    } else if (*eval) {
      evaluate_verb(o);
    } else if (*bench) {
      bench_verb(o);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: RuntimeError: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
