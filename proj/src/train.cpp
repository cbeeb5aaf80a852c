// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "turbowave/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "turbowave/errors.hpp"

namespace turbowave {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kRunningDecay = 0.98;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "train.stage", "train.steps", "train.lr", "train.beta1", "train.beta2",
      "train.weight_decay", "train.adam_eps", "train.batch_size", "train.seed",
      "train.grad_clip", "train.log_every", "train.checkpoint_every", "train.init",
      "train.allow_scratch_turbo", "flow.n_steps", "flow.sigma_min", "loss.use_gan",
      "loss.mel_variant", "loss.lambda_fm", "loss.lambda_mel", "model.scale",
      "model.periods", "disc.periods", "disc.mpd_channels", "disc.cqt_channels",
      "disc.cqt_f_min", "disc.cqt_octaves", "disc.cqt_bins_per_octave",
      "disc.cqt_hops", "data.corpus", "data.sample_rate", "data.segment_length",
      "stft.n_fft", "stft.hop_size", "stft.win_size", "stft.window", "mel.n_mels",
      "mel.f_min", "mel.f_max", "mel.log_floor"};
  return keys;
}

Stage parse_stage(const std::string& s) {
  if (s == "fm") return Stage::kFlowMatching;
  if (s == "turbo") return Stage::kTurbo;
  throw ConfigError("train.stage must be fm|turbo, got '" + s + "'");
}

MelVariant parse_mel_variant(const std::string& s) {
  if (s == "multi") return MelVariant::kMulti;
  if (s == "single") return MelVariant::kSingle;
  if (s == "mstft") return MelVariant::kMstft;
  throw ConfigError("loss.mel_variant must be multi|single|mstft, got '" + s + "'");
}

InitMode parse_init(const std::string& s) {
  if (s == "scratch") return InitMode::kScratch;
  if (s == "from_checkpoint") return InitMode::kFromCheckpoint;
  throw ConfigError("train.init must be scratch|from_checkpoint, got '" + s + "'");
}

double scalar(const torch::Tensor& t) { return t.detach().item<double>(); }

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

void append_optimizer_state(Archive& archive, const std::string& prefix,
                            const torch::nn::Module& module,
                            const torch::optim::AdamW& opt) {
  const auto& state = opt.state();
  for (const auto& item : module.named_parameters()) {
    auto it = state.find(item.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamWParamState&>(*it->second);
    const std::string base = prefix + "/" + item.key();
    archive.tensors.emplace_back(base + "/step", torch::scalar_tensor(s.step(), torch::kInt64));
    archive.tensors.emplace_back(base + "/exp_avg", s.exp_avg());
    archive.tensors.emplace_back(base + "/exp_avg_sq", s.exp_avg_sq());
  }
}

void restore_optimizer_state(const Archive& archive, const std::string& prefix,
                             torch::nn::Module& module, torch::optim::AdamW& opt) {
  for (auto& item : module.named_parameters()) {
    const std::string base = prefix + "/" + item.key();
    const auto* step = archive.find(base + "/step");
    if (step == nullptr) continue;
    const auto* m = archive.find(base + "/exp_avg");
    const auto* v = archive.find(base + "/exp_avg_sq");
    if (m == nullptr || v == nullptr || m->sizes() != item.value().sizes() ||
        v->sizes() != item.value().sizes()) {
      throw StructureError("optimizer state for '" + base + "' is incomplete");
    }
    auto s = std::make_unique<torch::optim::AdamWParamState>();
    s->step(step->item<int64_t>());
    s->exp_avg(m->clone());
    s->exp_avg_sq(v->clone());
    opt.state()[item.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

void load_module(torch::nn::Module& module, const Archive& archive,
                 const std::string& prefix) {
  torch::NoGradGuard guard;
  for (auto& item : module.named_parameters()) {
    const auto* t = archive.find(prefix + "/" + item.key());
    if (t == nullptr) {
      throw StructureError("checkpoint lacks parameter '" + prefix + "/" + item.key() + "'");
    }
    if (t->sizes() != item.value().sizes()) {
      throw StructureError("parameter '" + prefix + "/" + item.key() +
                           "' has an incompatible shape");
    }
    item.value().copy_(*t);
  }
}

void append_module(Archive& archive, const std::string& prefix,
                   const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters()) {
    archive.tensors.emplace_back(prefix + "/" + item.key(), item.value());
  }
}

bool all_finite(const std::map<std::string, double>& losses) {
  for (const auto& [k, v] : losses) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

json record_to_json(const StepRecord& r) {
  json j;
  j["step"] = r.step;
  for (const auto& [k, v] : r.losses) j["loss." + k] = v;
  j["wall_clock_s"] = r.wall_clock_s;
  return j;
}

}  // namespace

std::string stage_name(Stage s) { return s == Stage::kFlowMatching ? "fm" : "turbo"; }

std::string mel_variant_name(MelVariant v) {
  switch (v) {
    case MelVariant::kMulti: return "multi";
    case MelVariant::kSingle: return "single";
    case MelVariant::kMstft: return "mstft";
  }
  return "multi";
}

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (n_steps != 2 && n_steps != 4) throw ConfigError("flow.n_steps must be 2 or 4");
  if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be >= 0");
  if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
  weights.validate();
  ProbabilityPath{sigma_min}.validate();
  estimator.validate();
  if (stage == Stage::kTurbo) discriminator.validate();
  dataset_spec().validate();
  if (estimator.n_mels != mel.n_mels || estimator.conditioning_hop != stft.hop_size) {
    throw ConfigError("estimator conditioning disagrees with the mel/STFT config");
  }
  if (stage == Stage::kTurbo && init == InitMode::kScratch && !allow_scratch_turbo) {
    throw ConfigError(
        "turbo stage needs train.init=from_checkpoint or train.allow_scratch_turbo=true");
  }
  if (stage == Stage::kTurbo &&
      segment_length < MultiScaleMelSpec::defaults(sample_rate).max_window()) {
    throw ConfigError("data.segment_length is shorter than the largest loss window");
  }
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) {
  for (const auto& [k, v] : kv.values()) {
    if (!known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  TrainConfig c;
  c.stage = parse_stage(kv.get_string("train.stage", "fm"));
  const bool turbo = c.stage == Stage::kTurbo;
  c.steps = kv.get_int64("train.steps", turbo ? 1000 : 1000000);
  c.lr = kv.get_double("train.lr", turbo ? 2e-5 : 2e-4);
  c.beta1 = kv.get_double("train.beta1", c.beta1);
  c.beta2 = kv.get_double("train.beta2", c.beta2);
  c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
  c.adam_eps = kv.get_double("train.adam_eps", c.adam_eps);
  c.batch_size = kv.get_int("train.batch_size", turbo ? 32 : 128);
  c.seed = static_cast<uint64_t>(kv.get_int64("train.seed", 0));
  c.grad_clip = kv.get_double("train.grad_clip", turbo ? 1.0 : 0.0);
  c.log_every = kv.get_int64("train.log_every", 1);
  c.checkpoint_every = kv.get_int64("train.checkpoint_every", 0);
  c.init = parse_init(kv.get_string("train.init", turbo ? "from_checkpoint" : "scratch"));
  c.allow_scratch_turbo = kv.get_bool("train.allow_scratch_turbo", false);
  c.n_steps = kv.get_int("flow.n_steps", 4);
  c.sigma_min = kv.get_double("flow.sigma_min", 1e-4);
  c.use_gan = kv.get_bool("loss.use_gan", true);
  c.mel_variant = parse_mel_variant(kv.get_string("loss.mel_variant", "multi"));
  c.weights.lambda_fm = kv.get_double("loss.lambda_fm", 2.0);
  c.weights.lambda_mel = kv.get_double("loss.lambda_mel", 45.0);

  c.corpus = kv.get_string("data.corpus", "");
  c.sample_rate = kv.get_int("data.sample_rate", 22050);
  c.segment_length = kv.get_int64("data.segment_length", 32768);
  c.stft.n_fft = kv.get_int("stft.n_fft", 1024);
  c.stft.hop_size = kv.get_int("stft.hop_size", 256);
  c.stft.win_size = kv.get_int("stft.win_size", 1024);
  c.stft.window = parse_window(kv.get_string("stft.window", "hann"));
  c.mel.n_mels = kv.get_int("mel.n_mels", 80);
  c.mel.f_min = kv.get_double("mel.f_min", 0.0);
  c.mel.f_max = kv.get_double("mel.f_max", c.sample_rate / 2.0);
  c.mel.log_floor = kv.get_double("mel.log_floor", 1e-5);

  c.estimator.scale = ModelScale::preset(kv.get_string("model.scale", "tiny"));
  c.estimator.periods = kv.get_int_list("model.periods", {2, 3, 5, 7, 11});
  c.estimator.n_mels = c.mel.n_mels;
  c.estimator.conditioning_hop = c.stft.hop_size;

  c.discriminator.periods = kv.get_int_list("disc.periods", {2, 3, 5, 7, 11});
  c.discriminator.mpd_channels = kv.get_int_list("disc.mpd_channels", {8, 16, 32, 32});
  c.discriminator.cqt_channels = kv.get_int("disc.cqt_channels", 8);
  c.discriminator.cqt.f_min = kv.get_double("disc.cqt_f_min", c.sample_rate / 256.0);
  c.discriminator.cqt.octaves = kv.get_int("disc.cqt_octaves", 7);
  c.discriminator.cqt.bins_per_octave = kv.get_int("disc.cqt_bins_per_octave", 12);
  c.discriminator.cqt.scales = kv.get_int_list("disc.cqt_hops", {256, 512, 1024});
  c.discriminator.cqt.hop_size = c.discriminator.cqt.scales.empty()
                                     ? 256
                                     : c.discriminator.cqt.scales.front();
  c.discriminator.sample_rate = c.sample_rate;
  return c;
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("train.stage", stage_name(stage));
  kv.set("train.steps", std::to_string(steps));
  kv.set("train.lr", format_double(lr));
  kv.set("train.beta1", format_double(beta1));
  kv.set("train.beta2", format_double(beta2));
  kv.set("train.weight_decay", format_double(weight_decay));
  kv.set("train.adam_eps", format_double(adam_eps));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.grad_clip", format_double(grad_clip));
  kv.set("train.log_every", std::to_string(log_every));
  kv.set("train.checkpoint_every", std::to_string(checkpoint_every));
  kv.set("train.init", init == InitMode::kScratch ? "scratch" : "from_checkpoint");
  kv.set("train.allow_scratch_turbo", allow_scratch_turbo ? "true" : "false");
  kv.set("flow.n_steps", std::to_string(n_steps));
  kv.set("flow.sigma_min", format_double(sigma_min));
  kv.set("loss.use_gan", use_gan ? "true" : "false");
  kv.set("loss.mel_variant", mel_variant_name(mel_variant));
  kv.set("loss.lambda_fm", format_double(weights.lambda_fm));
  kv.set("loss.lambda_mel", format_double(weights.lambda_mel));
  kv.set("model.scale", estimator.scale.name);
  kv.set("model.periods", format_int_list(estimator.periods));
  kv.set("disc.periods", format_int_list(discriminator.periods));
  kv.set("disc.mpd_channels", format_int_list(discriminator.mpd_channels));
  kv.set("disc.cqt_channels", std::to_string(discriminator.cqt_channels));
  kv.set("disc.cqt_f_min", format_double(discriminator.cqt.f_min));
  kv.set("disc.cqt_octaves", std::to_string(discriminator.cqt.octaves));
  kv.set("disc.cqt_bins_per_octave", std::to_string(discriminator.cqt.bins_per_octave));
  kv.set("disc.cqt_hops", format_int_list(discriminator.cqt.scales));
  kv.set("data.corpus", corpus);
  kv.set("data.sample_rate", std::to_string(sample_rate));
  kv.set("data.segment_length", std::to_string(segment_length));
  kv.set("stft.n_fft", std::to_string(stft.n_fft));
  kv.set("stft.hop_size", std::to_string(stft.hop_size));
  kv.set("stft.win_size", std::to_string(stft.win_size));
  kv.set("stft.window", window_name(stft.window));
  kv.set("mel.n_mels", std::to_string(mel.n_mels));
  kv.set("mel.f_min", format_double(mel.f_min));
  kv.set("mel.f_max", format_double(mel.f_max));
  kv.set("mel.log_floor", format_double(mel.log_floor));
  return kv;
}

DatasetSpec TrainConfig::dataset_spec() const {
  DatasetSpec spec;
  if (!corpus.empty()) spec = DatasetSpec::load(corpus);
  if (!corpus.empty() && spec.sample_rate != sample_rate) {
    throw ConfigError("corpus sample rate " + std::to_string(spec.sample_rate) +
                      " != data.sample_rate " + std::to_string(sample_rate));
  }
  spec.sample_rate = sample_rate;
  spec.stft = stft;
  spec.mel = mel;
  spec.segment_length = segment_length;
  return spec;
}

Trainer::Trainer(TrainConfig cfg, const std::optional<Archive>& teacher)
    : cfg_(std::move(cfg)),
      rng_(at::make_generator<at::CPUGeneratorImpl>(cfg_.seed + 1)),
      multiscale_(MultiScaleMelSpec::defaults(cfg_.sample_rate)) {
  cfg_.validate();
  // Parameter initialization draws from the global generator.
  torch::manual_seed(cfg_.seed);
  generator_ = VectorFieldEstimator(cfg_.estimator);
  if (cfg_.stage == Stage::kTurbo) {
    if (cfg_.use_gan) discriminator_ = DiscriminatorEnsemble(cfg_.discriminator);
    if (cfg_.init == InitMode::kFromCheckpoint) {
      if (!teacher) throw ConfigError("turbo stage with init=from_checkpoint needs a teacher");
      load_generator(generator_, *teacher);
    }
  }
  build_optimizers();
}

void Trainer::build_optimizers() {
  auto opts = torch::optim::AdamWOptions(cfg_.lr)
                  .betas({cfg_.beta1, cfg_.beta2})
                  .weight_decay(cfg_.weight_decay)
                  .eps(cfg_.adam_eps);
  gen_opt_ = std::make_unique<torch::optim::AdamW>(generator_->parameters(), opts);
  if (discriminator_) {
    disc_opt_ = std::make_unique<torch::optim::AdamW>(discriminator_->parameters(), opts);
  }
}

void Trainer::update_running(const std::map<std::string, double>& losses) {
  for (const auto& [k, v] : losses) {
    auto it = running_.find(k);
    running_[k] = it == running_.end() ? v : kRunningDecay * it->second + (1.0 - kRunningDecay) * v;
  }
}

StepRecord Trainer::step(const Corpus& data) {
  StepRecord r = cfg_.stage == Stage::kFlowMatching ? fm_step(data) : turbo_step(data);
  ++step_;
  r.step = step_;
  update_running(r.losses);
  return r;
}

Batch Trainer::draw(const Corpus& data) {
  const auto& spec = data.spec();
  if (spec.segment_length != cfg_.segment_length || spec.sample_rate != cfg_.sample_rate ||
      spec.stft.hop_size != cfg_.stft.hop_size || spec.mel.n_mels != cfg_.mel.n_mels) {
    throw ConfigError("corpus segments (" + std::to_string(spec.segment_length) + " samples at " +
                      std::to_string(spec.sample_rate) + " Hz) do not match the run config (" +
                      std::to_string(cfg_.segment_length) + " at " +
                      std::to_string(cfg_.sample_rate) + ")");
  }
  return data.draw(cfg_.batch_size, rng_);
}

StepRecord Trainer::fm_step(const Corpus& data) {
  generator_->train();
  auto batch = draw(data);
  auto loss = cfm_loss(as_field(generator_), ProbabilityPath{cfg_.sigma_min}, batch.audio,
                       batch.condition, rng_);
  StepRecord r;
  r.losses["cfm"] = scalar(loss);
  if (!all_finite(r.losses)) {
    throw TrainingHalt("non-finite CFM loss at step " + std::to_string(step_ + 1));
  }
  gen_opt_->zero_grad();
  loss.backward();
  if (cfg_.grad_clip > 0.0) {
    torch::nn::utils::clip_grad_norm_(generator_->parameters(), cfg_.grad_clip);
  }
  gen_opt_->step();
  return r;
}

torch::Tensor Trainer::reconstruction_loss(const torch::Tensor& x,
                                           const torch::Tensor& x_hat) const {
  switch (cfg_.mel_variant) {
    case MelVariant::kMulti:
      return multiscale_mel_loss(x, x_hat, cfg_.sample_rate, multiscale_);
    case MelVariant::kSingle:
      return mel_loss(x, x_hat, cfg_.sample_rate, cfg_.stft, cfg_.mel);
    case MelVariant::kMstft:
      return multi_resolution_stft_loss(x, x_hat, multiscale_stft_resolutions());
  }
  throw ConfigError("unknown mel variant");
}

StepRecord Trainer::turbo_step(const Corpus& data) {
  generator_->train();
  auto batch = draw(data);
  auto x0 = torch::randn(batch.audio.sizes(), rng_, batch.audio.options());
  auto x_hat = fixed_step_generate(as_field(generator_), x0, batch.condition, cfg_.n_steps);

  StepRecord r;
  if (cfg_.use_gan) {
    auto d_loss = adv_d_loss(discriminator_, batch.audio, x_hat);
    r.losses["d"] = scalar(d_loss);
    if (!std::isfinite(r.losses["d"])) {
      throw TrainingHalt("non-finite discriminator loss at step " + std::to_string(step_ + 1));
    }
    disc_opt_->zero_grad();
    d_loss.backward();
    if (cfg_.grad_clip > 0.0) {
      torch::nn::utils::clip_grad_norm_(discriminator_->parameters(), cfg_.grad_clip);
    }
    disc_opt_->step();
  }

  auto mel = reconstruction_loss(batch.audio, x_hat);
  auto zero = torch::zeros({}, x_hat.options());
  torch::Tensor adv = zero, fm = zero;
  if (cfg_.use_gan) {
    set_requires_grad(*discriminator_, false);
    std::vector<DiscriminatorOutput> real;
    {
      torch::NoGradGuard guard;
      real = discriminator_->forward(batch.audio);
    }
    auto fake = discriminator_->forward(x_hat);
    adv = adv_g_loss(fake);
    fm = feature_matching_loss(real, fake);
    set_requires_grad(*discriminator_, true);
  }
  auto total = final_generator_loss(adv, fm, mel, cfg_.weights);
  r.losses["adv_g"] = scalar(adv);
  r.losses["fm"] = scalar(fm);
  r.losses["mel"] = scalar(mel);
  r.losses["g_total"] = scalar(total);

  gen_opt_->zero_grad();
  total.backward();
  if (cfg_.grad_clip > 0.0) {
    torch::nn::utils::clip_grad_norm_(generator_->parameters(), cfg_.grad_clip);
  }
  gen_opt_->step();
  return r;
}

Archive Trainer::to_archive() const {
  Archive a;
  json running = json::object();
  for (const auto& [k, v] : running_) running[k] = v;
  json config = json::object();
  const auto kv = cfg_.to_config();
  for (const auto& [k, v] : kv.values()) config[k] = v;
  a.metadata = {{"format", "turbowave-checkpoint"},
                {"stage", stage_name(cfg_.stage)},
                {"step", step_},
                {"scale", {{"name", cfg_.estimator.scale.name},
                           {"hidden_dim", cfg_.estimator.scale.hidden_dim},
                           {"final_dim", cfg_.estimator.scale.final_dim}}},
                {"periods", cfg_.estimator.periods},
                {"n_mels", cfg_.estimator.n_mels},
                {"conditioning_hop", cfg_.estimator.conditioning_hop},
                {"sample_rate", cfg_.sample_rate},
                {"has_discriminator", static_cast<bool>(discriminator_)},
                {"running", running},
                {"config", config}};
  append_module(a, "generator", *generator_);
  append_optimizer_state(a, "generator_opt", *generator_, *gen_opt_);
  if (discriminator_) {
    append_module(a, "discriminator", *discriminator_);
    append_optimizer_state(a, "discriminator_opt", *discriminator_, *disc_opt_);
  }
  a.tensors.emplace_back("rng/state", rng_.get_state());
  return a;
}

Trainer Trainer::from_archive(const Archive& archive) {
  if (!archive.metadata.contains("config")) {
    throw StructureError("checkpoint has no training config record");
  }
  KeyValueConfig kv;
  for (const auto& [k, v] : archive.metadata.at("config").items()) {
    kv.set(k, v.get<std::string>());
  }
  auto cfg = TrainConfig::from_config(kv);
  // Restoring overwrites every parameter, so the teacher is not needed.
  auto fresh = cfg;
  fresh.init = InitMode::kScratch;
  fresh.allow_scratch_turbo = true;
  Trainer t(fresh);
  t.cfg_ = cfg;
  load_module(*t.generator_, archive, "generator");
  restore_optimizer_state(archive, "generator_opt", *t.generator_, *t.gen_opt_);
  if (t.discriminator_) {
    load_module(*t.discriminator_, archive, "discriminator");
    restore_optimizer_state(archive, "discriminator_opt", *t.discriminator_, *t.disc_opt_);
  }
  const auto* state = archive.find("rng/state");
  if (state == nullptr) throw StructureError("checkpoint lacks rng state");
  t.rng_.set_state(*state);
  t.step_ = archive.metadata.at("step").get<int64_t>();
  t.running_.clear();
  for (const auto& [k, v] : archive.metadata.at("running").items()) {
    t.running_[k] = v.get<double>();
  }
  return t;
}

void load_generator(VectorFieldEstimator& est, const Archive& archive) {
  load_module(*est, archive, "generator");
}

VectorFieldEstimator generator_from_archive(const Archive& archive) {
  const auto& m = archive.metadata;
  if (!m.contains("scale") || !m.contains("periods")) {
    throw StructureError("checkpoint metadata lacks the model description");
  }
  EstimatorConfig cfg;
  cfg.scale.name = m.at("scale").at("name").get<std::string>();
  cfg.scale.hidden_dim = m.at("scale").at("hidden_dim").get<int>();
  cfg.scale.final_dim = m.at("scale").at("final_dim").get<int>();
  cfg.periods = m.at("periods").get<std::vector<int>>();
  cfg.n_mels = m.at("n_mels").get<int>();
  cfg.conditioning_hop = m.at("conditioning_hop").get<int>();
  VectorFieldEstimator est(cfg);
  load_generator(est, archive);
  est->eval();
  return est;
}

RunOutputs run_training(Trainer& trainer, const Corpus& data, const fs::path& out_dir,
                        const StepCallback& on_step) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  trainer.config().to_config().save(out_dir / "resolved.cfg");

  RunOutputs out;
  out.log = out_dir / "train_log.jsonl";
  std::ofstream log(out.log, std::ios::app);
  if (!log) throw IoError("cannot append to " + out.log.string());

  const auto& cfg = trainer.config();
  const auto start = std::chrono::steady_clock::now();
  while (trainer.step_count() < cfg.steps) {
    StepRecord r;
    try {
      r = trainer.step(data);
    } catch (const TrainingHalt&) {
      save_archive(out_dir / "halt.twck", trainer.to_archive());
      throw;
    }
    r.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (r.step % cfg.log_every == 0 || r.step == cfg.steps) {
      log << record_to_json(r).dump() << "\n";
      log.flush();
    }
    out.records.push_back(r);
    if (on_step) on_step(r, trainer);
    if (cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0) {
      save_archive(out_dir / ("step_" + std::to_string(r.step) + ".twck"),
                   trainer.to_archive());
    }
  }
  out.checkpoint = out_dir / "final.twck";
  save_archive(out.checkpoint, trainer.to_archive());
  return out;
}

RunOutputs pretrain_fm(const TrainConfig& cfg, const fs::path& out_dir) {
  if (cfg.stage != Stage::kFlowMatching) throw ConfigError("pretrain_fm needs train.stage=fm");
  Trainer trainer(cfg);
  Corpus data(cfg.dataset_spec(), "train");
  return run_training(trainer, data, out_dir);
}

RunOutputs finetune_turbo(const TrainConfig& cfg, const std::optional<fs::path>& teacher,
                          const fs::path& out_dir) {
  if (cfg.stage != Stage::kTurbo) throw ConfigError("finetune_turbo needs train.stage=turbo");
  std::optional<Archive> teacher_archive;
  if (cfg.init == InitMode::kFromCheckpoint) {
    if (!teacher) throw ConfigError("finetune needs a teacher checkpoint (--teacher)");
    teacher_archive = load_archive(*teacher);
  }
  Trainer trainer(cfg, teacher_archive);
  Corpus data(cfg.dataset_spec(), "train");
  return run_training(trainer, data, out_dir);
}

}  // namespace turbowave
