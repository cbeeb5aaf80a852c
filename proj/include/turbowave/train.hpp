// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "turbowave/checkpoint.hpp"
#include "turbowave/config.hpp"
#include "turbowave/data.hpp"
#include "turbowave/flow.hpp"
#include "turbowave/losses.hpp"
#include "turbowave/model.hpp"

namespace turbowave {

enum class Stage { kFlowMatching, kTurbo };
enum class MelVariant { kMulti, kSingle, kMstft };
enum class InitMode { kScratch, kFromCheckpoint };

std::string stage_name(Stage s);
std::string mel_variant_name(MelVariant v);

// Every hyperparameter of a run. to_config() writes all of them, so the
// resolved record reproduces the run without hidden defaults.
struct TrainConfig {
  Stage stage = Stage::kFlowMatching;
  int64_t steps = 1000;
  double lr = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  int batch_size = 128;
  int n_steps = 4;
  double sigma_min = 1e-4;
  bool use_gan = true;
  MelVariant mel_variant = MelVariant::kMulti;
  LossWeights weights;
  InitMode init = InitMode::kScratch;
  bool allow_scratch_turbo = false;
  uint64_t seed = 0;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  int64_t log_every = 1;
  int64_t checkpoint_every = 0;

  EstimatorConfig estimator;
  DiscriminatorConfig discriminator;

  std::string corpus;  // corpus root
  int sample_rate = 22050;
  int64_t segment_length = 32768;
  StftConfig stft;
  MelConfig mel;

  void validate() const;

  // Stage-dependent defaults (lr 2e-4 / 2e-5, batch 128 / 32, clip 0 / 1,
  // init scratch / from_checkpoint) are filled before other keys apply.
  // Unknown keys are rejected.
  static TrainConfig from_config(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;

  DatasetSpec dataset_spec() const;
};

struct StepRecord {
  int64_t step = 0;
  std::map<std::string, double> losses;
  double wall_clock_s = 0.0;
};

// Mutable training state. Exactly resumable: a state restored from an
// archive continues the same trajectory as the uninterrupted run.
class Trainer {
 public:
  // Fresh state. For the turbo stage with init = from_checkpoint the
  // generator is copied from `teacher` (discriminator stays fresh).
  Trainer(TrainConfig cfg, const std::optional<Archive>& teacher = std::nullopt);

  // Restores a state written by to_archive().
  static Trainer from_archive(const Archive& archive);

  // One optimization step on a batch from `data`. Throws TrainingHalt on a
  // non-finite loss.
  StepRecord step(const Corpus& data);

  Archive to_archive() const;

  int64_t step_count() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  VectorFieldEstimator generator() const { return generator_; }
  DiscriminatorEnsemble discriminator() const { return discriminator_; }
  const std::map<std::string, double>& running_losses() const { return running_; }

 private:
  void build_optimizers();
  // ConfigError when the corpus segments disagree with the run config.
  Batch draw(const Corpus& data);
  StepRecord fm_step(const Corpus& data);
  StepRecord turbo_step(const Corpus& data);
  torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat) const;
  void update_running(const std::map<std::string, double>& losses);

  TrainConfig cfg_;
  VectorFieldEstimator generator_{nullptr};
  DiscriminatorEnsemble discriminator_{nullptr};
  std::unique_ptr<torch::optim::AdamW> gen_opt_;
  std::unique_ptr<torch::optim::AdamW> disc_opt_;
  torch::Generator rng_;
  MultiScaleMelSpec multiscale_;
  int64_t step_ = 0;
  std::map<std::string, double> running_;
};

// Copies named generator parameters from a checkpoint; StructureError when
// names or shapes disagree.
void load_generator(VectorFieldEstimator& est, const Archive& archive);

// Generator-only view of a checkpoint (any stage).
VectorFieldEstimator generator_from_archive(const Archive& archive);

using StepCallback = std::function<void(const StepRecord&, const Trainer&)>;

struct RunOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::vector<StepRecord> records;
};

// Runs cfg.steps steps from a fresh or resumed trainer, writing
// resolved.cfg, train_log.jsonl (append-only) and checkpoints to out_dir.
// A non-finite loss writes halt.twck before rethrowing.
RunOutputs run_training(Trainer& trainer, const Corpus& data,
                        const std::filesystem::path& out_dir,
                        const StepCallback& on_step = nullptr);

// Stage 1: flow-matching pretraining.
RunOutputs pretrain_fm(const TrainConfig& cfg, const std::filesystem::path& out_dir);

// Stage 2: fixed-step adversarial fine-tuning from a Stage-1 checkpoint.
RunOutputs finetune_turbo(const TrainConfig& cfg,
                          const std::optional<std::filesystem::path>& teacher,
                          const std::filesystem::path& out_dir);

}  // namespace turbowave
