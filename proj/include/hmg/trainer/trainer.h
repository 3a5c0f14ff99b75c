// Copyright 2026 The HMG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HMG_TRAINER_TRAINER_H_
#define HMG_TRAINER_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmg/dataset/dataset.h"
#include "hmg/gpt/model.h"

namespace hmg::trainer {

enum class TrainPhase { kPretrain, kFinetune, kScratch };
std::string_view TrainPhaseName(TrainPhase phase);
TrainPhase TrainPhaseFromName(std::string_view name);

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;     // matrices only
  double warmup_fraction = 0.05;
  double min_lr_ratio = 0.1;     // cosine floor relative to the peak
  double grad_clip = 1.0;        // global L2 norm; <= 0 disables
};

struct TrainConfig {
  static constexpr int64_t kDefaultPretrainSteps = 20000;
  static constexpr int kFinetuneBudgetDivisor = 5;
  static constexpr double kDefaultFinetuneLrRatio = 0.01;

  TrainPhase phase = TrainPhase::kPretrain;
  int64_t steps = kDefaultPretrainSteps;
  int batch_size = 16;
  double learning_rate = 3e-4;  // peak LR for pretrain and scratch
  // Fine-tune LR = learning_rate * finetune_lr_ratio unless overridden.
  double finetune_lr_ratio = kDefaultFinetuneLrRatio;
  std::optional<double> finetune_lr;
  OptimizerConfig optimizer;
  bool freeze_backbone = false;
  int validate_every = 500;       // steps; <= 0 validates only at the end
  int max_validation_windows = 64;
  gpt::LossKind loss = gpt::LossKind::kCrossEntropy;
  // Architecture for pretrain/scratch; input/output dims are filled in from
  // the dataset. Fine-tuning inherits the source architecture.
  gpt::ModelConfig model;
  std::uint64_t seed = 0;

  // Fine-tune config derived from a pretrain config: budget / 5, LR / 100.
  static TrainConfig FinetuneFrom(const TrainConfig& pretrain);
  double PeakLearningRate() const;
  void Validate() const;
};

nlohmann::json TrainConfigToJson(const TrainConfig& config);
// Missing keys keep the values of `base`; unknown keys are rejected.
TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig base = {});

struct TrainRecord {
  int64_t step = 0;
  double ce_loss = 0.0;  // mean per output dimension over the interval
  double val_mse = 0.0;  // NaN when no validation data
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  // step,ce_loss,val_mse,lr,seconds
  void WriteCsv(const std::filesystem::path& path) const;
};

struct TrainResult {
  gpt::Checkpoint checkpoint;
  TrainLog log;
};

// Episodes of one split held in memory.
struct EpisodeSet {
  std::vector<dataset::EpisodeData> episodes;
  int d_obs = 0;
  int d_act = 0;
  bool empty() const { return episodes.empty(); }
};

// Loads a split; with a fraction, only its selected (train) episodes.
EpisodeSet LoadSplit(const dataset::Dataset& ds, dataset::Split split,
                     const dataset::DatasetFraction* fraction = nullptr);

// What the model reads and predicts at each step.
enum class Target { kNextObservation, kAction };

// One (B x W) training batch with per-row loss masks.
struct Batch {
  gpt::Matrix inputs;  // normalized, (B*W) x D_in
  gpt::Targets targets;
};

// Samples (episode, start) pairs uniformly over all valid starts. Sequences
// shorter than the window are front-padded with their first frame and the
// padding is masked out of the loss.
Batch SampleBatch(const gpt::Checkpoint& ckpt, const EpisodeSet& set, Target target,
                  int batch_size, std::mt19937_64& rng);

// Decoded-prediction MSE over non-overlapping windows of the set.
double ValidateMse(const gpt::Checkpoint& ckpt, const EpisodeSet& set, Target target,
                   int max_windows = 0);

// The three training entry points.
TrainResult Pretrain(const dataset::Dataset& ds, const TrainConfig& config);
TrainResult Finetune(const gpt::Checkpoint& pretrained, const dataset::Dataset& ds,
                     const dataset::DatasetFraction* fraction, const TrainConfig& config);
TrainResult TrainScratch(const dataset::Dataset& ds, const dataset::DatasetFraction* fraction,
                         const TrainConfig& config);

// Trains `ckpt` in place on prepared data; shared by the entry points.
TrainLog RunTraining(gpt::Checkpoint& ckpt, const EpisodeSet& train, const EpisodeSet& val,
                     Target target, const TrainConfig& config, double peak_lr);

gpt::Normalizer ToNormalizer(const dataset::DimStats& stats);

// Linear warmup over warmup_fraction of the budget, then cosine decay from
// peak to peak * min_lr_ratio. step is 0-based.
double ScheduledLearningRate(int64_t step, int64_t total, double peak,
                             const OptimizerConfig& optimizer);

}  // namespace hmg::trainer

#endif  // HMG_TRAINER_TRAINER_H_
