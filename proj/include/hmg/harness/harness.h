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

#ifndef HMG_HARNESS_HARNESS_H_
#define HMG_HARNESS_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmg/dataset/dataset.h"
#include "hmg/gpt/model.h"
#include "hmg/metrics/metrics.h"
#include "hmg/rollout/rollout.h"
#include "hmg/trainer/trainer.h"

namespace hmg::harness {

// Expert rollout datasets shared by every variant.
struct DataConfig {
  int large_rollouts = 100;  // per behavior
  int small_rollouts = 10;   // per behavior
  // Held-out rollouts per train behavior in the validation split.
  int validation_rollouts = 2;
  double noise_scale = 0.03;
  std::uint64_t seed = 0;
  int max_steps = 480;
  // Behavior names to generate; empty means the whole library.
  std::vector<std::string> behaviors;
};

struct ExperimentConfig {
  DataConfig data;
  trainer::TrainConfig pretrain;
  trainer::TrainConfig finetune;
  trainer::TrainConfig scratch;
  rollout::DecodeOptions decode;
  // Episodes per behavior evaluated per split (0 = all).
  int eval_per_behavior = 0;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int jobs = 1;

  // Full-size budgets (pretrain and scratch 20k steps, fine-tune 4k).
  static ExperimentConfig Full();
  // Reduced configuration sized for one laptop core in under 30 minutes.
  static ExperimentConfig Desk();
  // Seconds-scale smoke configuration.
  static ExperimentConfig Demo();
  static ExperimentConfig Preset(const std::string& name);

  nlohmann::json ToJson() const;
  // Missing keys keep the values of `base`; unknown keys are rejected.
  static ExperimentConfig FromJson(const nlohmann::json& j, const ExperimentConfig& base);
  void Validate() const;
};

enum class TrainingMode { kPretrainFinetune, kScratch };

const char* TrainingModeName(TrainingMode mode);
TrainingMode TrainingModeFromName(const std::string& name);

struct Variant {
  std::string name;
  TrainingMode mode = TrainingMode::kScratch;
  // "large", "small", or "small@<fraction>".
  std::string dataset = "small";
};

struct ExperimentPlan {
  std::vector<Variant> variants;
  std::vector<dataset::Split> splits = {dataset::Split::kValidation};
  ExperimentConfig config;
  std::filesystem::path out;

  // hmg (pretrain + fine-tune on small), scratch-large, scratch-small.
  static ExperimentPlan Default(const ExperimentConfig& config, const std::filesystem::path& out);
  nlohmann::json ToJson() const;
  static ExperimentPlan FromJson(const nlohmann::json& j, const std::filesystem::path& out);
  // Unique names, known datasets, fractions in (0, 1].
  void Validate() const;
};

// Output tree under the plan directory.
struct Layout {
  std::filesystem::path root;
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path figures() const { return root / "figures"; }
  std::filesystem::path stamps() const { return root / "stamps"; }
};

// 16 hex digits of a stable hash of the canonical JSON dump.
std::string ContentHash(const nlohmann::json& j);

struct Datasets {
  dataset::Dataset large;
  dataset::Dataset small;
};

// Builds (or reopens) both expert datasets under layout.data().
Datasets PrepareDatasets(const ExperimentConfig& config, const Layout& layout);

// Trains (or reloads) the shared observation model on the large dataset.
gpt::Checkpoint EnsurePretrained(const ExperimentConfig& config, const Datasets& data,
                                 const Layout& layout);

struct SplitResult {
  std::vector<rollout::EvaluationRow> rows;
  double mean_seconds = 0.0;
  metrics::ModelScores scores;
  // Mean generated length per behavior, s.
  std::map<std::string, double> behavior_seconds;
  // Diversity of the stored continuations, for reference.
  std::optional<double> real_div;
};

struct CellResult {
  std::string variant;
  std::uint64_t seed = 0;
  std::string checkpoint;  // path relative to the plan root
  std::map<std::string, SplitResult> splits;  // keyed by split name

  nlohmann::json ToJson() const;
  static CellResult FromJson(const nlohmann::json& j);
};

// Evaluates one action model on a split and scores it against the stored
// episodes. FID and DIV need the pretrained `extractor`; with nullptr they
// are reported as failures.
SplitResult EvaluateModel(const gpt::Checkpoint& model, const gpt::Checkpoint* extractor,
                          const dataset::Dataset& ds, dataset::Split split,
                          const ExperimentConfig& config, std::uint64_t seed,
                          const rollout::BehaviorResolver& resolve = {});

struct VariantSummary {
  std::string name;
  std::vector<CellResult> cells;  // seed order
  // Per split: mean and population std of per-seed mean lengths.
  std::map<std::string, double> mean_seconds;
  std::map<std::string, double> std_seconds;
};

struct MatrixResult {
  std::vector<VariantSummary> variants;
  metrics::MetricsReport report;  // validation split, seed means
  int trained_cells = 0;          // cells computed in this call
  int reused_cells = 0;           // cells restored from stamps

  const VariantSummary& at(const std::string& name) const;
};

// Trains and evaluates every variant x seed. Completed cells are skipped via
// stamps. Writes reports/, figures/ and reports/matrix.json.
MatrixResult RunMatrix(const ExperimentPlan& plan);

struct AblationPoint {
  double fraction = 1.0;
  std::vector<double> seed_seconds;
  double mean_seconds = 0.0;
};

struct AblationCurve {
  std::vector<AblationPoint> points;  // ascending fraction
  nlohmann::json ToJson() const;
};

// Fine-tunes the pretrained model on fractions of the small train split and
// reports mean validation length per fraction. Writes figures/ablation.svg.
AblationCurve RunAblation(const gpt::Checkpoint& pretrained, const dataset::Dataset& small,
                          std::vector<double> fractions, const ExperimentConfig& config,
                          const Layout& layout);

// Central ordering check on the validation split.
struct OrderingVerdict {
  int seeds = 0;
  int hmg_beats_small = 0;  // seeds with hmg > scratch-small
  double hmg_mean = 0.0;
  double small_mean = 0.0;
  double large_mean = 0.0;
  bool within_large = false;  // hmg >= 0.8 * scratch-large
  bool pass = false;          // >= 4 of 5 (scaled) seeds and within_large
};

OrderingVerdict CheckOrdering(const MatrixResult& result);

}  // namespace hmg::harness

#endif  // HMG_HARNESS_HARNESS_H_
