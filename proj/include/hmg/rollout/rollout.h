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

#ifndef HMG_ROLLOUT_ROLLOUT_H_
#define HMG_ROLLOUT_ROLLOUT_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hmg/dataset/dataset.h"
#include "hmg/experts/behavior.h"
#include "hmg/gpt/model.h"
#include "hmg/physim/simulator.h"

namespace hmg::rollout {

inline constexpr int kPromptSteps = 32;      // one second at 32 Hz
inline constexpr int kMaxTotalSteps = 480;   // prompt included
inline constexpr int kGenerationCap = kMaxTotalSteps - kPromptSteps;
inline constexpr double kControlHz = 32.0;

struct MotionPrompt {
  std::string behavior;
  std::string episode_id;
  // Simulator observations of the replayed prompt, oldest first.
  std::vector<std::vector<double>> observations;
  // State whose observation is the last prompt row.
  physim::SimState state;
};

// Replays the first kPromptSteps - 1 stored actions from the behavior's
// initial state. The replayed observations must match the stored ones at
// float precision. Needs an episode of at least kPromptSteps steps with
// actions.
MotionPrompt MakePrompt(const dataset::EpisodeData& episode,
                        const experts::BehaviorSpec& behavior,
                        const physim::BodyModel& model);

// What an action source sees at each generation step.
struct StepContext {
  const physim::Simulator* sim = nullptr;
  const physim::SimState* state = nullptr;
  const experts::BehaviorSpec* behavior = nullptr;
  // Last min(kPromptSteps, elapsed) observations, oldest first.
  const std::deque<std::vector<double>>* window = nullptr;
  int step = 0;  // generation step, 0-based
  std::mt19937_64* rng = nullptr;
};

// Produces PD targets. Implementations are immutable and shared by workers.
class ActionSource {
 public:
  virtual ~ActionSource() = default;
  virtual std::string id() const = 0;
  virtual std::vector<double> Act(const StepContext& context) const = 0;
};

enum class DecodeMode { kGreedy, kExpected, kSample };

const char* DecodeModeName(DecodeMode mode);
DecodeMode DecodeModeFromName(const std::string& name);

struct DecodeOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;  // kSample only
};

// Decodes the last row of a window forward pass.
class GptPolicy : public ActionSource {
 public:
  // Throws unless the checkpoint has an action head.
  GptPolicy(std::shared_ptr<const gpt::Checkpoint> checkpoint,
            DecodeOptions options = {});
  std::string id() const override;
  std::vector<double> Act(const StepContext& context) const override;

 private:
  std::shared_ptr<const gpt::Checkpoint> ckpt_;
  DecodeOptions options_;
};

// Decodes one logits row into D_out values.
Eigen::VectorXd DecodeLogits(const gpt::Checkpoint& ckpt, const gpt::Matrix& logits,
                             Eigen::Index row, const DecodeOptions& options,
                             std::mt19937_64* rng);

// Noise-free expert controller; the harness self-test oracle.
class ExpertPolicy : public ActionSource {
 public:
  std::string id() const override { return "expert-oracle"; }
  std::vector<double> Act(const StepContext& context) const override;
};

// All-zero PD targets: the collapse oracle.
class ZeroPolicy : public ActionSource {
 public:
  std::string id() const override { return "zero"; }
  std::vector<double> Act(const StepContext& context) const override;
};

struct CompletionOptions {
  double fall_fraction = physim::kFallFraction;
  int max_total_steps = kMaxTotalSteps;
  std::uint64_t seed = 0;  // sampling stream
};

struct GeneratedEpisode {
  std::string behavior;
  std::string episode_id;
  std::string source_id;
  // Generation phase only: states[t] is the state after generated action t.
  std::vector<std::vector<double>> observations;
  std::vector<std::vector<double>> actions;
  std::vector<physim::SimState> states;
  bool terminated_by_fall = false;

  int length() const { return static_cast<int>(states.size()); }
  int total_length() const { return kPromptSteps + length(); }
};

GeneratedEpisode MotionCompletion(const ActionSource& source,
                                  const MotionPrompt& prompt,
                                  const experts::BehaviorSpec& behavior,
                                  const physim::BodyModel& model,
                                  const CompletionOptions& options = {});

struct EvaluationRow {
  std::string behavior;
  std::string episode_id;
  dataset::Split split = dataset::Split::kValidation;
  int generated_steps = 0;
  bool fell = false;

  double seconds() const { return generated_steps / kControlHz; }
  double total_seconds() const { return (generated_steps + kPromptSteps) / kControlHz; }
};

using BehaviorResolver =
    std::function<const experts::BehaviorSpec&(const std::string&)>;

struct EvaluateOptions {
  CompletionOptions completion;
  int jobs = 1;
  // Defaults to the shipped library.
  BehaviorResolver resolve;
  // Optional cap on episodes per behavior (0 = all), taken in id order.
  int max_per_behavior = 0;
};

struct Evaluation {
  std::vector<EvaluationRow> rows;
  // Parallel to rows.
  std::vector<GeneratedEpisode> episodes;
  // Episodes too short to supply a prompt.
  std::vector<std::string> skipped;

  double MeanSeconds() const;
};

// One completion per stored episode of the split, prompt taken from step 0.
// Rows follow manifest order regardless of jobs.
Evaluation BatchEvaluate(const ActionSource& source, const dataset::Dataset& ds,
                         dataset::Split split, const physim::BodyModel& model,
                         const EvaluateOptions& options = {});

// behavior,episode_id,split,generated_steps,generated_seconds,total_steps,
// total_seconds,fell
void WriteEvaluationCsv(const std::filesystem::path& path,
                        const std::vector<EvaluationRow>& rows);

}  // namespace hmg::rollout

#endif  // HMG_ROLLOUT_ROLLOUT_H_
