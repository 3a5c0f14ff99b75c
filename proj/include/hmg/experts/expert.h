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

#ifndef HMG_EXPERTS_EXPERT_H_
#define HMG_EXPERTS_EXPERT_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hmg/dataset/dataset.h"
#include "hmg/experts/behavior.h"
#include "hmg/physim/simulator.h"

namespace hmg::experts {

inline constexpr int kMaxEpisodeSteps = 480;  // 15 s at 32 Hz
inline constexpr double kDefaultNoiseScale = 0.05;  // rad

struct Episode {
  std::string id;
  std::string behavior;
  int index = 0;
  std::uint64_t seed = 0;
  // Row-major [T x D] blocks.
  std::vector<std::vector<double>> observations;
  std::vector<std::vector<double>> actions;
  std::vector<physim::SimState> states;
  bool terminated_by_fall = false;

  int length() const { return static_cast<int>(observations.size()); }
};

// Initial simulator state for a behavior.
physim::SimState InitialState(const physim::Simulator& sim,
                              const BehaviorSpec& behavior);

// Target joint angles the expert commands at time t. Pure function of
// (state, behavior, t). Throws Error(kRange) outside [0, duration].
std::vector<double> ExpertAction(const physim::Simulator& sim,
                                 const physim::SimState& state,
                                 const BehaviorSpec& behavior, double t);

// Rolls the expert forward with seeded Gaussian action noise. The recorded
// actions are the noisy targets actually sent to the simulator (rounded to
// float32 so the stored episode replays bit-exactly). Stops at a fall or at
// kMaxEpisodeSteps.
Episode GenerateRollout(const BehaviorSpec& behavior,
                        const physim::BodyModel& model, double noise_scale,
                        std::uint64_t seed,
                        int max_steps = kMaxEpisodeSteps);

// Re-simulates recorded actions from the behavior's initial state.
std::vector<physim::SimState> ReplayActions(
    const BehaviorSpec& behavior, const physim::BodyModel& model,
    std::span<const std::vector<double>> actions);

// Stable 64-bit FNV-1a hash of (behavior name, rollout index).
std::uint64_t EpisodeSeed(std::uint64_t base_seed, const std::string& behavior,
                          int index);

// Stored form of an episode; actions are dropped when with_actions is false.
dataset::EpisodeData ToEpisodeData(const Episode& episode, bool with_actions);

// "<behavior>-<index>" with a zero-padded index.
std::string EpisodeId(const std::string& behavior, int index);

struct BuildOptions {
  int rollouts_per_behavior = 10;
  double noise_scale = kDefaultNoiseScale;
  std::uint64_t seed = 0;
  // Extra held-out rollouts per train behavior, stored in the validation
  // split with indices after the train rollouts.
  int validation_rollouts = 0;
  // false builds an observation-only dataset (D_act = 0).
  bool store_actions = true;
  int max_steps = kMaxEpisodeSteps;
  int jobs = 1;
};

// Generates rollouts for every behavior and writes them to a new dataset at
// dir. Behaviors named in ValidationBehaviors() go to the validation split.
// Train-split stats are finalized before returning.
dataset::DatasetManifest BuildDataset(const std::vector<BehaviorSpec>& behaviors,
                                      const physim::BodyModel& model,
                                      const BuildOptions& options,
                                      const std::filesystem::path& dir,
                                      const std::string& id);

}  // namespace hmg::experts

#endif  // HMG_EXPERTS_EXPERT_H_
