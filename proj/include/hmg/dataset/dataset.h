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

#ifndef HMG_DATASET_DATASET_H_
#define HMG_DATASET_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace hmg::dataset {

enum class Split { kTrain, kValidation };

std::string_view SplitName(Split split);
Split SplitFromName(std::string_view name);

// Row-major [T x D] episode payload as stored (float32 precision).
struct EpisodeData {
  std::string id;
  std::string behavior;
  int index = 0;
  std::uint64_t seed = 0;
  int length = 0;
  int d_obs = 0;
  int d_act = 0;
  bool terminated_by_fall = false;
  std::vector<double> observations;
  std::vector<double> actions;

  const double* obs(int t) const { return observations.data() + static_cast<size_t>(t) * d_obs; }
  const double* act(int t) const { return actions.data() + static_cast<size_t>(t) * d_act; }
};

struct EpisodeRecord {
  std::string id;
  std::string behavior;
  int index = 0;
  std::uint64_t seed = 0;
  int length = 0;
  bool terminated_by_fall = false;
  Split split = Split::kTrain;

  bool operator==(const EpisodeRecord&) const = default;
};

// Per-dimension summary over the train split.
struct DimStats {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<double> mean;
  std::vector<double> std;

  bool operator==(const DimStats&) const = default;
};

struct NormalizationStats {
  DimStats observations;
  DimStats actions;  // empty when the dataset has no actions

  bool operator==(const NormalizationStats&) const = default;
};

inline constexpr double kStdFloor = 1e-6;

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;

  std::string id;
  std::uint64_t seed = 0;
  int d_obs = 0;
  int d_act = 0;
  // Behaviors in first-write order with their episode counts.
  std::vector<std::string> behaviors;
  std::map<std::string, int> counts;
  std::vector<EpisodeRecord> episodes;
  std::optional<NormalizationStats> stats;

  int count(const std::string& behavior) const;
  const EpisodeRecord& Find(const std::string& episode_id) const;
  bool Contains(const std::string& episode_id) const;
  std::vector<const EpisodeRecord*> InSplit(Split split) const;

  nlohmann::json ToJson() const;
  static DatasetManifest FromJson(const nlohmann::json& j);
  bool operator==(const DatasetManifest&) const = default;
};

struct DatasetFraction {
  std::string base_id;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::string> selected;  // episode ids, behavior-major
};

struct Window {
  std::vector<double> observations;  // length x d_obs
  std::vector<double> actions;       // length x d_act
};

// One directory per dataset: manifest.json, episodes/<id>.hmge and an
// advisory lock file serializing writers across processes.
class Dataset {
 public:
  static Dataset Create(const std::filesystem::path& dir, std::string id,
                        std::uint64_t seed, int d_obs, int d_act);
  static Dataset Open(const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path EpisodePath(const std::string& episode_id) const;

  // Appends an episode atomically (temp file + rename, then manifest).
  void WriteEpisode(const EpisodeData& episode, Split split);
  EpisodeData LoadEpisode(const std::string& episode_id) const;
  Window LoadWindow(const std::string& episode_id, int start, int length) const;
  // Recomputes train-split stats and persists them in the manifest.
  const NormalizationStats& FinalizeStats();
  // Re-reads the manifest from disk.
  void Reload();
  // Throws unless every manifest entry has a readable file of the right size.
  void Verify() const;

  // Test hook run between the temp write and the rename; it may throw to
  // simulate a crash at that point.
  static void SetFaultHook(std::function<void()> hook);

 private:
  Dataset(std::filesystem::path dir, DatasetManifest manifest)
      : dir_(std::move(dir)), manifest_(std::move(manifest)) {}
  void SaveManifest() const;

  std::filesystem::path dir_;
  DatasetManifest manifest_;
};

// Per-behavior stratified prefix of a seeded shuffle of the train split.
// Count per behavior: round-half-up of fraction * n, at least 1.
DatasetFraction MakeFraction(const DatasetManifest& manifest, double fraction,
                             std::uint64_t seed);

// Mean and population std of every train-split step, std floored at
// kStdFloor. Episodes are visited in id order, so the result does not
// depend on storage order.
NormalizationStats ComputeNormalizationStats(const Dataset& dataset);

// Episode file codec ("HMGE", 32-byte header, float32 little-endian).
void WriteEpisodeFile(const EpisodeData& episode, const std::filesystem::path& path);
EpisodeData ReadEpisodeFile(const std::filesystem::path& path);

// CSV with a header row: step, obs_<i>..., act_<j>...
void ExportCsv(const EpisodeData& episode, const std::filesystem::path& path);

}  // namespace hmg::dataset

#endif  // HMG_DATASET_DATASET_H_
