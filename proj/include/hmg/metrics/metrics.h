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

#ifndef HMG_METRICS_METRICS_H_
#define HMG_METRICS_METRICS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hmg/gpt/model.h"

namespace hmg::metrics {

using Trajectory = std::vector<std::vector<double>>;  // T rows

inline constexpr double kFidEpsilon = 1e-6;
inline constexpr double kFidNegativeTolerance = 1e-8;
inline constexpr int kPaperDivSamples = 200;
inline constexpr double kDurabilityThreshold = 6.0;  // s
inline constexpr double kHistogramMax = 15.0;        // s, 1 s bins

struct FeatureVector {
  Eigen::VectorXd values;
  std::string episode_id;
  std::string extractor_id;
  int layer = 0;  // 1-based block index
};

// Block whose output is used as the feature: ceil(L / 2).
int MiddleLayer(int num_layers);

// Mean-pooled middle-block activations over the first
// min(T, context) observations. Needs a pretrained observation-head model.
FeatureVector ExtractFeatures(const gpt::Checkpoint& extractor, const Trajectory& observations,
                              const std::string& episode_id = {});

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Sample mean and unbiased covariance; needs >= 2 rows of equal width.
Moments ComputeMoments(const std::vector<Eigen::VectorXd>& features);

// Frechet distance between two Gaussians, each covariance regularized by
// eps * I. Square-root eigenvalues in [-1e-8, 0] clamp to zero; anything
// more negative is a numeric error.
double FrechetDistance(const Moments& real, const Moments& generated,
                       double eps = kFidEpsilon);

double Fid(const std::vector<Eigen::VectorXd>& real,
           const std::vector<Eigen::VectorXd>& generated);

// Joint-pose columns [offset, offset + width) of an observation row.
struct PoseSlice {
  int offset = 0;
  int width = 0;
};

Trajectory SelectPose(const Trajectory& observations, const PoseSlice& slice);

// Pairs are truncated to their common length; pairs with no common step are
// an error. ADE averages the per-step Euclidean error within each pair, then
// across pairs. FDE averages the error at each pair's last common step.
double Ade(const std::vector<Trajectory>& generated, const std::vector<Trajectory>& real);
double Fde(const std::vector<Trajectory>& generated, const std::vector<Trajectory>& real);

// min(200, 4 * count).
int DefaultDivSamples(size_t count);

// Mean distance between two seeded with-replacement draws of size n from the
// lexicographically sorted feature set.
double Div(const std::vector<Eigen::VectorXd>& features, int n, uint64_t seed);

struct FiveNumber {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

// Quantile with h = (n + 1) p, linear between order statistics and clamped to
// the sample range.
double Quantile(std::vector<double> values, double p);
FiveNumber Summarize(const std::vector<double>& values);

struct LengthStats {
  FiveNumber summary;
  double mean = 0.0;
  int count = 0;
  // 15 one-second bins over [0, 15]; the top edge belongs to the last bin.
  std::array<int, 15> histogram{};
};

LengthStats ComputeLengthStats(const std::vector<double>& seconds);

struct Durability {
  int a_wins = 0;  // behaviors where A - B > threshold
  int b_wins = 0;  // behaviors where B - A > threshold
  double a_mean = 0.0;  // mean |difference| over a_wins, 0 if none
  double b_mean = 0.0;
};

// Per-behavior lengths in seconds; both tables must have the same keys.
Durability CompareDurability(const std::map<std::string, double>& a,
                             const std::map<std::string, double>& b,
                             double threshold = kDurabilityThreshold);

// Scores for one model. Missing values carry a failure message instead.
struct ModelScores {
  std::string name;
  std::optional<double> fid, ade, fde, div;
  std::map<std::string, std::string> failures;
  std::map<std::string, LengthStats> lengths;  // by split
  // Per-behavior breakdown: behavior -> metric -> value.
  std::map<std::string, std::map<std::string, double>> per_behavior;
};

struct DurabilityEntry {
  std::string a;
  std::string b;
  Durability result;
};

struct MetricsReport {
  std::vector<ModelScores> models;
  std::optional<double> real_div;
  std::vector<DurabilityEntry> durability;
  nlohmann::json provenance = nlohmann::json::object();

  nlohmann::json ToJson() const;
  // model,scope,metric,value rows; scope is "pooled", a behavior, or a split.
  void WriteCsv(const std::filesystem::path& path) const;
  void WriteJson(const std::filesystem::path& path) const;
};

// One box per labelled sample set.
std::string BoxPlotSvg(const std::vector<std::pair<std::string, FiveNumber>>& boxes,
                       const std::string& title, const std::string& y_label);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string LinePlotSvg(const std::vector<Series>& series, const std::string& title,
                        const std::string& x_label, const std::string& y_label);

}  // namespace hmg::metrics

#endif  // HMG_METRICS_METRICS_H_
