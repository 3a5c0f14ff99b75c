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

#ifndef HMG_GPT_MODEL_H_
#define HMG_GPT_MODEL_H_

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hmg/gpt/autograd.h"

namespace hmg::gpt {

enum class HeadKind { kObservation, kAction };
enum class Phase { kPretrained, kFinetuned, kScratch };
enum class LossKind { kCrossEntropy, kDecodedMse };
enum class Mode { kTrain, kEval };

std::string_view HeadKindName(HeadKind kind);
HeadKind HeadKindFromName(std::string_view name);
std::string_view PhaseName(Phase phase);
Phase PhaseFromName(std::string_view name);
std::string_view LossKindName(LossKind kind);
LossKind LossKindFromName(std::string_view name);

struct ModelConfig {
  int context_length = 32;
  int embed_dim = 128;
  int num_layers = 4;
  int num_heads = 4;
  int num_bins = 64;
  int input_dim = 0;
  int output_dim = 0;
  HeadKind head = HeadKind::kObservation;
  double dropout = 0.1;

  // Throws kPrecondition on any broken invariant.
  void Validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Per-dimension z-score statistics.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  int dims() const { return static_cast<int>(mean.size()); }
  // Row-wise (x - mean) / std.
  Matrix Apply(const Matrix& x) const;
  bool operator==(const Normalizer& o) const {
    return mean == o.mean && std == o.std;
  }
};

// Uniform K-bin quantizer per output dimension.
class Discretizer {
 public:
  Discretizer() = default;
  Discretizer(Eigen::VectorXd lo, Eigen::VectorXd hi, int bins);
  // Range mean +/- 5 std per dimension.
  static Discretizer FromStats(const Normalizer& stats, int bins);

  int dims() const { return static_cast<int>(lo_.size()); }
  int bins() const { return bins_; }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }
  double width(int dim) const { return (hi_[dim] - lo_[dim]) / bins_; }
  double Center(int dim, int bin) const;
  // dims x bins matrix of bin centers.
  Matrix Centers() const;

  // Out-of-range values clamp to the edge bins.
  int Discretize(double value, int dim) const;
  double Decode(std::span<const double> probs, int dim) const;

  bool operator==(const Discretizer& o) const {
    return bins_ == o.bins_ && lo_ == o.lo_ && hi_ == o.hi_;
  }

 private:
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
  int bins_ = 0;
};

struct Tensor {
  std::string name;
  Matrix value;
  bool decay = false;     // weight decay applies
  bool backbone = true;   // false only for the output head
};

// All trainable tensors in a fixed, config-determined order.
class Weights {
 public:
  static Weights Init(const ModelConfig& config, uint64_t seed);
  // Expected (name, rows, cols, decay, backbone) layout for a config.
  static Weights Shapes(const ModelConfig& config);

  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  int64_t parameter_count() const;
  // Rounds every entry to the nearest float32, the stored precision.
  void RoundToStorage();

 private:
  std::vector<Tensor> tensors_;
};

struct Provenance {
  std::string dataset_id;
  int64_t steps = 0;
  Phase phase = Phase::kPretrained;
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  ModelConfig config;
  Weights weights;
  Discretizer discretizer;
  Normalizer input_stats;
  Provenance provenance;
};

// Fresh checkpoint; the output discretizer comes from output_stats.
Checkpoint InitCheckpoint(const ModelConfig& config,
                          const Normalizer& input_stats,
                          const Normalizer& output_stats, Phase phase,
                          uint64_t seed);

struct ForwardResult {
  // (B*T) x (D_out*K) logits.
  Matrix logits;
  // Residual stream after each block, (B*T) x d each.
  std::vector<Matrix> hidden;
};

// Runs `batch` windows of `steps` normalized inputs stacked row-wise.
// Throws when steps exceeds the context or an input is not finite.
ForwardResult Forward(const Checkpoint& ckpt, const Matrix& inputs, int batch,
                      Mode mode, std::mt19937_64* rng = nullptr);

// Gradient buffers parallel to Weights::tensors(). Frozen entries stay zero.
struct Gradients {
  std::vector<Matrix> tensors;
};

struct LossResult {
  double loss = 0.0;
  Gradients grads;
};

struct Targets {
  // Bin indices, (B*T) x D_out, used by cross-entropy.
  std::vector<int> bins;
  // Raw target values, (B*T) x D_out, used by mse-on-decoded.
  std::vector<double> values;
  // One weight per row; 0 excludes the step from the loss.
  std::vector<double> mask;
};

struct BackwardOptions {
  LossKind loss = LossKind::kCrossEntropy;
  Mode mode = Mode::kTrain;
  bool freeze_backbone = false;
  std::mt19937_64* rng = nullptr;
};

LossResult Backward(const Checkpoint& ckpt, const Matrix& inputs, int batch,
                    const Targets& targets, const BackwardOptions& options);

// Replaces the observation head with a freshly initialized action head.
// Backbone tensors are copied unchanged.
Checkpoint SwapHead(const Checkpoint& ckpt, int action_dim,
                    const Normalizer& action_stats, uint64_t seed);

// Softmax over each of the D_out segments of one logits row.
std::vector<double> RowProbabilities(const Checkpoint& ckpt,
                                     const Matrix& logits, Eigen::Index row);
// Probability-weighted decode of one logits row into D_out values.
Eigen::VectorXd DecodeRow(const Checkpoint& ckpt, const Matrix& logits,
                          Eigen::Index row);

// Mean squared error of decoded predictions vs. raw targets, averaged over
// dimensions and unmasked rows.
double DecodedMse(const Checkpoint& ckpt, const Matrix& logits,
                  const Targets& targets);

}  // namespace hmg::gpt

#endif  // HMG_GPT_MODEL_H_
