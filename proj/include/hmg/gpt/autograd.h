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

#ifndef HMG_GPT_AUTOGRAD_H_
#define HMG_GPT_AUTOGRAD_H_

#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace hmg::gpt {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

// Reverse-mode gradient tape over dense matrices. Every op appends a node
// holding its value and, when gradients are recorded, a closure that pushes
// the node's gradient into its inputs. Tokens are rows: a batch of B windows
// of length T is a (B*T) x D matrix.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  // Parameter leaf. The value is referenced, not copied, and must outlive
  // the tape. Gradients accumulate into *grad unless grad is null (frozen).
  Var Parameter(const Matrix& value, Matrix* grad);
  Var Constant(Matrix value);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

  // y = x w + b, with b a 1 x out row broadcast over rows.
  Var Linear(Var x, Var w, Var b);
  Var Add(Var a, Var b);
  // Row r of x gets row (r mod period) of table added.
  Var AddPeriodic(Var x, Var table, int period);
  Var LayerNorm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var Gelu(Var x);
  Var Dropout(Var x, double rate, std::mt19937_64& rng);
  // Fused causal multi-head self attention. qkv is (B*T) x 3d laid out as
  // [q | k | v]; returns (B*T) x d.
  Var CausalSelfAttention(Var qkv, int batch, int steps, int heads);

  // Per-dimension categorical cross-entropy. logits is N x (D*K); targets
  // holds N*D bin indices; rows with mask 0 are ignored. Returns a 1x1 node
  // equal to the sum over dimensions averaged over unmasked rows.
  Var CategoricalCrossEntropy(Var logits, std::span<const int> targets,
                              std::span<const double> mask, int dims,
                              int bins);
  // Squared error of the probability-weighted bin-center decode, summed over
  // dimensions and averaged over unmasked rows. centers is D x K.
  Var DecodedSquaredError(Var logits, std::span<const double> targets,
                          std::span<const double> mask, const Matrix& centers);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  void Backward(Var loss);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    const Matrix* external = nullptr;
    Matrix* external_grad = nullptr;
    std::function<void()> backward;
  };

  Var Push(Matrix value);
  Matrix& GradOf(Var v);
  Node& node(Var v) { return nodes_[v.id]; }

  bool record_;
  std::vector<Node> nodes_;
};

// Numerically stable softmax of each length-`bins` segment of a row.
void SegmentSoftmax(const double* logits, int bins, double* out);

}  // namespace hmg::gpt

#endif  // HMG_GPT_AUTOGRAD_H_
