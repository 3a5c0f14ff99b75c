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

#include "hmg/gpt/model.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "hmg/common/error.h"

namespace hmg::gpt {
namespace {

constexpr double kInitStd = 0.02;
constexpr double kStatSpan = 5.0;

std::string LayerName(int layer, std::string_view suffix) {
  return "h" + std::to_string(layer) + "." + std::string(suffix);
}

void AddTensor(std::vector<Tensor>& out, std::string name, int rows, int cols,
               bool decay, bool backbone = true) {
  out.push_back(Tensor{std::move(name), Matrix::Zero(rows, cols), decay, backbone});
}

void AddHead(std::vector<Tensor>& out, const ModelConfig& c) {
  AddTensor(out, "head.weight", c.embed_dim, c.output_dim * c.num_bins, true, false);
  AddTensor(out, "head.bias", 1, c.output_dim * c.num_bins, false, false);
}

void FillGaussian(Matrix& m, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, kInitStd);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
}

void InitTensor(Tensor& t, std::mt19937_64& rng) {
  if (t.name.ends_with(".gain")) {
    t.value.setOnes();
  } else if (t.name.ends_with(".bias")) {
    t.value.setZero();
  } else {
    FillGaussian(t.value, rng);
  }
}

}  // namespace

std::string_view HeadKindName(HeadKind kind) {
  return kind == HeadKind::kObservation ? "observation" : "action";
}

HeadKind HeadKindFromName(std::string_view name) {
  if (name == "observation") return HeadKind::kObservation;
  if (name == "action") return HeadKind::kAction;
  throw Error(ErrorKind::kFormat, "unknown head kind '" + std::string(name) + "'");
}

std::string_view PhaseName(Phase phase) {
  switch (phase) {
    case Phase::kPretrained: return "pretrained";
    case Phase::kFinetuned: return "finetuned";
    case Phase::kScratch: return "scratch";
  }
  return "";
}

Phase PhaseFromName(std::string_view name) {
  if (name == "pretrained") return Phase::kPretrained;
  if (name == "finetuned") return Phase::kFinetuned;
  if (name == "scratch") return Phase::kScratch;
  throw Error(ErrorKind::kFormat, "unknown phase '" + std::string(name) + "'");
}

std::string_view LossKindName(LossKind kind) {
  return kind == LossKind::kCrossEntropy ? "cross-entropy" : "mse-on-decoded";
}

LossKind LossKindFromName(std::string_view name) {
  if (name == "cross-entropy") return LossKind::kCrossEntropy;
  if (name == "mse-on-decoded") return LossKind::kDecodedMse;
  throw Error(ErrorKind::kFormat, "unknown loss kind '" + std::string(name) + "'");
}

void ModelConfig::Validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorKind::kPrecondition, "model config: " + what);
  };
  if (context_length < 1) fail("context length must be >= 1");
  if (embed_dim < 1 || num_heads < 1) fail("embedding dim and heads must be >= 1");
  if (embed_dim % num_heads != 0) fail("embedding dim not divisible by head count");
  if (num_layers < 1) fail("layer count must be >= 1");
  if (num_bins < 2) fail("bin count must be >= 2");
  if (input_dim < 1 || output_dim < 1) fail("input and output dims must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

Matrix Normalizer::Apply(const Matrix& x) const {
  if (x.cols() != mean.size()) {
    throw Error(ErrorKind::kDimension, "normalizer width mismatch");
  }
  Matrix z = x.rowwise() - mean.transpose();
  return z.array().rowwise() / std.transpose().array();
}

Discretizer::Discretizer(Eigen::VectorXd lo, Eigen::VectorXd hi, int bins)
    : lo_(std::move(lo)), hi_(std::move(hi)), bins_(bins) {
  if (bins_ < 2) throw Error(ErrorKind::kPrecondition, "discretizer needs K >= 2");
  if (lo_.size() != hi_.size()) {
    throw Error(ErrorKind::kDimension, "discretizer range size mismatch");
  }
  for (Eigen::Index d = 0; d < lo_.size(); ++d) {
    if (!(lo_[d] < hi_[d]) || !std::isfinite(hi_[d] - lo_[d])) {
      throw Error(ErrorKind::kPrecondition,
                  "discretizer range empty for dimension " + std::to_string(d));
    }
  }
}

Discretizer Discretizer::FromStats(const Normalizer& stats, int bins) {
  return Discretizer(stats.mean - kStatSpan * stats.std,
                     stats.mean + kStatSpan * stats.std, bins);
}

double Discretizer::Center(int dim, int bin) const {
  return lo_[dim] + (bin + 0.5) * width(dim);
}

Matrix Discretizer::Centers() const {
  Matrix c(dims(), bins_);
  for (int d = 0; d < dims(); ++d) {
    for (int k = 0; k < bins_; ++k) c(d, k) = Center(d, k);
  }
  return c;
}

int Discretizer::Discretize(double value, int dim) const {
  const double pos = std::floor((value - lo_[dim]) / width(dim));
  if (!(pos > 0.0)) return 0;  // also catches NaN
  if (pos >= bins_ - 1) return bins_ - 1;
  return static_cast<int>(pos);
}

double Discretizer::Decode(std::span<const double> probs, int dim) const {
  double v = 0.0;
  for (int k = 0; k < bins_; ++k) v += probs[k] * Center(dim, k);
  return v;
}

Weights Weights::Shapes(const ModelConfig& c) {
  c.Validate();
  Weights w;
  auto& t = w.tensors_;
  const int d = c.embed_dim;
  AddTensor(t, "input.weight", c.input_dim, d, true);
  AddTensor(t, "input.bias", 1, d, false);
  AddTensor(t, "pos", c.context_length, d, false);
  for (int l = 0; l < c.num_layers; ++l) {
    AddTensor(t, LayerName(l, "ln1.gain"), 1, d, false);
    AddTensor(t, LayerName(l, "ln1.bias"), 1, d, false);
    AddTensor(t, LayerName(l, "attn.qkv.weight"), d, 3 * d, true);
    AddTensor(t, LayerName(l, "attn.qkv.bias"), 1, 3 * d, false);
    AddTensor(t, LayerName(l, "attn.proj.weight"), d, d, true);
    AddTensor(t, LayerName(l, "attn.proj.bias"), 1, d, false);
    AddTensor(t, LayerName(l, "ln2.gain"), 1, d, false);
    AddTensor(t, LayerName(l, "ln2.bias"), 1, d, false);
    AddTensor(t, LayerName(l, "mlp.fc.weight"), d, 4 * d, true);
    AddTensor(t, LayerName(l, "mlp.fc.bias"), 1, 4 * d, false);
    AddTensor(t, LayerName(l, "mlp.proj.weight"), 4 * d, d, true);
    AddTensor(t, LayerName(l, "mlp.proj.bias"), 1, d, false);
  }
  AddTensor(t, "ln_f.gain", 1, d, false);
  AddTensor(t, "ln_f.bias", 1, d, false);
  AddHead(t, c);
  return w;
}

Weights Weights::Init(const ModelConfig& config, uint64_t seed) {
  Weights w = Shapes(config);
  std::mt19937_64 rng(seed);
  for (Tensor& t : w.tensors_) InitTensor(t, rng);
  w.RoundToStorage();
  return w;
}

Tensor& Weights::at(std::string_view name) {
  for (Tensor& t : tensors_) {
    if (t.name == name) return t;
  }
  throw Error(ErrorKind::kNotFound, "no tensor named '" + std::string(name) + "'");
}

const Tensor& Weights::at(std::string_view name) const {
  return const_cast<Weights*>(this)->at(name);
}

void Weights::RoundToStorage() {
  for (Tensor& t : tensors_) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      t.value.data()[i] = static_cast<float>(t.value.data()[i]);
    }
  }
}

int64_t Weights::parameter_count() const {
  int64_t n = 0;
  for (const Tensor& t : tensors_) n += t.value.size();
  return n;
}

Checkpoint InitCheckpoint(const ModelConfig& config,
                          const Normalizer& input_stats,
                          const Normalizer& output_stats, Phase phase,
                          uint64_t seed) {
  config.Validate();
  if (input_stats.dims() != config.input_dim ||
      output_stats.dims() != config.output_dim) {
    throw Error(ErrorKind::kDimension, "normalization stats do not match config");
  }
  Checkpoint c;
  c.config = config;
  c.weights = Weights::Init(config, seed);
  c.discretizer = Discretizer::FromStats(output_stats, config.num_bins);
  c.input_stats = input_stats;
  c.provenance.phase = phase;
  return c;
}

namespace {

struct Graph {
  Var logits;
  std::vector<Var> hidden;
};

Graph BuildGraph(Tape& tape, const Checkpoint& ckpt, Var x, int batch,
                 int steps, Mode mode, std::mt19937_64* rng,
                 std::vector<Matrix>* grads, bool freeze_backbone) {
  const ModelConfig& c = ckpt.config;
  const std::vector<Tensor>& ts = ckpt.weights.tensors();
  size_t next = 0;
  auto param = [&]() {
    const Tensor& t = ts[next];
    Matrix* g = nullptr;
    if (grads != nullptr && !(freeze_backbone && t.backbone)) g = &(*grads)[next];
    ++next;
    return tape.Parameter(t.value, g);
  };
  const double p = (mode == Mode::kTrain) ? c.dropout : 0.0;
  auto drop = [&](Var v) {
    if (p <= 0.0) return v;
    if (rng == nullptr) throw Error(ErrorKind::kPrecondition, "train mode needs an rng");
    return tape.Dropout(v, p, *rng);
  };

  Graph g;
  Var w = param(), b = param();
  Var h = tape.Linear(x, w, b);
  h = drop(tape.AddPeriodic(h, param(), steps));
  for (int l = 0; l < c.num_layers; ++l) {
    Var g1 = param(), b1 = param();
    Var a = tape.LayerNorm(h, g1, b1);
    Var qw = param(), qb = param();
    a = tape.CausalSelfAttention(tape.Linear(a, qw, qb), batch, steps, c.num_heads);
    Var pw = param(), pb = param();
    h = tape.Add(h, drop(tape.Linear(a, pw, pb)));
    Var g2 = param(), b2 = param();
    Var m = tape.LayerNorm(h, g2, b2);
    Var fw = param(), fb = param();
    m = tape.Gelu(tape.Linear(m, fw, fb));
    Var mw = param(), mb = param();
    h = tape.Add(h, drop(tape.Linear(m, mw, mb)));
    g.hidden.push_back(h);
  }
  Var gf = param(), bf = param();
  h = tape.LayerNorm(h, gf, bf);
  Var hw = param(), hb = param();
  g.logits = tape.Linear(h, hw, hb);
  return g;
}

int CheckInputs(const Checkpoint& ckpt, const Matrix& inputs, int batch) {
  const ModelConfig& c = ckpt.config;
  if (batch < 1 || inputs.rows() % batch != 0 || inputs.rows() == 0) {
    throw Error(ErrorKind::kDimension, "input rows not divisible into windows");
  }
  const int steps = static_cast<int>(inputs.rows() / batch);
  if (steps > c.context_length) {
    throw Error(ErrorKind::kRange, "window of " + std::to_string(steps) +
                                       " steps exceeds context length " +
                                       std::to_string(c.context_length));
  }
  if (inputs.cols() != c.input_dim) {
    throw Error(ErrorKind::kDimension, "input width " + std::to_string(inputs.cols()) +
                                           " != " + std::to_string(c.input_dim));
  }
  if (!inputs.allFinite()) throw Error(ErrorKind::kNumeric, "non-finite model input");
  return steps;
}

}  // namespace

ForwardResult Forward(const Checkpoint& ckpt, const Matrix& inputs, int batch,
                      Mode mode, std::mt19937_64* rng) {
  const int steps = CheckInputs(ckpt, inputs, batch);
  Tape tape(/*record=*/false);
  Var x = tape.Constant(inputs);
  Graph g = BuildGraph(tape, ckpt, x, batch, steps, mode, rng, nullptr, false);
  ForwardResult r;
  r.logits = tape.value(g.logits);
  for (Var h : g.hidden) r.hidden.push_back(tape.value(h));
  return r;
}

LossResult Backward(const Checkpoint& ckpt, const Matrix& inputs, int batch,
                    const Targets& targets, const BackwardOptions& options) {
  const int steps = CheckInputs(ckpt, inputs, batch);
  const auto& ts = ckpt.weights.tensors();
  LossResult r;
  r.grads.tensors.reserve(ts.size());
  for (const Tensor& t : ts) {
    r.grads.tensors.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  }
  Tape tape;
  Var x = tape.Constant(inputs);
  Graph g = BuildGraph(tape, ckpt, x, batch, steps, options.mode, options.rng,
                       &r.grads.tensors, options.freeze_backbone);
  const int dims = ckpt.config.output_dim;
  Var loss;
  if (options.loss == LossKind::kCrossEntropy) {
    for (int bin : targets.bins) {
      if (bin < 0 || bin >= ckpt.config.num_bins) {
        throw Error(ErrorKind::kRange, "target bin " + std::to_string(bin) +
                                           " outside [0, " +
                                           std::to_string(ckpt.config.num_bins) + ")");
      }
    }
    loss = tape.CategoricalCrossEntropy(g.logits, targets.bins, targets.mask, dims,
                                        ckpt.config.num_bins);
  } else {
    loss = tape.DecodedSquaredError(g.logits, targets.values, targets.mask,
                                    ckpt.discretizer.Centers());
  }
  r.loss = tape.value(loss)(0, 0);
  tape.Backward(loss);
  return r;
}

Checkpoint SwapHead(const Checkpoint& ckpt, int action_dim,
                    const Normalizer& action_stats, uint64_t seed) {
  if (ckpt.config.head != HeadKind::kObservation ||
      ckpt.provenance.phase != Phase::kPretrained) {
    throw Error(ErrorKind::kPrecondition,
                "head swap needs a pretrained observation-head checkpoint");
  }
  if (action_dim < 1) {
    throw Error(ErrorKind::kPrecondition, "action dimension must be >= 1");
  }
  if (action_stats.dims() != action_dim) {
    throw Error(ErrorKind::kDimension, "action stats do not match action dim");
  }
  Checkpoint out = ckpt;
  out.config.output_dim = action_dim;
  out.config.head = HeadKind::kAction;
  auto& ts = out.weights.tensors();
  ts.erase(std::remove_if(ts.begin(), ts.end(), [](const Tensor& t) { return !t.backbone; }),
           ts.end());
  std::vector<Tensor> head;
  AddHead(head, out.config);
  std::mt19937_64 rng(seed);
  for (Tensor& t : head) {
    InitTensor(t, rng);
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      t.value.data()[i] = static_cast<float>(t.value.data()[i]);
    }
    ts.push_back(std::move(t));
  }
  out.discretizer = Discretizer::FromStats(action_stats, out.config.num_bins);
  return out;
}

std::vector<double> RowProbabilities(const Checkpoint& ckpt,
                                     const Matrix& logits, Eigen::Index row) {
  const int dims = ckpt.config.output_dim, bins = ckpt.config.num_bins;
  std::vector<double> p(static_cast<size_t>(dims) * bins);
  for (int d = 0; d < dims; ++d) {
    SegmentSoftmax(logits.row(row).data() + d * bins, bins, p.data() + d * bins);
  }
  return p;
}

Eigen::VectorXd DecodeRow(const Checkpoint& ckpt, const Matrix& logits,
                          Eigen::Index row) {
  const int dims = ckpt.config.output_dim, bins = ckpt.config.num_bins;
  const std::vector<double> p = RowProbabilities(ckpt, logits, row);
  Eigen::VectorXd out(dims);
  for (int d = 0; d < dims; ++d) {
    out[d] = ckpt.discretizer.Decode(std::span(p).subspan(d * bins, bins), d);
  }
  return out;
}

double DecodedMse(const Checkpoint& ckpt, const Matrix& logits,
                  const Targets& targets) {
  const int dims = ckpt.config.output_dim;
  double sum = 0.0, count = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (targets.mask[r] == 0.0) continue;
    const Eigen::VectorXd dec = DecodeRow(ckpt, logits, r);
    for (int d = 0; d < dims; ++d) {
      const double e = dec[d] - targets.values[r * dims + d];
      sum += targets.mask[r] * e * e;
    }
    count += targets.mask[r] * dims;
  }
  if (count <= 0.0) throw Error(ErrorKind::kPrecondition, "empty validation mask");
  return sum / count;
}

}  // namespace hmg::gpt
