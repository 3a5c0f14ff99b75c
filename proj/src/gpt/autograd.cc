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

#include "hmg/gpt/autograd.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "hmg/common/error.h"

namespace hmg::gpt {
namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

void SegmentSoftmax(const double* logits, int bins, double* out) {
  double m = logits[0];
  for (int k = 1; k < bins; ++k) m = std::max(m, logits[k]);
  double z = 0.0;
  for (int k = 0; k < bins; ++k) {
    out[k] = std::exp(logits[k] - m);
    z += out[k];
  }
  for (int k = 0; k < bins; ++k) out[k] /= z;
}

Var Tape::Push(Matrix value) {
  nodes_.emplace_back();
  nodes_.back().value = std::move(value);
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::Parameter(const Matrix& value, Matrix* grad) {
  nodes_.emplace_back();
  nodes_.back().external = &value;
  nodes_.back().external_grad = grad;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::Constant(Matrix value) { return Push(std::move(value)); }

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.value;
}

Matrix& Tape::GradOf(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(value(v).rows(), value(v).cols());
  return n.grad;
}

Var Tape::Linear(Var x, Var w, Var b) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(w);
  if (xv.cols() != wv.rows() || value(b).cols() != wv.cols()) {
    throw Error(ErrorKind::kDimension, "linear shape mismatch");
  }
  Matrix y = xv * wv;
  y.rowwise() += value(b).row(0);
  Var out = Push(std::move(y));
  if (record_) {
    node(out).backward = [this, x, w, b, out] {
      const Matrix& g = nodes_[out.id].grad;
      GradOf(x).noalias() += g * value(w).transpose();
      GradOf(w).noalias() += value(x).transpose() * g;
      GradOf(b).row(0) += g.colwise().sum();
    };
  }
  return out;
}

Var Tape::Add(Var a, Var b) {
  Var out = Push(value(a) + value(b));
  if (record_) {
    node(out).backward = [this, a, b, out] {
      const Matrix& g = nodes_[out.id].grad;
      GradOf(a) += g;
      GradOf(b) += g;
    };
  }
  return out;
}

Var Tape::AddPeriodic(Var x, Var table, int period) {
  Matrix y = value(x);
  const Matrix& t = value(table);
  if (t.rows() < period || t.cols() != y.cols() || y.rows() % period != 0) {
    throw Error(ErrorKind::kDimension, "periodic add shape mismatch");
  }
  for (Eigen::Index r = 0; r < y.rows(); ++r) y.row(r) += t.row(r % period);
  Var out = Push(std::move(y));
  if (record_) {
    node(out).backward = [this, x, table, period, out] {
      const Matrix& g = nodes_[out.id].grad;
      GradOf(x) += g;
      Matrix& gt = GradOf(table);
      for (Eigen::Index r = 0; r < g.rows(); ++r) gt.row(r % period) += g.row(r);
    };
  }
  return out;
}

Var Tape::LayerNorm(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = value(x);
  const Eigen::Index n = xv.rows(), d = xv.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std[r];
  }
  Matrix y = xhat.array().rowwise() * value(gain).row(0).array();
  y.rowwise() += value(bias).row(0);
  Var out = Push(std::move(y));
  if (record_) {
    node(out).backward = [this, x, gain, bias, out, xhat = std::move(xhat),
                          inv_std = std::move(inv_std)] {
      const Matrix& g = nodes_[out.id].grad;
      GradOf(gain).row(0) += (g.array() * xhat.array()).colwise().sum().matrix();
      GradOf(bias).row(0) += g.colwise().sum();
      Matrix gx = g.array().rowwise() * value(gain).row(0).array();
      Matrix& dx = GradOf(x);
      const double d = static_cast<double>(gx.cols());
      for (Eigen::Index r = 0; r < gx.rows(); ++r) {
        const double m1 = gx.row(r).sum() / d;
        const double m2 = gx.row(r).dot(xhat.row(r)) / d;
        dx.row(r).array() +=
            inv_std[r] * (gx.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
    };
  }
  return out;
}

Var Tape::Gelu(Var x) {
  const Matrix& xv = value(x);
  Matrix y = xv.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
  Var out = Push(std::move(y));
  if (record_) {
    node(out).backward = [this, x, out] {
      const Matrix& g = nodes_[out.id].grad;
      Matrix d = value(x).unaryExpr([](double v) {
        const double u = kGeluC * (v + kGeluA * v * v * v);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
      GradOf(x).array() += g.array() * d.array();
    };
  }
  return out;
}

Var Tape::Dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  const Matrix& xv = value(x);
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Matrix mask(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = keep(rng) ? scale : 0.0;
  }
  Var out = Push(xv.cwiseProduct(mask));
  if (record_) {
    node(out).backward = [this, x, out, mask = std::move(mask)] {
      GradOf(x) += nodes_[out.id].grad.cwiseProduct(mask);
    };
  }
  return out;
}

Var Tape::CausalSelfAttention(Var qkv, int batch, int steps, int heads) {
  const Matrix& in = value(qkv);
  const int d = static_cast<int>(in.cols()) / 3;
  if (in.cols() != 3 * d || in.rows() != batch * steps || d % heads != 0) {
    throw Error(ErrorKind::kDimension, "attention shape mismatch");
  }
  const int hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix y(in.rows(), d);
  // Attention probabilities, one steps x steps block per (batch, head).
  std::vector<Matrix> probs(static_cast<size_t>(batch) * heads);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto q = in.block(b * steps, h * hd, steps, hd);
      const auto k = in.block(b * steps, d + h * hd, steps, hd);
      const auto v = in.block(b * steps, 2 * d + h * hd, steps, hd);
      Matrix s = (q * k.transpose()) * scale;
      for (int i = 0; i < steps; ++i) {
        for (int j = i + 1; j < steps; ++j) s(i, j) = 0.0;
        double m = s(i, 0);
        for (int j = 1; j <= i; ++j) m = std::max(m, s(i, j));
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          s(i, j) = std::exp(s(i, j) - m);
          z += s(i, j);
        }
        for (int j = 0; j <= i; ++j) s(i, j) /= z;
      }
      y.block(b * steps, h * hd, steps, hd).noalias() = s * v;
      probs[static_cast<size_t>(b) * heads + h] = std::move(s);
    }
  }
  Var out = Push(std::move(y));
  if (record_) {
    node(out).backward = [this, qkv, out, batch, steps, heads, d, hd, scale,
                          probs = std::move(probs)] {
      const Matrix& g = nodes_[out.id].grad;
      const Matrix& in = value(qkv);
      Matrix& gin = GradOf(qkv);
      for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < heads; ++h) {
          const Matrix& p = probs[static_cast<size_t>(b) * heads + h];
          const auto q = in.block(b * steps, h * hd, steps, hd);
          const auto k = in.block(b * steps, d + h * hd, steps, hd);
          const auto v = in.block(b * steps, 2 * d + h * hd, steps, hd);
          const auto gy = g.block(b * steps, h * hd, steps, hd);
          gin.block(b * steps, 2 * d + h * hd, steps, hd).noalias() +=
              p.transpose() * gy;
          Matrix gp = gy * v.transpose();
          for (int i = 0; i < steps; ++i) {
            double dot = 0.0;
            for (int j = 0; j <= i; ++j) dot += gp(i, j) * p(i, j);
            for (int j = 0; j <= i; ++j) gp(i, j) = p(i, j) * (gp(i, j) - dot);
            for (int j = i + 1; j < steps; ++j) gp(i, j) = 0.0;
          }
          gin.block(b * steps, h * hd, steps, hd).noalias() += scale * gp * k;
          gin.block(b * steps, d + h * hd, steps, hd).noalias() +=
              scale * gp.transpose() * q;
        }
      }
    };
  }
  return out;
}

Var Tape::CategoricalCrossEntropy(Var logits, std::span<const int> targets,
                                  std::span<const double> mask, int dims,
                                  int bins) {
  const Matrix& lv = value(logits);
  const Eigen::Index n = lv.rows();
  if (lv.cols() != static_cast<Eigen::Index>(dims) * bins ||
      targets.size() != static_cast<size_t>(n * dims) ||
      mask.size() != static_cast<size_t>(n)) {
    throw Error(ErrorKind::kDimension, "cross-entropy shape mismatch");
  }
  double count = 0.0;
  for (double m : mask) count += m;
  if (count <= 0.0) throw Error(ErrorKind::kPrecondition, "empty loss mask");
  Matrix probs = Matrix::Zero(n, lv.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (mask[r] == 0.0) continue;
    for (int dd = 0; dd < dims; ++dd) {
      double* p = probs.row(r).data() + dd * bins;
      SegmentSoftmax(lv.row(r).data() + dd * bins, bins, p);
      const int t = targets[r * dims + dd];
      if (t < 0 || t >= bins) throw Error(ErrorKind::kRange, "target bin out of range");
      loss -= mask[r] * std::log(std::max(p[t], 1e-300));
    }
  }
  Matrix lm(1, 1);
  lm(0, 0) = loss / count;
  Var out = Push(std::move(lm));
  if (record_) {
    std::vector<int> tgt(targets.begin(), targets.end());
    std::vector<double> msk(mask.begin(), mask.end());
    node(out).backward = [this, logits, out, dims, bins, count,
                          probs = std::move(probs), tgt = std::move(tgt),
                          msk = std::move(msk)] {
      const double g = nodes_[out.id].grad(0, 0) / count;
      Matrix& gl = GradOf(logits);
      for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        if (msk[r] == 0.0) continue;
        const double w = g * msk[r];
        gl.row(r) += w * probs.row(r);
        for (int dd = 0; dd < dims; ++dd) gl(r, dd * bins + tgt[r * dims + dd]) -= w;
      }
    };
  }
  return out;
}

Var Tape::DecodedSquaredError(Var logits, std::span<const double> targets,
                              std::span<const double> mask,
                              const Matrix& centers) {
  const Matrix& lv = value(logits);
  const int dims = static_cast<int>(centers.rows());
  const int bins = static_cast<int>(centers.cols());
  const Eigen::Index n = lv.rows();
  if (lv.cols() != static_cast<Eigen::Index>(dims) * bins ||
      targets.size() != static_cast<size_t>(n * dims) ||
      mask.size() != static_cast<size_t>(n)) {
    throw Error(ErrorKind::kDimension, "decoded-mse shape mismatch");
  }
  double count = 0.0;
  for (double m : mask) count += m;
  if (count <= 0.0) throw Error(ErrorKind::kPrecondition, "empty loss mask");
  Matrix probs = Matrix::Zero(n, lv.cols());
  Matrix resid = Matrix::Zero(n, dims);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (mask[r] == 0.0) continue;
    for (int dd = 0; dd < dims; ++dd) {
      double* p = probs.row(r).data() + dd * bins;
      SegmentSoftmax(lv.row(r).data() + dd * bins, bins, p);
      double dec = 0.0;
      for (int k = 0; k < bins; ++k) dec += p[k] * centers(dd, k);
      resid(r, dd) = dec - targets[r * dims + dd];
      loss += mask[r] * resid(r, dd) * resid(r, dd);
    }
  }
  Matrix lm(1, 1);
  lm(0, 0) = loss / count;
  Var out = Push(std::move(lm));
  if (record_) {
    std::vector<double> msk(mask.begin(), mask.end());
    node(out).backward = [this, logits, out, dims, bins, count, centers,
                          probs = std::move(probs), resid = std::move(resid),
                          msk = std::move(msk)] {
      const double g = nodes_[out.id].grad(0, 0) / count;
      Matrix& gl = GradOf(logits);
      for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        if (msk[r] == 0.0) continue;
        for (int dd = 0; dd < dims; ++dd) {
          const double* p = probs.row(r).data() + dd * bins;
          double dec = 0.0;
          for (int k = 0; k < bins; ++k) dec += p[k] * centers(dd, k);
          const double w = 2.0 * g * msk[r] * resid(r, dd);
          for (int k = 0; k < bins; ++k) {
            gl(r, dd * bins + k) += w * p[k] * (centers(dd, k) - dec);
          }
        }
      }
    };
  }
  return out;
}

void Tape::Backward(Var loss) {
  if (!record_) throw Error(ErrorKind::kPrecondition, "tape is not recording");
  if (value(loss).size() != 1) {
    throw Error(ErrorKind::kDimension, "backward needs a scalar loss");
  }
  GradOf(loss)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward();
    if (n.external_grad != nullptr) {
      if (n.external_grad->size() == 0) {
        *n.external_grad = Matrix::Zero(n.grad.rows(), n.grad.cols());
      }
      *n.external_grad += n.grad;
    }
  }
}

}  // namespace hmg::gpt
