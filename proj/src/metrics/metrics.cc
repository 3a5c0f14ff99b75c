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

#include "hmg/metrics/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "hmg/common/error.h"

namespace hmg::metrics {
namespace {

void RequireSameWidth(const std::vector<Eigen::VectorXd>& v, const char* what) {
  for (const Eigen::VectorXd& x : v) {
    if (x.size() != v.front().size()) {
      throw Error(ErrorKind::kDimension, std::string(what) + ": feature widths differ");
    }
    if (!x.allFinite()) throw Error(ErrorKind::kNumeric, std::string(what) + ": non-finite feature");
  }
}

// Symmetric PSD square root; tiny negative eigenvalues clamp to zero.
Eigen::VectorXd CheckedEigenvalues(const Eigen::MatrixXd& m, const char* what) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::kNumeric, std::string(what) + ": eigendecomposition failed");
  }
  Eigen::VectorXd l = es.eigenvalues();
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    if (l[i] < -kFidNegativeTolerance) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%s: eigenvalue %.3e below tolerance", what, l[i]);
      throw Error(ErrorKind::kNumeric, buf);
    }
    l[i] = std::max(0.0, l[i]);
  }
  return l;
}

Eigen::MatrixXd SqrtPsd(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd l = CheckedEigenvalues(sym, "covariance");
  return es.eigenvectors() * l.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

void CheckPairs(const std::vector<Trajectory>& generated, const std::vector<Trajectory>& real) {
  if (generated.empty() || generated.size() != real.size()) {
    throw Error(ErrorKind::kPrecondition, "trajectory pairing is empty or unbalanced");
  }
}

// Error at each common step of one pair.
std::vector<double> StepErrors(const Trajectory& g, const Trajectory& r) {
  const size_t n = std::min(g.size(), r.size());
  if (n == 0) throw Error(ErrorKind::kPrecondition, "trajectory pair has no common step");
  std::vector<double> out(n);
  for (size_t t = 0; t < n; ++t) {
    if (g[t].size() != r[t].size()) throw Error(ErrorKind::kDimension, "pose widths differ");
    double s = 0.0;
    for (size_t d = 0; d < g[t].size(); ++d) s += (g[t][d] - r[t][d]) * (g[t][d] - r[t][d]);
    out[t] = std::sqrt(s);
  }
  return out;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

nlohmann::json Optional(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json StatsJson(const LengthStats& s) {
  return {{"min", s.summary.min},   {"q1", s.summary.q1},   {"median", s.summary.median},
          {"q3", s.summary.q3},     {"max", s.summary.max}, {"mean", s.mean},
          {"count", s.count},       {"histogram", s.histogram}};
}

}  // namespace

int MiddleLayer(int num_layers) {
  if (num_layers < 1) throw Error(ErrorKind::kPrecondition, "model has no layers");
  return (num_layers + 1) / 2;
}

FeatureVector ExtractFeatures(const gpt::Checkpoint& extractor, const Trajectory& observations,
                              const std::string& episode_id) {
  if (extractor.config.head != gpt::HeadKind::kObservation ||
      extractor.provenance.phase != gpt::Phase::kPretrained) {
    throw Error(ErrorKind::kPrecondition,
                "feature extraction needs the pretrained observation model");
  }
  if (observations.empty()) throw Error(ErrorKind::kPrecondition, "empty episode " + episode_id);
  const int steps = std::min<int>(static_cast<int>(observations.size()),
                                  extractor.config.context_length);
  const int dims = extractor.config.input_dim;
  gpt::Matrix raw(steps, dims);
  for (int t = 0; t < steps; ++t) {
    if (static_cast<int>(observations[t].size()) != dims) {
      throw Error(ErrorKind::kDimension, "observation width does not match the extractor");
    }
    for (int d = 0; d < dims; ++d) raw(t, d) = observations[t][d];
  }
  const gpt::ForwardResult f =
      gpt::Forward(extractor, extractor.input_stats.Apply(raw), 1, gpt::Mode::kEval);
  FeatureVector out;
  out.layer = MiddleLayer(extractor.config.num_layers);
  out.values = f.hidden[out.layer - 1].colwise().mean().transpose();
  out.episode_id = episode_id;
  out.extractor_id = extractor.provenance.dataset_id + ":" +
                     std::to_string(extractor.provenance.steps);
  return out;
}

Moments ComputeMoments(const std::vector<Eigen::VectorXd>& features) {
  if (features.size() < 2) {
    throw Error(ErrorKind::kPrecondition, "moments need at least 2 feature vectors");
  }
  RequireSameWidth(features, "moments");
  const Eigen::Index d = features.front().size();
  Moments m;
  m.mean = Eigen::VectorXd::Zero(d);
  for (const Eigen::VectorXd& x : features) m.mean += x;
  m.mean /= static_cast<double>(features.size());
  m.cov = Eigen::MatrixXd::Zero(d, d);
  for (const Eigen::VectorXd& x : features) {
    const Eigen::VectorXd c = x - m.mean;
    m.cov.noalias() += c * c.transpose();
  }
  m.cov /= static_cast<double>(features.size() - 1);
  return m;
}

double FrechetDistance(const Moments& r, const Moments& g, double eps) {
  if (r.mean.size() != g.mean.size() || r.cov.rows() != g.cov.rows()) {
    throw Error(ErrorKind::kDimension, "FID: feature dimensions differ");
  }
  const Eigen::Index d = r.mean.size();
  const Eigen::MatrixXd sr = r.cov + eps * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd sg = g.cov + eps * Eigen::MatrixXd::Identity(d, d);
  // Tr (Sr Sg)^1/2 = Tr (Sr^1/2 Sg Sr^1/2)^1/2, which is symmetric PSD.
  const Eigen::MatrixXd a = SqrtPsd(sr);
  const Eigen::VectorXd l = CheckedEigenvalues(a * sg * a, "FID cross term");
  const double fid = (r.mean - g.mean).squaredNorm() + sr.trace() + sg.trace() -
                     2.0 * l.cwiseSqrt().sum();
  if (!std::isfinite(fid)) throw Error(ErrorKind::kNumeric, "FID is not finite");
  return std::max(0.0, fid);
}

double Fid(const std::vector<Eigen::VectorXd>& real,
           const std::vector<Eigen::VectorXd>& generated) {
  const Moments r = ComputeMoments(real);
  const Moments g = ComputeMoments(generated);
  return FrechetDistance(r, g);
}

Trajectory SelectPose(const Trajectory& observations, const PoseSlice& slice) {
  Trajectory out;
  out.reserve(observations.size());
  for (const std::vector<double>& row : observations) {
    if (slice.offset < 0 || slice.offset + slice.width > static_cast<int>(row.size())) {
      throw Error(ErrorKind::kRange, "pose slice outside the observation");
    }
    out.emplace_back(row.begin() + slice.offset, row.begin() + slice.offset + slice.width);
  }
  return out;
}

double Ade(const std::vector<Trajectory>& generated, const std::vector<Trajectory>& real) {
  CheckPairs(generated, real);
  double total = 0.0;
  for (size_t i = 0; i < generated.size(); ++i) {
    const std::vector<double> e = StepErrors(generated[i], real[i]);
    double s = 0.0;
    for (double x : e) s += x;
    total += s / static_cast<double>(e.size());
  }
  return total / static_cast<double>(generated.size());
}

double Fde(const std::vector<Trajectory>& generated, const std::vector<Trajectory>& real) {
  CheckPairs(generated, real);
  double total = 0.0;
  for (size_t i = 0; i < generated.size(); ++i) total += StepErrors(generated[i], real[i]).back();
  return total / static_cast<double>(generated.size());
}

int DefaultDivSamples(size_t count) {
  return static_cast<int>(std::min<size_t>(kPaperDivSamples, 4 * count));
}

double Div(const std::vector<Eigen::VectorXd>& features, int n, uint64_t seed) {
  if (features.empty()) throw Error(ErrorKind::kPrecondition, "DIV of an empty set");
  if (n < 1) throw Error(ErrorKind::kPrecondition, "DIV sample size must be >= 1");
  RequireSameWidth(features, "DIV");
  std::vector<Eigen::VectorXd> sorted = features;
  std::sort(sorted.begin(), sorted.end(), [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                        b.data() + b.size());
  });
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, sorted.size() - 1);
  std::vector<size_t> first(n), second(n);
  for (size_t& i : first) i = pick(rng);
  for (size_t& i : second) i = pick(rng);
  double sum = 0.0;
  for (int k = 0; k < n; ++k) sum += (sorted[first[k]] - sorted[second[k]]).norm();
  return sum / n;
}

double Quantile(std::vector<double> v, double p) {
  if (v.empty()) throw Error(ErrorKind::kPrecondition, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) + 1.0) * p;
  if (h <= 1.0) return v.front();
  if (h >= static_cast<double>(v.size())) return v.back();
  const size_t lo = static_cast<size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  return v[lo - 1] + frac * (v[lo] - v[lo - 1]);
}

FiveNumber Summarize(const std::vector<double>& values) {
  FiveNumber f;
  f.min = Quantile(values, 0.0);
  f.q1 = Quantile(values, 0.25);
  f.median = Quantile(values, 0.5);
  f.q3 = Quantile(values, 0.75);
  f.max = Quantile(values, 1.0);
  return f;
}

LengthStats ComputeLengthStats(const std::vector<double>& seconds) {
  LengthStats s;
  s.summary = Summarize(seconds);
  s.count = static_cast<int>(seconds.size());
  for (double x : seconds) {
    if (!(x >= 0.0 && x <= kHistogramMax)) {
      throw Error(ErrorKind::kRange, "episode length " + std::to_string(x) + " s outside [0, 15]");
    }
    s.mean += x;
    ++s.histogram[std::min<size_t>(s.histogram.size() - 1, static_cast<size_t>(x))];
  }
  s.mean /= static_cast<double>(seconds.size());
  return s;
}

Durability CompareDurability(const std::map<std::string, double>& a,
                             const std::map<std::string, double>& b, double threshold) {
  if (a.size() != b.size()) throw Error(ErrorKind::kPrecondition, "behavior tables differ in size");
  Durability d;
  for (const auto& [name, la] : a) {
    const auto it = b.find(name);
    if (it == b.end()) throw Error(ErrorKind::kNotFound, "behavior '" + name + "' missing from B");
    const double diff = la - it->second;
    if (diff > threshold) {
      ++d.a_wins;
      d.a_mean += diff;
    } else if (-diff > threshold) {
      ++d.b_wins;
      d.b_mean -= diff;
    }
  }
  if (d.a_wins > 0) d.a_mean /= d.a_wins;
  if (d.b_wins > 0) d.b_mean /= d.b_wins;
  return d;
}

nlohmann::json MetricsReport::ToJson() const {
  nlohmann::json models_json = nlohmann::json::array();
  for (const ModelScores& m : models) {
    nlohmann::json lengths = nlohmann::json::object();
    for (const auto& [split, s] : m.lengths) lengths[split] = StatsJson(s);
    models_json.push_back({{"name", m.name},
                           {"fid", Optional(m.fid)},
                           {"ade", Optional(m.ade)},
                           {"fde", Optional(m.fde)},
                           {"div", Optional(m.div)},
                           {"failures", m.failures},
                           {"episode_lengths", lengths},
                           {"per_behavior", m.per_behavior}});
  }
  nlohmann::json dur = nlohmann::json::array();
  for (const DurabilityEntry& e : durability) {
    dur.push_back({{"a", e.a},
                   {"b", e.b},
                   {"a_wins", e.result.a_wins},
                   {"b_wins", e.result.b_wins},
                   {"a_mean_difference", e.result.a_mean},
                   {"b_mean_difference", e.result.b_mean},
                   {"threshold_seconds", kDurabilityThreshold}});
  }
  return {{"models", models_json},
          {"real_div", Optional(real_div)},
          {"durability", dur},
          {"provenance", provenance}};
}

void MetricsReport::WriteJson(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << ToJson().dump(2) << '\n';
}

void MetricsReport::WriteCsv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "model,scope,metric,value\n";
  auto opt = [&](const std::string& model, const char* metric, const std::optional<double>& v) {
    out << model << ",pooled," << metric << ',';
    if (v) out << *v;
    out << '\n';
  };
  for (const ModelScores& m : models) {
    opt(m.name, "fid", m.fid);
    opt(m.name, "ade", m.ade);
    opt(m.name, "fde", m.fde);
    opt(m.name, "div", m.div);
    for (const auto& [split, s] : m.lengths) {
      const std::pair<const char*, double> cols[] = {
          {"length_min", s.summary.min},       {"length_q1", s.summary.q1},
          {"length_median", s.summary.median}, {"length_q3", s.summary.q3},
          {"length_max", s.summary.max},       {"length_mean", s.mean}};
      for (const auto& [k, v] : cols) out << m.name << ',' << split << ',' << k << ',' << v << '\n';
    }
    for (const auto& [behavior, values] : m.per_behavior) {
      for (const auto& [k, v] : values) out << m.name << ',' << behavior << ',' << k << ',' << v << '\n';
    }
  }
  if (real_div) out << "real,pooled,div," << *real_div << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

std::string BoxPlotSvg(const std::vector<std::pair<std::string, FiveNumber>>& boxes,
                       const std::string& title, const std::string& y_label) {
  if (boxes.empty()) throw Error(ErrorKind::kPrecondition, "box plot without data");
  const double w = 120.0 * boxes.size() + 100.0, h = 360.0;
  const double top = 40.0, bottom = h - 50.0, left = 70.0;
  double hi = 0.0;
  for (const auto& [name, f] : boxes) hi = std::max(hi, f.max);
  hi = std::max(1.0, std::ceil(hi));
  auto y = [&](double v) { return bottom - (bottom - top) * v / hi; };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">" << Escape(title)
    << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = hi * k / 5.0;
    s << "<text x=\"" << left - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << v
      << "</text>\n";
  }
  s << "<text transform=\"translate(18," << (top + bottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << Escape(y_label) << "</text>\n";
  for (size_t i = 0; i < boxes.size(); ++i) {
    const auto& [name, f] = boxes[i];
    const double cx = left + 60.0 + 120.0 * i;
    const char* color = kPalette[i % std::size(kPalette)];
    s << "<g class=\"box\">\n";
    s << "<line x1=\"" << cx << "\" y1=\"" << y(f.min) << "\" x2=\"" << cx << "\" y2=\""
      << y(f.max) << "\" stroke=\"" << color << "\"/>\n";
    s << "<rect x=\"" << cx - 30 << "\" y=\"" << y(f.q3) << "\" width=\"60\" height=\""
      << std::max(0.5, y(f.q1) - y(f.q3)) << "\" fill=\"white\" stroke=\"" << color << "\"/>\n";
    s << "<line x1=\"" << cx - 30 << "\" y1=\"" << y(f.median) << "\" x2=\"" << cx + 30
      << "\" y2=\"" << y(f.median) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << cx << "\" y=\"" << bottom + 18 << "\" text-anchor=\"middle\">"
      << Escape(name) << "</text>\n</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string LinePlotSvg(const std::vector<Series>& series, const std::string& title,
                        const std::string& x_label, const std::string& y_label) {
  if (series.empty()) throw Error(ErrorKind::kPrecondition, "line plot without data");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y1 = 0.0;
  for (const Series& sr : series) {
    if (sr.x.size() != sr.y.size() || sr.x.empty()) {
      throw Error(ErrorKind::kDimension, "series '" + sr.label + "' is empty or unbalanced");
    }
    for (double v : sr.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : sr.y) y1 = std::max(y1, v);
  }
  if (x1 <= x0) x1 = x0 + 1.0;
  y1 = std::max(1.0, std::ceil(y1));
  const double w = 520, h = 360, left = 70, right = w - 140, top = 40, bottom = h - 50;
  auto px = [&](double v) { return left + (right - left) * (v - x0) / (x1 - x0); };
  auto py = [&](double v) { return bottom - (bottom - top) * v / y1; };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">" << Escape(title)
    << "</text>\n";
  s << "<path d=\"M" << left << ' ' << top << " V" << bottom << " H" << right
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<text x=\"" << (left + right) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">"
    << Escape(x_label) << "</text>\n";
  s << "<text transform=\"translate(18," << (top + bottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << Escape(y_label) << "</text>\n";
  for (size_t i = 0; i < series.size(); ++i) {
    const Series& sr = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    s << "<g class=\"series\">\n<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (size_t k = 0; k < sr.x.size(); ++k) s << px(sr.x[k]) << ',' << py(sr.y[k]) << ' ';
    s << "\"/>\n";
    for (size_t k = 0; k < sr.x.size(); ++k) {
      s << "<circle cx=\"" << px(sr.x[k]) << "\" cy=\"" << py(sr.y[k]) << "\" r=\"3\" fill=\""
        << color << "\"/>\n";
    }
    s << "<text x=\"" << right + 10 << "\" y=\"" << top + 16 * (i + 1) << "\" fill=\"" << color
      << "\">" << Escape(sr.label) << "</text>\n</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace hmg::metrics
