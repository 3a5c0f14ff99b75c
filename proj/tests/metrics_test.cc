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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hmg/common/error.h"
#include "hmg/metrics/metrics.h"

namespace hmg::metrics {
namespace {

Moments Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) { return {std::move(mean), std::move(cov)}; }

std::vector<Eigen::VectorXd> RandomFeatures(int n, int d, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::VectorXd> out(n, Eigen::VectorXd(d));
  for (auto& v : out) {
    for (int k = 0; k < d; ++k) v[k] = g(rng);
  }
  return out;
}

Trajectory RandomTrajectory(int t, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Trajectory out(t, std::vector<double>(d));
  for (auto& row : out) {
    for (double& x : row) x = u(rng);
  }
  return out;
}

TEST(FidTest, AnalyticGaussians) {
  const Eigen::MatrixXd i2 = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  EXPECT_NEAR(FrechetDistance(Gaussian(zero, i2), Gaussian(zero, i2)), 0.0, 1e-6);
  EXPECT_NEAR(FrechetDistance(Gaussian(zero, i2), Gaussian(Eigen::Vector2d(3, 4), i2)), 25.0, 1e-9);
  EXPECT_NEAR(FrechetDistance(Gaussian(zero, 4 * i2), Gaussian(zero, i2)), 2.0, 1e-6);
}

TEST(FidTest, SelfDistanceAndSymmetry) {
  const auto a = RandomFeatures(50, 16, 1);
  const auto b = RandomFeatures(60, 16, 2);
  EXPECT_NEAR(Fid(a, a), 0.0, 1e-6);
  EXPECT_NEAR(Fid(a, b), Fid(b, a), 1e-9);
  EXPECT_GT(Fid(a, b), 0.0);
}

TEST(FidTest, MatchesCommutingClosedForm) {
  // Diagonal covariances commute: FID = |dmu|^2 + sum (sqrt(a) - sqrt(b))^2.
  Eigen::VectorXd a(3), b(3), mu(3);
  a << 1.0, 2.5, 0.3;
  b << 0.7, 4.0, 1.1;
  mu << 0.5, -1.0, 2.0;
  double expected = mu.squaredNorm();
  for (int k = 0; k < 3; ++k) {
    expected += std::pow(std::sqrt(a[k] + kFidEpsilon) - std::sqrt(b[k] + kFidEpsilon), 2);
  }
  const double fid = FrechetDistance(Gaussian(Eigen::VectorXd::Zero(3), a.asDiagonal()),
                                     Gaussian(mu, b.asDiagonal()));
  EXPECT_NEAR(fid, expected, 1e-10);
}

TEST(FidTest, Errors) {
  const auto a = RandomFeatures(10, 4, 3);
  const auto b = RandomFeatures(10, 5, 4);
  EXPECT_THROW(Fid(a, b), Error);
  EXPECT_THROW(Fid({a[0]}, a), Error);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(0, 0) = -1.0;
  try {
    FrechetDistance(Gaussian(Eigen::VectorXd::Zero(2), bad),
                    Gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
}

TEST(TrajectoryTest, AdeFdeMatchBruteForce) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(3, 12);
  std::vector<Trajectory> g, r;
  for (int i = 0; i < 10; ++i) {
    g.push_back(RandomTrajectory(len(rng), 6, rng));
    r.push_back(RandomTrajectory(len(rng), 6, rng));
  }
  double ade = 0.0, fde = 0.0;
  for (int i = 0; i < 10; ++i) {
    const size_t n = std::min(g[i].size(), r[i].size());
    double pair = 0.0;
    for (size_t t = 0; t < n; ++t) {
      double s = 0.0;
      for (int d = 0; d < 6; ++d) s += std::pow(g[i][t][d] - r[i][t][d], 2);
      pair += std::sqrt(s);
      if (t + 1 == n) fde += std::sqrt(s);
    }
    ade += pair / n;
  }
  EXPECT_NEAR(Ade(g, r), ade / 10, 1e-12);
  EXPECT_NEAR(Fde(g, r), fde / 10, 1e-12);
}

TEST(TrajectoryTest, OffsetOracles) {
  std::mt19937_64 rng(6);
  const Trajectory real = RandomTrajectory(8, 6, rng);
  EXPECT_EQ(Ade({real}, {real}), 0.0);
  EXPECT_EQ(Fde({real}, {real}), 0.0);
  Trajectory shifted = real;
  for (auto& row : shifted) row[2] += 0.1;
  EXPECT_NEAR(Ade({shifted}, {real}), 0.1, 1e-12);
  Trajectory last = real;
  last.back()[0] += 0.3;
  last.back()[4] -= 0.4;
  EXPECT_NEAR(Fde({last}, {real}), 0.5, 1e-12);
  EXPECT_NEAR(Ade({last}, {real}), 0.5 / 8, 1e-12);
}

TEST(TrajectoryTest, TruncationAndErrors) {
  std::mt19937_64 rng(7);
  const Trajectory real = RandomTrajectory(10, 3, rng);
  Trajectory early(real.begin(), real.begin() + 4);
  early.back()[1] += 1.0;
  EXPECT_NEAR(Fde({early}, {real}), 1.0, 1e-12);
  EXPECT_THROW(Ade({}, {}), Error);
  EXPECT_THROW(Ade({Trajectory{}}, {real}), Error);
  EXPECT_THROW(Ade({real}, {real, real}), Error);
  const Trajectory pose = SelectPose(real, {1, 2});
  EXPECT_EQ(pose[3], (std::vector<double>{real[3][1], real[3][2]}));
  EXPECT_THROW(SelectPose(real, {2, 2}), Error);
}

TEST(DivTest, Oracles) {
  const Eigen::VectorXd p = Eigen::Vector2d(1.0, 2.0);
  EXPECT_EQ(Div({p, p, p}, 50, 1), 0.0);
  const Eigen::VectorXd q = Eigen::Vector2d(4.0, 6.0);  // distance 5
  // n = 1: each draw is one of the four pair outcomes, so DIV is 0 or 5.
  double mean = 0.0;
  const int trials = 4000;
  for (int s = 0; s < trials; ++s) {
    const double d = Div({p, q}, 1, s);
    EXPECT_TRUE(d == 0.0 || std::abs(d - 5.0) < 1e-12);
    mean += d / trials;
  }
  EXPECT_NEAR(mean, 2.5, 0.2);
  EXPECT_THROW(Div({}, 5, 0), Error);
  EXPECT_THROW(Div({p}, 0, 0), Error);
}

TEST(DivTest, SeededAndOrderInvariant) {
  auto f = RandomFeatures(20, 4, 8);
  const double a = Div(f, 40, 3);
  EXPECT_EQ(Div(f, 40, 3), a);
  std::reverse(f.begin(), f.end());
  EXPECT_EQ(Div(f, 40, 3), a);
  EXPECT_NE(Div(f, 40, 4), a);
  EXPECT_EQ(DefaultDivSamples(10), 40);
  EXPECT_EQ(DefaultDivSamples(1000), 200);
}

TEST(LengthStatsTest, Quantiles) {
  std::vector<double> v;
  for (int i = 1; i <= 15; ++i) v.push_back(i);
  FiveNumber f = Summarize(v);
  EXPECT_DOUBLE_EQ(f.min, 1);
  EXPECT_DOUBLE_EQ(f.q1, 4);
  EXPECT_DOUBLE_EQ(f.median, 8);
  EXPECT_DOUBLE_EQ(f.q3, 12);
  EXPECT_DOUBLE_EQ(f.max, 15);
  std::reverse(v.begin(), v.end());
  EXPECT_DOUBLE_EQ(Summarize(v).q1, 4);
  f = Summarize({14.0});
  for (double x : {f.min, f.q1, f.median, f.q3, f.max}) EXPECT_EQ(x, 14.0);
  EXPECT_DOUBLE_EQ(Quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_THROW(Quantile({}, 0.5), Error);
}

TEST(LengthStatsTest, Histogram) {
  const LengthStats s = ComputeLengthStats({0.0, 0.5, 1.0, 13.99, 14.0, 15.0});
  EXPECT_EQ(s.histogram[0], 2);
  EXPECT_EQ(s.histogram[1], 1);
  EXPECT_EQ(s.histogram[13], 1);
  EXPECT_EQ(s.histogram[14], 2);
  EXPECT_EQ(s.count, 6);
  EXPECT_THROW(ComputeLengthStats({16.0}), Error);
}

TEST(DurabilityTest, ThresholdCounting) {
  const std::map<std::string, double> a = {{"walk", 10.0}, {"run", 2.0}, {"stand", 14.0}};
  auto r = CompareDurability(a, a);
  EXPECT_EQ(r.a_wins, 0);
  EXPECT_EQ(r.b_wins, 0);
  auto b = a;
  b["walk"] = 3.0;  // A ahead by 7
  r = CompareDurability(a, b);
  EXPECT_EQ(r.a_wins, 1);
  EXPECT_EQ(r.b_wins, 0);
  EXPECT_DOUBLE_EQ(r.a_mean, 7.0);
  b["walk"] = 4.0;  // exactly 6: not significant
  EXPECT_EQ(CompareDurability(a, b).a_wins, 0);
  b["run"] = 10.5;
  r = CompareDurability(a, b);
  EXPECT_EQ(r.b_wins, 1);
  EXPECT_DOUBLE_EQ(r.b_mean, 8.5);
  b.erase("stand");
  b["jump"] = 1.0;
  EXPECT_THROW(CompareDurability(a, b), Error);
}

TEST(FeatureTest, MiddleLayerMeanPooled) {
  EXPECT_EQ(MiddleLayer(4), 2);
  EXPECT_EQ(MiddleLayer(3), 2);
  EXPECT_EQ(MiddleLayer(1), 1);
  gpt::ModelConfig c;
  c.context_length = 8;
  c.embed_dim = 12;
  c.num_layers = 4;
  c.num_heads = 2;
  c.num_bins = 8;
  c.input_dim = 3;
  c.output_dim = 3;
  const gpt::Normalizer n{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)};
  const gpt::Checkpoint ck = gpt::InitCheckpoint(c, n, n, gpt::Phase::kPretrained, 3);
  std::mt19937_64 rng(2);
  Trajectory obs = RandomTrajectory(11, 3, rng);
  const FeatureVector f = ExtractFeatures(ck, obs, "e");
  EXPECT_EQ(f.values.size(), 12);
  EXPECT_EQ(f.layer, 2);
  gpt::Matrix x(8, 3);
  for (int t = 0; t < 8; ++t) {
    for (int d = 0; d < 3; ++d) x(t, d) = obs[t][d];
  }
  const gpt::ForwardResult r = gpt::Forward(ck, x, 1, gpt::Mode::kEval);
  EXPECT_TRUE(f.values.isApprox(r.hidden[1].colwise().mean().transpose(), 1e-14));
  EXPECT_EQ(ExtractFeatures(ck, obs).values, f.values);
  EXPECT_EQ(ExtractFeatures(ck, Trajectory(obs.begin(), obs.begin() + 2)).values.size(), 12);
  gpt::Checkpoint act = ck;
  act.config.head = gpt::HeadKind::kAction;
  EXPECT_THROW(ExtractFeatures(act, obs), Error);
  EXPECT_THROW(ExtractFeatures(ck, {}), Error);
}

TEST(ReportTest, JsonCsvAndFigures) {
  MetricsReport rep;
  ModelScores m;
  m.name = "hmg";
  m.fid = 1.5;
  m.ade = 0.2;
  m.fde = 0.3;
  m.failures["div"] = "too few episodes";
  m.lengths["validation"] = ComputeLengthStats({1.0, 2.0, 3.0});
  rep.models.push_back(m);
  const nlohmann::json j = rep.ToJson();
  EXPECT_TRUE(j["models"][0]["div"].is_null());
  EXPECT_EQ(j["models"][0]["failures"]["div"], "too few episodes");
  EXPECT_DOUBLE_EQ(j["models"][0]["episode_lengths"]["validation"]["median"], 2.0);
  const std::string svg = BoxPlotSvg({{"a", Summarize({1, 2, 3})}, {"b", Summarize({4})}},
                                     "lengths", "s");
  size_t boxes = 0;
  for (size_t p = svg.find("class=\"box\""); p != std::string::npos;
       p = svg.find("class=\"box\"", p + 1)) {
    ++boxes;
  }
  EXPECT_EQ(boxes, 2u);
  EXPECT_THROW(LinePlotSvg({{"x", {1.0}, {}}}, "t", "x", "y"), Error);
}

}  // namespace
}  // namespace hmg::metrics
