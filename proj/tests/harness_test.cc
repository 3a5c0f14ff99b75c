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

#include "hmg/harness/harness.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "hmg/common/error.h"
#include "hmg/gpt/checkpoint_io.h"

namespace hmg::harness {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hmg_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig Tiny() {
  ExperimentConfig c = ExperimentConfig::Demo();
  c.pretrain.steps = 8;
  c.finetune.steps = 4;
  c.scratch.steps = 8;
  c.pretrain.validate_every = 0;
  c.finetune.validate_every = 0;
  c.scratch.validate_every = 0;
  c.data.max_steps = 40;
  c.data.large_rollouts = 2;
  c.data.small_rollouts = 1;
  c.data.validation_rollouts = 1;
  c.eval_per_behavior = 1;
  return c;
}

TEST(ConfigTest, PresetsValidateAndRoundTrip) {
  for (const char* name : {"full", "desk", "demo"}) {
    const ExperimentConfig c = ExperimentConfig::Preset(name);
    EXPECT_NO_THROW(c.Validate()) << name;
    const ExperimentConfig back = ExperimentConfig::FromJson(c.ToJson(), ExperimentConfig{});
    EXPECT_EQ(back.ToJson(), c.ToJson()) << name;
  }
  EXPECT_THROW(ExperimentConfig::Preset("huge"), Error);
}

TEST(ConfigTest, FullBudgetsKeepRatios) {
  const ExperimentConfig c = ExperimentConfig::Full();
  EXPECT_EQ(c.pretrain.steps, c.scratch.steps);
  EXPECT_EQ(c.finetune.steps * 5, c.pretrain.steps);
  EXPECT_DOUBLE_EQ(c.finetune.PeakLearningRate(), c.pretrain.learning_rate * 0.01);
  EXPECT_EQ(c.seeds.size(), 5u);
}

TEST(ConfigTest, UnknownKeysRejected) {
  const ExperimentConfig base = ExperimentConfig::Demo();
  EXPECT_THROW(ExperimentConfig::FromJson({{"bogus", 1}}, base), Error);
  EXPECT_THROW(ExperimentConfig::FromJson({{"data", {{"rollouts", 3}}}}, base), Error);
  const ExperimentConfig c =
      ExperimentConfig::FromJson({{"seeds", {7, 8}}, {"data", {{"small_rollouts", 3}}}}, base);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7, 8}));
  EXPECT_EQ(c.data.small_rollouts, 3);
  EXPECT_EQ(c.data.large_rollouts, base.data.large_rollouts);
}

TEST(ConfigTest, ValidateRejectsBadValues) {
  ExperimentConfig c = ExperimentConfig::Demo();
  c.seeds = {1, 1};
  EXPECT_THROW(c.Validate(), Error);
  c = ExperimentConfig::Demo();
  c.pretrain.model.context_length = 16;
  EXPECT_THROW(c.Validate(), Error);
  c = ExperimentConfig::Demo();
  c.data.max_steps = 20;
  EXPECT_THROW(c.Validate(), Error);
}

TEST(PlanTest, ValidationCatchesBadVariants) {
  ExperimentPlan p = ExperimentPlan::Default(Tiny(), TempDir("unused"));
  EXPECT_NO_THROW(p.Validate());
  p.variants.push_back({"hmg", TrainingMode::kScratch, "small"});
  EXPECT_THROW(p.Validate(), Error);
  p = ExperimentPlan::Default(Tiny(), TempDir("unused"));
  p.variants[0].dataset = "small@1.5";
  EXPECT_THROW(p.Validate(), Error);
  p.variants[0].dataset = "medium";
  EXPECT_THROW(p.Validate(), Error);
  p.variants[0].dataset = "small@0.5";
  EXPECT_NO_THROW(p.Validate());
}

TEST(PlanTest, JsonRoundTrip) {
  ExperimentPlan p = ExperimentPlan::Default(Tiny(), "x");
  p.variants.push_back({"half", TrainingMode::kPretrainFinetune, "small@0.5"});
  const ExperimentPlan back = ExperimentPlan::FromJson(p.ToJson(), "x");
  EXPECT_EQ(back.ToJson(), p.ToJson());
}

TEST(HashTest, StableAndSensitive) {
  const nlohmann::json a = {{"x", 1}, {"y", "z"}};
  EXPECT_EQ(ContentHash(a), ContentHash(nlohmann::json::parse(a.dump())));
  EXPECT_EQ(ContentHash(a).size(), 16u);
  EXPECT_NE(ContentHash(a), ContentHash({{"x", 2}, {"y", "z"}}));
}

// End-to-end: three variants produce three cell reports; a rerun reuses
// every cell and leaves the reports untouched.
TEST(MatrixTest, RunsAndResumes) {
  const fs::path out = TempDir("matrix");
  const ExperimentPlan plan = ExperimentPlan::Default(Tiny(), out);
  const MatrixResult first = RunMatrix(plan);
  ASSERT_EQ(first.variants.size(), 3u);
  EXPECT_EQ(first.trained_cells, 3);
  EXPECT_EQ(first.reused_cells, 0);
  for (const char* name : {"hmg", "scratch-large", "scratch-small"}) {
    const fs::path report = out / "reports" / (std::string(name) + "-s1.json");
    ASSERT_TRUE(fs::exists(report)) << report;
    EXPECT_TRUE(fs::exists(out / "checkpoints" / (std::string(name) + "-s1.hmgw")));
    const VariantSummary& v = first.at(name);
    ASSERT_EQ(v.cells.size(), 1u);
    const SplitResult& r = v.cells[0].splits.at("validation");
    EXPECT_FALSE(r.rows.empty());
    for (const auto& row : r.rows) {
      EXPECT_GE(row.generated_steps, 0);
      EXPECT_LE(row.generated_steps, rollout::kGenerationCap);
    }
  }
  EXPECT_TRUE(fs::exists(out / "reports" / "matrix.json"));
  EXPECT_TRUE(fs::exists(out / "reports" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(out / "figures" / "lengths-validation.svg"));
  const nlohmann::json matrix = nlohmann::json::parse(Slurp(out / "reports" / "matrix.json"));
  EXPECT_TRUE(matrix.contains("ordering"));

  const std::string before = Slurp(out / "reports" / "hmg-s1.json");
  const MatrixResult second = RunMatrix(plan);
  EXPECT_EQ(second.trained_cells, 0);
  EXPECT_EQ(second.reused_cells, 3);
  EXPECT_EQ(Slurp(out / "reports" / "hmg-s1.json"), before);
  for (const char* name : {"hmg", "scratch-large", "scratch-small"}) {
    EXPECT_EQ(second.at(name).mean_seconds.at("validation"),
              first.at(name).mean_seconds.at("validation"));
  }

  // Changing one variant's budget retrains only that variant's cells.
  ExperimentPlan changed = plan;
  changed.config.scratch.steps = 9;
  const MatrixResult third = RunMatrix(changed);
  EXPECT_EQ(third.trained_cells, 2);
  EXPECT_EQ(third.reused_cells, 1);
  fs::remove_all(out);
}

TEST(MatrixTest, ParallelCellsMatchSerial) {
  const fs::path a = TempDir("serial");
  const fs::path b = TempDir("parallel");
  ExperimentConfig c = Tiny();
  ExperimentPlan pa = ExperimentPlan::Default(c, a);
  pa.variants.resize(2);
  c.jobs = 2;
  ExperimentPlan pb = ExperimentPlan::Default(c, b);
  pb.variants.resize(2);
  const MatrixResult ra = RunMatrix(pa);
  const MatrixResult rb = RunMatrix(pb);
  for (const char* name : {"hmg", "scratch-large"}) {
    const auto& x = ra.at(name).cells[0].splits.at("validation");
    const auto& y = rb.at(name).cells[0].splits.at("validation");
    ASSERT_EQ(x.rows.size(), y.rows.size());
    for (size_t i = 0; i < x.rows.size(); ++i) {
      EXPECT_EQ(x.rows[i].generated_steps, y.rows[i].generated_steps);
    }
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(AblationTest, PointsAndFullFractionMatchesPlainFinetune) {
  const fs::path out = TempDir("ablation");
  const ExperimentConfig c = Tiny();
  const Layout layout{out};
  const Datasets data = PrepareDatasets(c, layout);
  const gpt::Checkpoint pre = EnsurePretrained(c, data, layout);
  EXPECT_THROW(RunAblation(pre, data.small, {0.5, 0.0}, c, layout), Error);
  EXPECT_THROW(RunAblation(pre, data.small, {}, c, layout), Error);
  const AblationCurve curve = RunAblation(pre, data.small, {1.0, 0.5}, c, layout);
  ASSERT_EQ(curve.points.size(), 2u);
  EXPECT_DOUBLE_EQ(curve.points[0].fraction, 0.5);
  EXPECT_DOUBLE_EQ(curve.points[1].fraction, 1.0);
  EXPECT_TRUE(fs::exists(out / "figures" / "ablation.svg"));

  trainer::TrainConfig tc = c.finetune;
  tc.seed = c.seeds[0];
  const trainer::TrainResult plain = trainer::Finetune(pre, data.small, nullptr, tc);
  const SplitResult r =
      EvaluateModel(plain.checkpoint, &pre, data.small, dataset::Split::kValidation, c, c.seeds[0]);
  EXPECT_DOUBLE_EQ(curve.points[1].mean_seconds, r.mean_seconds);

  // Scratch checkpoints cannot seed an ablation.
  trainer::TrainConfig sc = c.scratch;
  const trainer::TrainResult scratch = trainer::TrainScratch(data.small, nullptr, sc);
  EXPECT_THROW(RunAblation(scratch.checkpoint, data.small, {1.0}, c, layout), Error);
  fs::remove_all(out);
}

TEST(OrderingTest, VerdictRules) {
  auto make = [](const std::string& name, std::vector<double> means) {
    VariantSummary v;
    v.name = name;
    double s = 0;
    for (size_t i = 0; i < means.size(); ++i) {
      CellResult c;
      c.seed = i + 1;
      c.splits["validation"].mean_seconds = means[i];
      v.cells.push_back(c);
      s += means[i];
    }
    v.mean_seconds["validation"] = s / means.size();
    return v;
  };
  MatrixResult m;
  m.variants = {make("hmg", {10, 11, 9, 12, 4}), make("scratch-small", {5, 6, 5, 6, 7}),
                make("scratch-large", {11, 11, 11, 11, 11})};
  OrderingVerdict v = CheckOrdering(m);
  EXPECT_EQ(v.hmg_beats_small, 4);
  EXPECT_TRUE(v.within_large);  // 9.2 >= 0.8 * 11
  EXPECT_TRUE(v.pass);
  m.variants[0] = make("hmg", {10, 11, 5, 5, 4});
  v = CheckOrdering(m);
  EXPECT_EQ(v.hmg_beats_small, 2);
  EXPECT_FALSE(v.pass);
  m.variants[0] = make("hmg", {8, 8, 8, 8, 8});
  v = CheckOrdering(m);
  EXPECT_FALSE(v.within_large);
  EXPECT_FALSE(v.pass);
}

}  // namespace
}  // namespace hmg::harness
