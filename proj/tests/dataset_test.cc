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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "hmg/common/error.h"
#include "hmg/dataset/dataset.h"

namespace hmg::dataset {
namespace {

namespace fs = std::filesystem;

EpisodeData MakeEpisode(const std::string& behavior, int index, int length, int d_obs,
                        int d_act, uint64_t seed = 1) {
  EpisodeData e;
  e.behavior = behavior;
  e.index = index;
  e.id = behavior + "-" + std::to_string(index);
  e.seed = seed;
  e.length = length;
  e.d_obs = d_obs;
  e.d_act = d_act;
  std::mt19937_64 rng(seed * 31 + index);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (int i = 0; i < length * d_obs; ++i) e.observations.push_back(n(rng));
  for (int i = 0; i < length * d_act; ++i) e.actions.push_back(n(rng));
  return e;
}

class DatasetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hmg_ds_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
  }
  void TearDown() override {
    Dataset::SetFaultHook(nullptr);
    fs::remove_all(dir_);
  }
  fs::path dir_;
};

TEST_F(DatasetTest, FirstEpisodeCountsOne) {
  Dataset ds = Dataset::Create(dir_, "d", 7, 3, 2);
  ds.WriteEpisode(MakeEpisode("walk", 0, 10, 3, 2), Split::kTrain);
  EXPECT_EQ(ds.manifest().count("walk"), 1);
  EXPECT_EQ(ds.manifest().count("run"), 0);
  ds.Verify();
}

TEST_F(DatasetTest, RejectsDimensionMismatchAndDuplicates) {
  Dataset ds = Dataset::Create(dir_, "d", 7, 3, 2);
  try {
    ds.WriteEpisode(MakeEpisode("walk", 0, 10, 4, 2), Split::kTrain);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
  ds.WriteEpisode(MakeEpisode("walk", 0, 10, 3, 2), Split::kTrain);
  EXPECT_THROW(ds.WriteEpisode(MakeEpisode("walk", 0, 10, 3, 2), Split::kTrain), Error);
  EXPECT_THROW(Dataset::Create(dir_, "again", 7, 3, 2), Error);
}

TEST_F(DatasetTest, FullWindowRoundTripsBitExactly) {
  Dataset ds = Dataset::Create(dir_, "d", 7, 3, 2);
  const EpisodeData e = MakeEpisode("walk", 0, 40, 3, 2);
  ds.WriteEpisode(e, Split::kTrain);
  const Dataset back = Dataset::Open(dir_);
  const Window w = back.LoadWindow(e.id, 0, 40);
  EXPECT_EQ(w.observations, e.observations);
  EXPECT_EQ(w.actions, e.actions);
  const Window prompt = back.LoadWindow(e.id, 0, 32);
  EXPECT_EQ(prompt.observations.size(), 32u * 3);
  const Window mid = back.LoadWindow(e.id, 5, 3);
  EXPECT_EQ(mid.observations[0], e.observations[15]);
  EXPECT_THROW(back.LoadWindow(e.id, 9, 32), Error);
  try {
    back.LoadWindow(e.id, 0, 41);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kRange);
  }
}

TEST_F(DatasetTest, ObservationOnlyDataset) {
  Dataset ds = Dataset::Create(dir_, "obs", 1, 3, 0);
  ds.WriteEpisode(MakeEpisode("walk", 0, 5, 3, 0), Split::kTrain);
  const EpisodeData e = Dataset::Open(dir_).LoadEpisode("walk-0");
  EXPECT_EQ(e.d_act, 0);
  EXPECT_TRUE(e.actions.empty());
  EXPECT_EQ(fs::file_size(ds.EpisodePath("walk-0")), 32u + 4u * 15);
}

TEST_F(DatasetTest, CrashBeforeRenameLeavesStoreReadable) {
  Dataset ds = Dataset::Create(dir_, "d", 7, 3, 2);
  ds.WriteEpisode(MakeEpisode("walk", 0, 10, 3, 2), Split::kTrain);
  Dataset::SetFaultHook([] { throw std::runtime_error("injected crash"); });
  EXPECT_THROW(ds.WriteEpisode(MakeEpisode("walk", 1, 10, 3, 2), Split::kTrain),
               std::runtime_error);
  Dataset::SetFaultHook(nullptr);
  const Dataset back = Dataset::Open(dir_);
  EXPECT_EQ(back.manifest().count("walk"), 1);
  EXPECT_FALSE(back.manifest().Contains("walk-1"));
  EXPECT_FALSE(fs::exists(back.EpisodePath("walk-1")));
  back.Verify();
  EXPECT_NO_THROW(back.LoadEpisode("walk-0"));
}

TEST_F(DatasetTest, ManifestCountsMatchFilesAfterWrites) {
  Dataset ds = Dataset::Create(dir_, "d", 7, 3, 2);
  for (int i = 0; i < 5; ++i) {
    ds.WriteEpisode(MakeEpisode(i % 2 ? "run" : "walk", i, 4 + i, 3, 2), Split::kTrain);
  }
  int files = 0;
  for (const auto& entry : fs::directory_iterator(dir_ / "episodes")) {
    files += entry.path().extension() == ".hmge";
  }
  const DatasetManifest& m = Dataset::Open(dir_).manifest();
  EXPECT_EQ(files, 5);
  EXPECT_EQ(m.count("walk") + m.count("run"), files);
  EXPECT_EQ(m.behaviors, (std::vector<std::string>{"walk", "run"}));
}

TEST_F(DatasetTest, ManifestJsonRoundTrip) {
  Dataset ds = Dataset::Create(dir_, "d", 12345678901234ull, 3, 2);
  ds.WriteEpisode(MakeEpisode("walk", 0, 10, 3, 2), Split::kTrain);
  ds.WriteEpisode(MakeEpisode("side", 0, 10, 3, 2), Split::kValidation);
  ds.FinalizeStats();
  EXPECT_EQ(DatasetManifest::FromJson(ds.manifest().ToJson()), ds.manifest());
  EXPECT_EQ(Dataset::Open(dir_).manifest(), ds.manifest());
}

TEST_F(DatasetTest, BadMagicAndTruncation) {
  Dataset ds = Dataset::Create(dir_, "d", 7, 3, 2);
  ds.WriteEpisode(MakeEpisode("walk", 0, 10, 3, 2), Split::kTrain);
  const fs::path p = ds.EpisodePath("walk-0");
  fs::resize_file(p, fs::file_size(p) - 4);
  try {
    ds.LoadEpisode("walk-0");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTruncated);
  }
  std::ofstream(p, std::ios::binary) << std::string(64, 'x');
  try {
    ds.LoadEpisode("walk-0");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}

DatasetManifest CountsManifest(int per_behavior) {
  DatasetManifest m;
  m.id = "m";
  for (const std::string b : {"walk", "run", "stand"}) {
    m.behaviors.push_back(b);
    m.counts[b] = per_behavior;
    for (int i = 0; i < per_behavior; ++i) {
      m.episodes.push_back({b + "-" + std::to_string(i), b, i, 0, 10, false, Split::kTrain});
    }
  }
  m.episodes.push_back({"side-0", "side", 0, 0, 10, false, Split::kValidation});
  return m;
}

TEST(FractionTest, CountsFollowRoundHalfUp) {
  const DatasetManifest m = CountsManifest(10);
  EXPECT_EQ(MakeFraction(m, 1.0, 3).selected.size(), 30u);
  EXPECT_EQ(MakeFraction(m, 0.5, 3).selected.size(), 15u);
  EXPECT_EQ(MakeFraction(m, 0.25, 3).selected.size(), 9u);  // 2.5 -> 3
  EXPECT_EQ(MakeFraction(CountsManifest(2), 0.25, 3).selected.size(), 3u);  // floor of 1
  EXPECT_THROW(MakeFraction(m, 0.0, 3), Error);
  EXPECT_THROW(MakeFraction(m, 1.5, 3), Error);
}

TEST(FractionTest, NestedAndDeterministic) {
  const DatasetManifest m = CountsManifest(10);
  const DatasetFraction half = MakeFraction(m, 0.5, 9);
  const DatasetFraction quarter = MakeFraction(m, 0.25, 9);
  EXPECT_EQ(half.selected, MakeFraction(m, 0.5, 9).selected);
  const std::set<std::string> h(half.selected.begin(), half.selected.end());
  for (const std::string& id : quarter.selected) EXPECT_TRUE(h.contains(id)) << id;
  EXPECT_NE(half.selected, MakeFraction(m, 0.5, 10).selected);
  for (const std::string& id : half.selected) EXPECT_NE(id, "side-0");
}

TEST_F(DatasetTest, StatsMatchHandComputation) {
  Dataset ds = Dataset::Create(dir_, "d", 7, 2, 1);
  EpisodeData a = MakeEpisode("walk", 0, 2, 2, 1);
  a.observations = {1, 5, 3, 5};
  a.actions = {0.5, 0.25};
  EpisodeData b = MakeEpisode("walk", 1, 1, 2, 1);
  b.observations = {5, 5};
  b.actions = {1};
  EpisodeData v = MakeEpisode("side", 0, 1, 2, 1);
  v.observations = {100, 100};
  v.actions = {100};
  ds.WriteEpisode(a, Split::kTrain);
  ds.WriteEpisode(b, Split::kTrain);
  ds.WriteEpisode(v, Split::kValidation);
  const NormalizationStats s = ds.FinalizeStats();
  EXPECT_DOUBLE_EQ(s.observations.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(s.observations.std[0], std::sqrt(8.0 / 3.0));
  EXPECT_EQ(s.observations.std[1], kStdFloor);  // constant dimension
  EXPECT_DOUBLE_EQ(s.observations.min[0], 1.0);
  EXPECT_DOUBLE_EQ(s.observations.max[0], 5.0);
  EXPECT_DOUBLE_EQ(s.actions.mean[0], 1.75 / 3.0);
}

TEST_F(DatasetTest, StatsInvariantToStorageOrder) {
  const fs::path other = dir_.string() + "_b";
  fs::remove_all(other);
  Dataset x = Dataset::Create(dir_, "x", 1, 3, 2);
  Dataset y = Dataset::Create(other, "y", 1, 3, 2);
  std::vector<EpisodeData> eps;
  for (int i = 0; i < 6; ++i) eps.push_back(MakeEpisode("walk", i, 7 + i, 3, 2, 100 + i));
  for (const auto& e : eps) x.WriteEpisode(e, Split::kTrain);
  for (auto it = eps.rbegin(); it != eps.rend(); ++it) y.WriteEpisode(*it, Split::kTrain);
  EXPECT_EQ(ComputeNormalizationStats(x), ComputeNormalizationStats(y));
  fs::remove_all(other);
}

TEST_F(DatasetTest, EmptyTrainSplitIsAnError) {
  Dataset ds = Dataset::Create(dir_, "d", 7, 3, 2);
  ds.WriteEpisode(MakeEpisode("side", 0, 3, 3, 2), Split::kValidation);
  EXPECT_THROW(ComputeNormalizationStats(ds), Error);
}

TEST_F(DatasetTest, CsvExport) {
  fs::create_directories(dir_);
  const EpisodeData e = MakeEpisode("walk", 0, 3, 2, 1);
  ExportCsv(e, dir_ / "e.csv");
  std::ifstream in(dir_ / "e.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,obs_0,obs_1,act_0");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 3);
}

}  // namespace
}  // namespace hmg::dataset
