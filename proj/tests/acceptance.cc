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

// Acceptance suite: one PASS/FAIL line per criterion. Criteria can be
// selected with --only 1,4,9; --workdir keeps artifacts (default: a fresh
// temporary directory).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.h"
#include "hmg/common/error.h"
#include "hmg/experts/behavior.h"
#include "hmg/experts/expert.h"
#include "hmg/gpt/model.h"
#include "hmg/harness/harness.h"
#include "hmg/metrics/metrics.h"
#include "hmg/physim/simulator.h"
#include "hmg/rollout/rollout.h"
#include "hmg/trainer/trainer.h"
#include "test_models.h"

namespace hmg {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome(const fs::path&)> run;
};

std::string Fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// ---------------------------------------------------------------- 1

Outcome GradientOracle(const fs::path&) {
  gpt::ModelConfig c;
  c.context_length = 4;
  c.embed_dim = 8;
  c.num_layers = 1;
  c.num_heads = 2;
  c.num_bins = 8;
  c.input_dim = 3;
  c.output_dim = 2;
  c.dropout = 0.0;
  const gpt::Normalizer in_stats{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)};
  const gpt::Normalizer out_stats{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
  gpt::Checkpoint ck = gpt::InitCheckpoint(c, in_stats, out_stats, gpt::Phase::kPretrained, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.3);
  for (gpt::Tensor& t : ck.weights.tensors()) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += n(rng);
  }
  gpt::Matrix inputs(8, 3);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = 2.0 * n(rng);
  gpt::Targets tg;
  std::uniform_int_distribution<int> bin(0, 7);
  for (int i = 0; i < 8 * 2; ++i) {
    tg.bins.push_back(bin(rng));
    tg.values.push_back(n(rng));
  }
  tg.mask.assign(8, 1.0);
  gpt::BackwardOptions opt;
  opt.mode = gpt::Mode::kEval;
  const gpt::LossResult r = gpt::Backward(ck, inputs, 2, tg, opt);
  const double h = 1e-3;
  double worst = 0.0;
  std::string where;
  size_t count = 0;
  auto& ts = ck.weights.tensors();
  for (size_t i = 0; i < ts.size(); ++i) {
    for (Eigen::Index k = 0; k < ts[i].value.size(); ++k) {
      double& w = ts[i].value.data()[k];
      const double w0 = w;
      w = w0 + h;
      const double up = gpt::Backward(ck, inputs, 2, tg, opt).loss;
      w = w0 - h;
      const double dn = gpt::Backward(ck, inputs, 2, tg, opt).loss;
      w = w0;
      const double fd = (up - dn) / (2 * h);
      const double an = r.grads.tensors[i].data()[k];
      // Relative error with a floor: entries whose gradient is ~0 are
      // dominated by the O(h^2) truncation of the difference itself.
      const double rel = std::abs(fd - an) / std::max(1e-2, std::max(std::abs(fd), std::abs(an)));
      if (rel > worst) {
        worst = rel;
        where = ts[i].name + "[" + std::to_string(k) + "]";
      }
      ++count;
    }
  }
  return {worst < 1e-4, std::to_string(count) + " parameters, worst relative error " +
                            Fmt("%.2e", worst) + " at " + where};
}

// ---------------------------------------------------------------- 2

Outcome MetricOracles(const fs::path&) {
  using metrics::FrechetDistance;
  std::vector<std::string> bad;
  const Eigen::MatrixXd i2 = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  const double f_id = FrechetDistance({z, i2}, {z, i2});
  const double f_shift = FrechetDistance({z, i2}, {Eigen::Vector2d(3, 4), i2});
  const double f_diag = FrechetDistance({z, 4 * i2}, {z, i2});
  if (std::abs(f_id) > 1e-6) bad.push_back("identity " + Fmt("%.3g", f_id));
  if (std::abs(f_shift - 25.0) > 1e-6) bad.push_back("shift " + Fmt("%.9g", f_shift));
  if (std::abs(f_diag - 2.0) > 1e-6) bad.push_back("diagonal " + Fmt("%.9g", f_diag));

  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::VectorXd> feats(50, Eigen::VectorXd(16));
  for (auto& v : feats) {
    for (int k = 0; k < 16; ++k) v[k] = g(rng);
  }
  const double self = metrics::Fid(feats, feats);
  if (std::abs(self) > 1e-6) bad.push_back("FID(A,A) " + Fmt("%.3g", self));

  std::uniform_int_distribution<int> len(5, 40);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<metrics::Trajectory> gen, real;
  auto random_traj = [&] {
    metrics::Trajectory t(len(rng), std::vector<double>(6));
    for (auto& row : t) {
      for (double& x : row) x = u(rng);
    }
    return t;
  };
  for (int i = 0; i < 10; ++i) {
    gen.push_back(random_traj());
    real.push_back(random_traj());
  }
  double ade = 0.0, fde = 0.0;
  for (int i = 0; i < 10; ++i) {
    const size_t n = std::min(gen[i].size(), real[i].size());
    double sum = 0.0;
    for (size_t t = 0; t < n; ++t) {
      double s = 0.0;
      for (int d = 0; d < 6; ++d) s += (gen[i][t][d] - real[i][t][d]) * (gen[i][t][d] - real[i][t][d]);
      sum += std::sqrt(s);
      if (t + 1 == n) fde += std::sqrt(s);
    }
    ade += sum / static_cast<double>(n);
  }
  ade /= 10;
  fde /= 10;
  const double e_ade = std::abs(metrics::Ade(gen, real) - ade);
  const double e_fde = std::abs(metrics::Fde(gen, real) - fde);
  if (e_ade > 1e-12) bad.push_back("ADE off by " + Fmt("%.3g", e_ade));
  if (e_fde > 1e-12) bad.push_back("FDE off by " + Fmt("%.3g", e_fde));
  std::ostringstream d;
  d << "FID identity " << Fmt("%.1e", f_id) << ", shift " << Fmt("%.9g", f_shift) << ", diagonal "
    << Fmt("%.9g", f_diag) << ", self " << Fmt("%.1e", self) << "; ADE/FDE error "
    << Fmt("%.1e", std::max(e_ade, e_fde));
  for (const auto& b : bad) d << "; FAIL " << b;
  return {bad.empty(), d.str()};
}

// ---------------------------------------------------------------- 3

Outcome SimulatorOracles(const fs::path&) {
  using namespace physim;
  std::vector<std::string> bad;
  // Ballistic drop.
  Simulator drop(DefaultBiped());
  drop.set_contact_enabled(false);
  SimState s = drop.ResetStanding();
  const double z0 = drop.CenterOfMass(s).y();
  for (int i = 0; i < 16; ++i) s = drop.Step(s, drop.model().standing_pose);
  const double fell = z0 - drop.CenterOfMass(s).y();
  const double expect = 0.5 * 9.81 * 0.25;
  const double drop_err = std::abs(fell - expect) / expect;
  if (drop_err >= 0.01) bad.push_back("drop");
  // Pinned PD.
  Simulator pend(testing::PendulumModel());
  pend.set_root_pinned(true);
  pend.set_contact_enabled(false);
  InitialPose p;
  p.z = 2.0;
  p.q = {0.0};
  s = pend.Reset(p);
  for (int i = 0; i < 2 * kControlHz; ++i) s = pend.Step(s, std::vector<double>{0.8});
  const double pd_err = std::abs(s.q[0] - 0.8);
  if (pd_err > 0.01) bad.push_back("pd");
  // Passive energy.
  Simulator passive(testing::PassiveBiped());
  passive.set_contact_enabled(false);
  InitialPose e;
  e.z = 3.0;
  e.vx = 0.5;
  e.vz = 1.0;
  e.omega = 0.8;
  e.q = passive.model().standing_pose;
  e.qd = {1.0, -2.0, 1.5, -1.0, 2.0, -1.5};
  s = passive.Reset(e);
  const double e0 = passive.MechanicalEnergy(s);
  double drift = 0.0;
  for (int i = 0; i < kControlHz; ++i) {
    s = passive.Step(s, std::vector<double>(6, 0.0));
    drift = std::max(drift, std::abs(passive.MechanicalEnergy(s) - e0) / std::abs(e0));
  }
  if (drift >= 0.01) bad.push_back("energy");
  std::ostringstream d;
  d << "drop error " << Fmt("%.3f%%", 100 * drop_err) << ", PD error " << Fmt("%.4f rad", pd_err)
    << ", energy drift " << Fmt("%.3f%%/s", 100 * drift);
  return {bad.empty(), d.str()};
}

// ---------------------------------------------------------------- 4

std::vector<fs::path> ArtifactFiles(const fs::path& root) {
  std::vector<fs::path> files;
  for (const char* sub : {"checkpoints", "reports", "figures"}) {
    if (!fs::exists(root / sub)) continue;
    for (const auto& e : fs::recursive_directory_iterator(root / sub)) {
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome DemoDeterminism(const fs::path& work) {
  std::vector<fs::path> roots;
  for (const char* name : {"demo-a", "demo-b"}) {
    const fs::path out = work / name;
    fs::remove_all(out);
    std::ostringstream sink, err;
    const int code = cli::Run({"--deterministic", "--seed", "7", "--out", out.string(), "demo"},
                              sink, err);
    if (code != 0) return {false, std::string(name) + " exited " + std::to_string(code) + ": " + err.str()};
    roots.push_back(out);
  }
  const auto a = ArtifactFiles(roots[0]);
  const auto b = ArtifactFiles(roots[1]);
  if (a != b) return {false, "artifact lists differ"};
  int ckpts = 0;
  for (const fs::path& f : a) {
    if (Slurp(roots[0] / f) != Slurp(roots[1] / f)) return {false, "differs: " + f.string()};
    ckpts += f.extension() == ".hmgw";
  }
  return {!a.empty(), std::to_string(a.size()) + " files bit-identical (" + std::to_string(ckpts) +
                          " checkpoints)"};
}

// ---------------------------------------------------------------- 5

Outcome OverfitConvergence(const fs::path& work) {
  const fs::path root = work / "overfit";
  fs::remove_all(root);
  experts::BuildOptions o;
  o.rollouts_per_behavior = 1;
  o.noise_scale = 0.02;
  o.seed = 5;
  o.max_steps = 48;
  const std::vector<experts::BehaviorSpec> two = {experts::FindBehavior("stand"),
                                                  experts::FindBehavior("walk-forward")};
  const physim::BodyModel body = physim::DefaultBiped();
  experts::BuildDataset(two, body, o, root / "act", "overfit");
  o.store_actions = false;
  experts::BuildDataset(two, body, o, root / "obs", "overfit-obs");

  trainer::TrainConfig c;
  c.phase = trainer::TrainPhase::kPretrain;
  c.model.context_length = 16;
  c.model.embed_dim = 32;
  c.model.num_layers = 2;
  c.model.num_heads = 4;
  c.model.num_bins = 64;
  c.model.dropout = 0.0;
  c.steps = 500;
  c.batch_size = 4;
  c.learning_rate = 3e-3;
  c.validate_every = 25;  // the last record covers the final 25 steps
  c.seed = 11;
  const double bound = 0.1 * std::log(64.0);
  const trainer::TrainResult pre = trainer::Pretrain(dataset::Dataset::Open(root / "obs"), c);
  trainer::TrainConfig f = trainer::TrainConfig::FinetuneFrom(c);
  f.steps = 500;
  f.finetune_lr = 1e-3;
  const trainer::TrainResult fin =
      trainer::Finetune(pre.checkpoint, dataset::Dataset::Open(root / "act"), nullptr, f);
  const double a = pre.log.records.back().ce_loss;
  const double b = fin.log.records.back().ce_loss;
  fs::remove_all(root);
  return {a < bound && b < bound, "2 episodes; pretrain CE " + Fmt("%.4f", a) + ", fine-tune CE " +
                                      Fmt("%.4f", b) + " (bound " + Fmt("%.4f", bound) + ")"};
}

// ---------------------------------------------------------------- 6

Outcome CentralOrdering(const fs::path& work) {
  const harness::ExperimentConfig config = harness::ExperimentConfig::Desk();
  const harness::ExperimentPlan plan = harness::ExperimentPlan::Default(config, work / "desk");
  const harness::MatrixResult r = harness::RunMatrix(plan);
  const harness::OrderingVerdict v = harness::CheckOrdering(r);
  std::ostringstream d;
  d << "validation mean length hmg " << Fmt("%.2f s", v.hmg_mean) << ", scratch-small "
    << Fmt("%.2f s", v.small_mean) << ", scratch-large " << Fmt("%.2f s", v.large_mean)
    << "; hmg > scratch-small in " << v.hmg_beats_small << "/" << v.seeds << " seeds; hmg "
    << (v.within_large ? "within" : "NOT within") << " 20% of scratch-large";
  if (r.reused_cells > 0) d << " (" << r.reused_cells << " cells reused)";
  return {v.pass, d.str()};
}

// ---------------------------------------------------------------- 7

Outcome HeadSwap(const fs::path& work) {
  gpt::ModelConfig c;
  c.context_length = 8;
  c.embed_dim = 16;
  c.num_layers = 2;
  c.num_heads = 2;
  c.num_bins = 16;
  c.input_dim = 30;
  c.output_dim = 30;
  c.dropout = 0.1;
  const gpt::Normalizer stats30{Eigen::VectorXd::Zero(30), Eigen::VectorXd::Ones(30)};
  const gpt::Normalizer stats6{Eigen::VectorXd::Zero(6), Eigen::VectorXd::Ones(6)};
  const gpt::Checkpoint pre = gpt::InitCheckpoint(c, stats30, stats30, gpt::Phase::kPretrained, 9);
  const gpt::Checkpoint sw = gpt::SwapHead(pre, 6, stats6, 10);
  int backbone = 0, mismatched = 0;
  for (const gpt::Tensor& t : pre.weights.tensors()) {
    if (!t.backbone) continue;
    ++backbone;
    mismatched += !(sw.weights.at(t.name).value == t.value);
  }
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  gpt::Matrix in(16, 30);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = n(rng);
  const bool hidden_same = gpt::Forward(pre, in, 2, gpt::Mode::kEval).hidden.back() ==
                           gpt::Forward(sw, in, 2, gpt::Mode::kEval).hidden.back();

  // Frozen fine-tune on real data.
  const fs::path root = work / "headswap";
  fs::remove_all(root);
  experts::BuildOptions o;
  o.rollouts_per_behavior = 1;
  o.max_steps = 48;
  o.seed = 2;
  experts::BuildDataset({experts::FindBehavior("walk-forward")}, physim::DefaultBiped(), o,
                        root / "act", "headswap");
  trainer::TrainConfig f;
  f.phase = trainer::TrainPhase::kFinetune;
  f.model = c;
  f.steps = 100;
  f.batch_size = 4;
  f.learning_rate = 3e-3;
  f.finetune_lr = 1e-3;
  f.freeze_backbone = true;
  f.validate_every = 0;
  const trainer::TrainResult fin =
      trainer::Finetune(pre, dataset::Dataset::Open(root / "act"), nullptr, f);
  int moved = 0;
  for (const gpt::Tensor& t : pre.weights.tensors()) {
    if (t.backbone) moved += !(fin.checkpoint.weights.at(t.name).value == t.value);
  }
  const bool head_trained =
      !(fin.checkpoint.weights.at("head.weight").value ==
        gpt::SwapHead(pre, 6, trainer::ToNormalizer(dataset::Dataset::Open(root / "act")
                                                        .manifest()
                                                        .stats->actions),
                      f.seed ^ 0x5eedull)
            .weights.at("head.weight")
            .value);
  fs::remove_all(root);
  std::ostringstream d;
  d << backbone << " backbone tensors, " << mismatched << " changed by swap; final hidden "
    << (hidden_same ? "identical" : "DIFFERENT") << "; after 100 frozen steps " << moved
    << " backbone tensors moved, head " << (head_trained ? "trained" : "NOT trained");
  return {mismatched == 0 && hidden_same && moved == 0 && head_trained, d.str()};
}

// ---------------------------------------------------------------- 8

Outcome HarnessOracle(const fs::path&) {
  const physim::BodyModel body = physim::DefaultBiped();
  const rollout::ExpertPolicy expert;
  const rollout::ZeroPolicy zero;
  std::vector<std::string> bad;
  int capped = 0, collapsed = 0, locomotion = 0;
  for (const experts::BehaviorSpec& b : experts::BehaviorLibrary()) {
    const experts::Episode ep = experts::GenerateRollout(b, body, 0.0, 1);
    const dataset::EpisodeData data = experts::ToEpisodeData(ep, true);
    const rollout::MotionPrompt prompt = rollout::MakePrompt(data, b, body);
    const int e = rollout::MotionCompletion(expert, prompt, b, body).length();
    if (e == rollout::kGenerationCap) {
      ++capped;
    } else {
      bad.push_back(b.name + " expert " + std::to_string(e));
    }
    if (b.locomotion()) {
      ++locomotion;
      const rollout::GeneratedEpisode z = rollout::MotionCompletion(zero, prompt, b, body);
      if (z.terminated_by_fall) {
        ++collapsed;
      } else {
        bad.push_back(b.name + " zero survived");
      }
    }
  }
  std::ostringstream d;
  d << "expert reached " << rollout::kGenerationCap << " steps on " << capped << "/"
    << experts::BehaviorLibrary().size() << " behaviors; zero actions fell on " << collapsed << "/"
    << locomotion << " locomotion behaviors";
  for (const auto& s : bad) d << "; " << s;
  return {bad.empty(), d.str()};
}

// ---------------------------------------------------------------- 9

Outcome DurabilityLogic(const fs::path&) {
  // Per-behavior mean lengths, s.
  const std::map<std::string, double> a = {
      {"b1", 14.0}, {"b2", 10.0}, {"b3", 2.0}, {"b4", 8.0}, {"b5", 7.5}, {"b6", 1.0}};
  const std::map<std::string, double> b = {
      {"b1", 7.0},   // A ahead by 7: counts for A
      {"b2", 4.0},   // ahead by exactly 6: tie, no count
      {"b3", 9.0},   // B ahead by 7: counts for B
      {"b4", 14.5},  // B ahead by 6.5: counts for B
      {"b5", 1.0},   // A ahead by 6.5: counts for A
      {"b6", 7.0}};  // B ahead by exactly 6: tie
  const metrics::Durability r = metrics::CompareDurability(a, b);
  const bool counts = r.a_wins == 2 && r.b_wins == 2;
  const bool means = std::abs(r.a_mean - 6.75) < 1e-12 && std::abs(r.b_mean - 6.75) < 1e-12;
  const metrics::Durability self = metrics::CompareDurability(a, a);
  const bool self_zero = self.a_wins == 0 && self.b_wins == 0;
  std::ostringstream d;
  d << "A wins " << r.a_wins << " (mean margin " << r.a_mean << " s), B wins " << r.b_wins
    << " (mean margin " << r.b_mean << " s); both exact-6 s ties excluded";
  return {counts && means && self_zero, d.str()};
}

}  // namespace
}  // namespace hmg

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  using hmg::Criterion;
  std::set<int> only;
  fs::path work;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else if (a == "--workdir" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--workdir DIR]\n";
      return 2;
    }
  }
  const bool keep = !work.empty();
  if (!keep) work = fs::temp_directory_path() / ("hmg_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  const std::vector<Criterion> criteria = {
      {1, "gradient oracle", 30, hmg::GradientOracle},
      {2, "metric oracles", 10, hmg::MetricOracles},
      {3, "simulator oracles", 30, hmg::SimulatorOracles},
      {4, "pipeline determinism (demo x2)", 600, hmg::DemoDeterminism},
      {5, "overfit convergence", 300, hmg::OverfitConvergence},
      {6, "central ordering (desk, 5 seeds)", 1800, hmg::CentralOrdering},
      {7, "head-swap contract", 60, hmg::HeadSwap},
      {8, "harness oracle", 120, hmg::HarnessOracle},
      {9, "durability logic", 1, hmg::DurabilityLogic},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    hmg::Outcome o;
    try {
      o = c.run(work);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = s <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("[%s] %d %s: %s; %.1f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), s, c.budget_s, in_time ? "" : ", EXCEEDED");
    std::fflush(stdout);
  }
  if (!keep) fs::remove_all(work);
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
