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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "hmg/common/error.h"
#include "hmg/common/hash.h"
#include "hmg/common/parallel.h"
#include "hmg/experts/expert.h"
#include "hmg/gpt/checkpoint_io.h"

namespace hmg::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void WriteText(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

json ReadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kNotFound, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

bool HasStamp(const Layout& layout, const std::string& hash) {
  return fs::exists(layout.stamps() / (hash + ".done"));
}

void WriteStamp(const Layout& layout, const std::string& hash) {
  WriteText(layout.stamps() / (hash + ".done"), "");
}

json Optional(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> OptionalFrom(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json DataToJson(const DataConfig& d) {
  return {{"large_rollouts", d.large_rollouts},
          {"small_rollouts", d.small_rollouts},
          {"validation_rollouts", d.validation_rollouts},
          {"noise_scale", d.noise_scale},
          {"seed", d.seed},
          {"max_steps", d.max_steps},
          {"behaviors", d.behaviors}};
}

void CheckKeys(const json& j, const json& known, const std::string& what) {
  if (!j.is_object()) throw Error(ErrorKind::kFormat, what + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) {
      throw Error(ErrorKind::kFormat, "unknown " + what + " key '" + item.key() + "'");
    }
  }
}

std::string DataHash(const ExperimentConfig& c) { return ContentHash({{"data", DataToJson(c.data)}}); }

std::string PretrainHash(const ExperimentConfig& c) {
  return ContentHash({{"data", DataHash(c)}, {"pretrain", trainer::TrainConfigToJson(c.pretrain)}});
}

std::string CellName(const Variant& v, std::uint64_t seed) {
  return v.name + "-s" + std::to_string(seed);
}

// Parses "small@0.25" style selectors.
std::pair<std::string, std::optional<double>> ParseSelector(const std::string& s) {
  const size_t at = s.find('@');
  const std::string base = s.substr(0, at);
  if (base != "large" && base != "small") {
    throw Error(ErrorKind::kPrecondition, "unknown dataset selector '" + s + "'");
  }
  if (at == std::string::npos) return {base, std::nullopt};
  double f = 0.0;
  try {
    size_t used = 0;
    f = std::stod(s.substr(at + 1), &used);
    if (used != s.size() - at - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(ErrorKind::kPrecondition, "bad fraction in dataset selector '" + s + "'");
  }
  if (!(f > 0.0 && f <= 1.0)) {
    throw Error(ErrorKind::kPrecondition, "fraction in '" + s + "' must be in (0, 1]");
  }
  return {base, f};
}

json SplitToJson(const SplitResult& r) {
  json rows = json::array();
  for (const rollout::EvaluationRow& row : r.rows) {
    rows.push_back({row.behavior, row.episode_id, row.generated_steps, row.fell});
  }
  return {{"rows", rows},
          {"mean_seconds", r.mean_seconds},
          {"behavior_seconds", r.behavior_seconds},
          {"fid", Optional(r.scores.fid)},
          {"ade", Optional(r.scores.ade)},
          {"fde", Optional(r.scores.fde)},
          {"div", Optional(r.scores.div)},
          {"real_div", Optional(r.real_div)},
          {"failures", r.scores.failures},
          {"per_behavior", r.scores.per_behavior}};
}

SplitResult SplitFromJson(const json& j, const std::string& split) {
  SplitResult r;
  std::vector<double> seconds;
  for (const json& row : j.at("rows")) {
    rollout::EvaluationRow e;
    e.behavior = row.at(0).get<std::string>();
    e.episode_id = row.at(1).get<std::string>();
    e.split = dataset::SplitFromName(split);
    e.generated_steps = row.at(2).get<int>();
    e.fell = row.at(3).get<bool>();
    seconds.push_back(e.seconds());
    r.rows.push_back(e);
  }
  r.mean_seconds = j.at("mean_seconds").get<double>();
  r.behavior_seconds = j.at("behavior_seconds").get<std::map<std::string, double>>();
  r.scores.fid = OptionalFrom(j, "fid");
  r.scores.ade = OptionalFrom(j, "ade");
  r.scores.fde = OptionalFrom(j, "fde");
  r.scores.div = OptionalFrom(j, "div");
  r.real_div = OptionalFrom(j, "real_div");
  r.scores.failures = j.at("failures").get<std::map<std::string, std::string>>();
  r.scores.per_behavior =
      j.at("per_behavior").get<std::map<std::string, std::map<std::string, double>>>();
  if (!seconds.empty()) r.scores.lengths[split] = metrics::ComputeLengthStats(seconds);
  return r;
}

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double PopulationStd(const std::vector<double>& v) {
  const double m = Mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------- configs

ExperimentConfig ExperimentConfig::Full() {
  ExperimentConfig c;
  c.pretrain.phase = trainer::TrainPhase::kPretrain;
  c.pretrain.steps = trainer::TrainConfig::kDefaultPretrainSteps;
  c.finetune = trainer::TrainConfig::FinetuneFrom(c.pretrain);
  c.scratch = c.pretrain;
  c.scratch.phase = trainer::TrainPhase::kScratch;
  return c;
}

ExperimentConfig ExperimentConfig::Desk() {
  ExperimentConfig c;
  c.data.large_rollouts = 20;
  c.data.small_rollouts = 2;
  c.data.validation_rollouts = 2;
  gpt::ModelConfig m;
  m.context_length = rollout::kPromptSteps;
  m.embed_dim = 48;
  m.num_layers = 2;
  m.num_heads = 4;
  m.num_bins = 64;
  m.dropout = 0.1;
  c.pretrain.phase = trainer::TrainPhase::kPretrain;
  c.pretrain.model = m;
  c.pretrain.steps = 3000;
  c.pretrain.batch_size = 16;
  c.pretrain.learning_rate = 1e-3;
  c.pretrain.validate_every = 250;
  c.pretrain.max_validation_windows = 16;
  // One shared pretrain gets twice the per-cell scratch budget; the fresh
  // action head needs half the scratch budget at just under the pretrain LR.
  c.finetune = trainer::TrainConfig::FinetuneFrom(c.pretrain);
  c.finetune.steps = 750;
  c.finetune.finetune_lr = 9e-4;
  c.scratch = c.pretrain;
  c.scratch.phase = trainer::TrainPhase::kScratch;
  c.scratch.steps = 1500;
  c.eval_per_behavior = 0;
  return c;
}

ExperimentConfig ExperimentConfig::Demo() {
  ExperimentConfig c;
  c.data.behaviors = {"stand", "walk-forward"};
  c.data.large_rollouts = 10;
  c.data.small_rollouts = 2;
  c.data.validation_rollouts = 2;
  gpt::ModelConfig m;
  m.context_length = rollout::kPromptSteps;
  m.embed_dim = 16;
  m.num_layers = 1;
  m.num_heads = 2;
  m.num_bins = 32;
  m.dropout = 0.0;
  c.pretrain.phase = trainer::TrainPhase::kPretrain;
  c.pretrain.model = m;
  c.pretrain.steps = 2000;
  c.pretrain.batch_size = 8;
  c.pretrain.learning_rate = 3e-3;
  c.pretrain.validate_every = 500;
  c.pretrain.max_validation_windows = 8;
  c.finetune = trainer::TrainConfig::FinetuneFrom(c.pretrain);
  c.finetune.finetune_lr = 1e-3;
  c.scratch = c.pretrain;
  c.scratch.phase = trainer::TrainPhase::kScratch;
  c.eval_per_behavior = 0;
  c.seeds = {1};
  return c;
}

ExperimentConfig ExperimentConfig::Preset(const std::string& name) {
  if (name == "full") return Full();
  if (name == "desk") return Desk();
  if (name == "demo") return Demo();
  throw Error(ErrorKind::kNotFound, "unknown preset '" + name + "' (full, desk, demo)");
}

json ExperimentConfig::ToJson() const {
  return {{"data", DataToJson(data)},
          {"pretrain", trainer::TrainConfigToJson(pretrain)},
          {"finetune", trainer::TrainConfigToJson(finetune)},
          {"scratch", trainer::TrainConfigToJson(scratch)},
          {"decode", {{"mode", rollout::DecodeModeName(decode.mode)},
                      {"temperature", decode.temperature}}},
          {"eval_per_behavior", eval_per_behavior},
          {"seeds", seeds},
          {"jobs", jobs}};
}

ExperimentConfig ExperimentConfig::FromJson(const json& j, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  const json known = base.ToJson();
  CheckKeys(j, known, "experiment config");
  try {
    if (j.contains("data")) {
      const json& d = j.at("data");
      CheckKeys(d, known.at("data"), "data config");
      c.data.large_rollouts = d.value("large_rollouts", c.data.large_rollouts);
      c.data.small_rollouts = d.value("small_rollouts", c.data.small_rollouts);
      c.data.validation_rollouts = d.value("validation_rollouts", c.data.validation_rollouts);
      c.data.noise_scale = d.value("noise_scale", c.data.noise_scale);
      c.data.seed = d.value("seed", c.data.seed);
      c.data.max_steps = d.value("max_steps", c.data.max_steps);
      if (d.contains("behaviors")) {
        c.data.behaviors = d.at("behaviors").get<std::vector<std::string>>();
      }
    }
    if (j.contains("pretrain")) c.pretrain = trainer::TrainConfigFromJson(j.at("pretrain"), c.pretrain);
    if (j.contains("finetune")) c.finetune = trainer::TrainConfigFromJson(j.at("finetune"), c.finetune);
    if (j.contains("scratch")) c.scratch = trainer::TrainConfigFromJson(j.at("scratch"), c.scratch);
    if (j.contains("decode")) {
      const json& d = j.at("decode");
      CheckKeys(d, known.at("decode"), "decode config");
      if (d.contains("mode")) c.decode.mode = rollout::DecodeModeFromName(d.at("mode").get<std::string>());
      c.decode.temperature = d.value("temperature", c.decode.temperature);
    }
    c.eval_per_behavior = j.value("eval_per_behavior", c.eval_per_behavior);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.jobs = j.value("jobs", c.jobs);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("experiment config: ") + e.what());
  }
  return c;
}

void ExperimentConfig::Validate() const {
  if (data.large_rollouts < 1 || data.small_rollouts < 1 || data.validation_rollouts < 0) {
    throw Error(ErrorKind::kPrecondition, "rollout counts must be >= 1 (validation >= 0)");
  }
  for (const std::string& b : data.behaviors) experts::FindBehavior(b);
  if (std::set<std::string>(data.behaviors.begin(), data.behaviors.end()).size() !=
      data.behaviors.size()) {
    throw Error(ErrorKind::kDuplicate, "behavior listed twice");
  }
  if (data.max_steps < rollout::kPromptSteps || data.max_steps > experts::kMaxEpisodeSteps) {
    throw Error(ErrorKind::kPrecondition, "max_steps must be in [32, 480]");
  }
  if (pretrain.phase != trainer::TrainPhase::kPretrain ||
      finetune.phase != trainer::TrainPhase::kFinetune ||
      scratch.phase != trainer::TrainPhase::kScratch) {
    throw Error(ErrorKind::kPrecondition, "pretrain/finetune/scratch configs carry the wrong phase");
  }
  pretrain.Validate();
  finetune.Validate();
  scratch.Validate();
  for (const trainer::TrainConfig* t : {&pretrain, &scratch}) {
    if (t->model.context_length < rollout::kPromptSteps) {
      throw Error(ErrorKind::kPrecondition, "context must hold the 32-step prompt");
    }
  }
  if (seeds.empty()) throw Error(ErrorKind::kPrecondition, "no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw Error(ErrorKind::kDuplicate, "seeds repeat");
  }
  if (jobs < 1) throw Error(ErrorKind::kPrecondition, "jobs must be >= 1");
}

const char* TrainingModeName(TrainingMode mode) {
  return mode == TrainingMode::kPretrainFinetune ? "pretrain+finetune" : "scratch";
}

TrainingMode TrainingModeFromName(const std::string& name) {
  if (name == "pretrain+finetune") return TrainingMode::kPretrainFinetune;
  if (name == "scratch") return TrainingMode::kScratch;
  throw Error(ErrorKind::kFormat, "unknown training mode '" + name + "'");
}

ExperimentPlan ExperimentPlan::Default(const ExperimentConfig& config, const fs::path& out) {
  ExperimentPlan p;
  p.variants = {{"hmg", TrainingMode::kPretrainFinetune, "small"},
                {"scratch-large", TrainingMode::kScratch, "large"},
                {"scratch-small", TrainingMode::kScratch, "small"}};
  p.config = config;
  p.out = out;
  return p;
}

json ExperimentPlan::ToJson() const {
  json vs = json::array();
  for (const Variant& v : variants) {
    vs.push_back({{"name", v.name}, {"mode", TrainingModeName(v.mode)}, {"dataset", v.dataset}});
  }
  json sp = json::array();
  for (dataset::Split s : splits) sp.push_back(dataset::SplitName(s));
  return {{"variants", vs}, {"splits", sp}, {"config", config.ToJson()}};
}

ExperimentPlan ExperimentPlan::FromJson(const json& j, const fs::path& out) {
  CheckKeys(j, {{"variants", 0}, {"splits", 0}, {"config", 0}, {"preset", 0}}, "plan");
  ExperimentPlan p;
  p.out = out;
  try {
    p.config = ExperimentConfig::Preset(j.value("preset", std::string("desk")));
    if (j.contains("config")) p.config = ExperimentConfig::FromJson(j.at("config"), p.config);
    if (j.contains("variants")) {
      for (const json& v : j.at("variants")) {
        CheckKeys(v, {{"name", 0}, {"mode", 0}, {"dataset", 0}}, "variant");
        p.variants.push_back({v.at("name").get<std::string>(),
                              TrainingModeFromName(v.at("mode").get<std::string>()),
                              v.value("dataset", std::string("small"))});
      }
    } else {
      p.variants = Default(p.config, out).variants;
    }
    if (j.contains("splits")) {
      p.splits.clear();
      for (const json& s : j.at("splits")) p.splits.push_back(dataset::SplitFromName(s.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("plan: ") + e.what());
  }
  return p;
}

void ExperimentPlan::Validate() const {
  config.Validate();
  if (variants.empty()) throw Error(ErrorKind::kPrecondition, "plan has no variants");
  if (splits.empty()) throw Error(ErrorKind::kPrecondition, "plan has no evaluation splits");
  std::set<std::string> names;
  for (const Variant& v : variants) {
    if (v.name.empty() || v.name.find_first_of("/\\ ,") != std::string::npos) {
      throw Error(ErrorKind::kPrecondition, "bad variant name '" + v.name + "'");
    }
    if (!names.insert(v.name).second) {
      throw Error(ErrorKind::kDuplicate, "variant '" + v.name + "' listed twice");
    }
    ParseSelector(v.dataset);
  }
}

std::string ContentHash(const json& j) {
  Fnv1a h;
  h.Add(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h.value()));
  return buf;
}

// ---------------------------------------------------------------- stages

Datasets PrepareDatasets(const ExperimentConfig& config, const Layout& layout) {
  const std::string hash = "data-" + DataHash(config);
  const fs::path large_dir = layout.data() / "large";
  const fs::path small_dir = layout.data() / "small";
  if (HasStamp(layout, hash)) {
    return {dataset::Dataset::Open(large_dir), dataset::Dataset::Open(small_dir)};
  }
  fs::remove_all(large_dir);
  fs::remove_all(small_dir);
  const physim::BodyModel body = physim::DefaultBiped();
  experts::BuildOptions o;
  o.noise_scale = config.data.noise_scale;
  o.validation_rollouts = config.data.validation_rollouts;
  o.max_steps = config.data.max_steps;
  o.jobs = config.jobs;
  o.rollouts_per_behavior = config.data.large_rollouts;
  o.seed = config.data.seed;
  std::vector<experts::BehaviorSpec> behaviors;
  if (config.data.behaviors.empty()) {
    behaviors = experts::BehaviorLibrary();
  } else {
    for (const std::string& b : config.data.behaviors) behaviors.push_back(experts::FindBehavior(b));
  }
  experts::BuildDataset(behaviors, body, o, large_dir, "large");
  // Disjoint noise streams for the small set.
  o.rollouts_per_behavior = config.data.small_rollouts;
  o.seed = config.data.seed + 1;
  experts::BuildDataset(behaviors, body, o, small_dir, "small");
  WriteStamp(layout, hash);
  return {dataset::Dataset::Open(large_dir), dataset::Dataset::Open(small_dir)};
}

gpt::Checkpoint EnsurePretrained(const ExperimentConfig& config, const Datasets& data,
                                 const Layout& layout) {
  const std::string hash = "pretrain-" + PretrainHash(config);
  const fs::path path = layout.checkpoints() / "pretrain.hmgw";
  if (HasStamp(layout, hash) && fs::exists(path)) return gpt::LoadCheckpoint(path);
  trainer::TrainResult r = trainer::Pretrain(data.large, config.pretrain);
  fs::create_directories(layout.checkpoints());
  fs::create_directories(layout.logs());
  gpt::SaveCheckpoint(r.checkpoint, path);
  r.log.WriteCsv(layout.logs() / "pretrain.csv");
  WriteStamp(layout, hash);
  return r.checkpoint;
}

SplitResult EvaluateModel(const gpt::Checkpoint& model, const gpt::Checkpoint* extractor,
                          const dataset::Dataset& ds, dataset::Split split,
                          const ExperimentConfig& config, std::uint64_t seed,
                          const rollout::BehaviorResolver& resolve) {
  const physim::BodyModel body = physim::DefaultBiped();
  const rollout::GptPolicy policy(std::make_shared<gpt::Checkpoint>(model), config.decode);
  rollout::EvaluateOptions eo;
  eo.completion.seed = seed;
  eo.jobs = config.jobs;
  eo.max_per_behavior = config.eval_per_behavior;
  eo.resolve = resolve;
  const rollout::Evaluation ev = rollout::BatchEvaluate(policy, ds, split, body, eo);

  SplitResult out;
  out.rows = ev.rows;
  out.scores.name = policy.id();
  const std::string split_name(dataset::SplitName(split));
  std::vector<double> seconds;
  std::map<std::string, std::vector<double>> by_behavior;
  for (const rollout::EvaluationRow& r : ev.rows) {
    seconds.push_back(r.seconds());
    by_behavior[r.behavior].push_back(r.seconds());
  }
  out.mean_seconds = ev.MeanSeconds();
  if (!seconds.empty()) out.scores.lengths[split_name] = metrics::ComputeLengthStats(seconds);
  for (const auto& [b, v] : by_behavior) {
    out.behavior_seconds[b] = Mean(v);
    out.scores.per_behavior[b]["length_seconds"] = Mean(v);
  }

  // Motion-prediction scores compare the generated continuation with the
  // stored continuation after the prompt.
  const physim::Simulator sim(body);
  const metrics::PoseSlice pose{sim.layout().joint_pose,
                                sim.layout().velocimeter - sim.layout().joint_pose};
  std::vector<Eigen::VectorXd> real_f, gen_f;
  std::vector<metrics::Trajectory> real_pose, gen_pose;
  struct PerBehavior {
    std::vector<Eigen::VectorXd> real_f, gen_f;
    std::vector<metrics::Trajectory> real_pose, gen_pose;
  };
  std::map<std::string, PerBehavior> pb;
  for (size_t i = 0; i < ev.rows.size(); ++i) {
    const dataset::EpisodeData e = ds.LoadEpisode(ev.rows[i].episode_id);
    metrics::Trajectory real;
    for (int t = rollout::kPromptSteps; t < e.length; ++t) {
      real.emplace_back(e.obs(t), e.obs(t) + e.d_obs);
    }
    const metrics::Trajectory& gen = ev.episodes[i].observations;
    PerBehavior& slot = pb[ev.rows[i].behavior];
    if (extractor != nullptr && !real.empty()) {
      real_f.push_back(metrics::ExtractFeatures(*extractor, real, e.id).values);
      slot.real_f.push_back(real_f.back());
    }
    if (extractor != nullptr && !gen.empty()) {
      gen_f.push_back(metrics::ExtractFeatures(*extractor, gen, e.id).values);
      slot.gen_f.push_back(gen_f.back());
    }
    if (!real.empty() && !gen.empty()) {
      real_pose.push_back(metrics::SelectPose(real, pose));
      gen_pose.push_back(metrics::SelectPose(gen, pose));
      slot.real_pose.push_back(real_pose.back());
      slot.gen_pose.push_back(gen_pose.back());
    }
  }
  metrics::ModelScores& s = out.scores;
  auto attempt = [&](const char* name, std::optional<double>& slot, auto&& fn) {
    try {
      slot = fn();
    } catch (const Error& e) {
      s.failures[name] = e.what();
    }
  };
  attempt("fid", s.fid, [&] {
    if (extractor == nullptr) throw Error(ErrorKind::kPrecondition, "no feature extractor");
    return metrics::Fid(real_f, gen_f);
  });
  attempt("ade", s.ade, [&] { return metrics::Ade(gen_pose, real_pose); });
  attempt("fde", s.fde, [&] { return metrics::Fde(gen_pose, real_pose); });
  attempt("div", s.div, [&] {
    if (extractor == nullptr) throw Error(ErrorKind::kPrecondition, "no feature extractor");
    if (gen_f.size() < 2) throw Error(ErrorKind::kPrecondition, "fewer than 2 generated episodes");
    return metrics::Div(gen_f, metrics::DefaultDivSamples(gen_f.size()), seed);
  });
  try {
    if (real_f.size() >= 2) {
      out.real_div = metrics::Div(real_f, metrics::DefaultDivSamples(real_f.size()), seed);
    }
  } catch (const Error&) {
  }
  for (const auto& [b, slot] : pb) {
    auto& m = s.per_behavior[b];
    if (slot.real_f.size() >= 2 && slot.gen_f.size() >= 2) {
      try {
        m["fid"] = metrics::Fid(slot.real_f, slot.gen_f);
      } catch (const Error&) {
      }
    }
    if (!slot.gen_pose.empty()) {
      m["ade"] = metrics::Ade(slot.gen_pose, slot.real_pose);
      m["fde"] = metrics::Fde(slot.gen_pose, slot.real_pose);
    }
  }
  return out;
}

json CellResult::ToJson() const {
  json sp = json::object();
  for (const auto& [name, r] : splits) sp[name] = SplitToJson(r);
  return {{"variant", variant}, {"seed", seed}, {"checkpoint", checkpoint}, {"splits", sp}};
}

CellResult CellResult::FromJson(const json& j) {
  CellResult c;
  try {
    c.variant = j.at("variant").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.checkpoint = j.at("checkpoint").get<std::string>();
    for (const auto& item : j.at("splits").items()) {
      c.splits[item.key()] = SplitFromJson(item.value(), item.key());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("cell report: ") + e.what());
  }
  return c;
}

const VariantSummary& MatrixResult::at(const std::string& name) const {
  for (const VariantSummary& v : variants) {
    if (v.name == name) return v;
  }
  throw Error(ErrorKind::kNotFound, "no variant '" + name + "' in the matrix");
}

MatrixResult RunMatrix(const ExperimentPlan& plan) {
  plan.Validate();
  const ExperimentConfig& config = plan.config;
  const Layout layout{plan.out};
  fs::create_directories(layout.logs());
  WriteText(layout.reports() / "plan.json", plan.ToJson().dump(2) + "\n");

  const Datasets data = PrepareDatasets(config, layout);
  const gpt::Checkpoint pretrained = EnsurePretrained(config, data, layout);
  const std::string pretrain_hash = PretrainHash(config);

  struct Cell {
    const Variant* variant;
    std::uint64_t seed;
    std::string name;
    std::string hash;
  };
  std::vector<Cell> cells;
  json split_names = json::array();
  for (dataset::Split s : plan.splits) split_names.push_back(dataset::SplitName(s));
  for (const Variant& v : plan.variants) {
    for (std::uint64_t seed : config.seeds) {
      const bool ft = v.mode == TrainingMode::kPretrainFinetune;
      trainer::TrainConfig tc = ft ? config.finetune : config.scratch;
      tc.seed = seed;
      const json key = {{"variant", v.name},
                        {"mode", TrainingModeName(v.mode)},
                        {"dataset", v.dataset},
                        {"seed", seed},
                        {"train", trainer::TrainConfigToJson(tc)},
                        {"data", DataHash(config)},
                        {"pretrain", ft ? json(pretrain_hash) : json(nullptr)},
                        {"extractor", pretrain_hash},
                        {"decode", config.ToJson().at("decode")},
                        {"eval_per_behavior", config.eval_per_behavior},
                        {"splits", split_names}};
      cells.push_back({&v, seed, CellName(v, seed), "cell-" + ContentHash(key)});
    }
  }

  MatrixResult result;
  std::vector<CellResult> done(cells.size());
  std::vector<char> reused(cells.size(), 0);
  for (size_t i = 0; i < cells.size(); ++i) {
    const fs::path report = layout.reports() / (cells[i].name + ".json");
    if (HasStamp(layout, cells[i].hash) && fs::exists(report)) {
      const json j = ReadJson(report);
      if (j.value("hash", std::string()) == cells[i].hash) {
        done[i] = CellResult::FromJson(j);
        reused[i] = 1;
      }
    }
  }
  // Cells run in parallel only when asked; evaluation then stays serial.
  ExperimentConfig inner = config;
  if (config.jobs > 1) inner.jobs = 1;
  std::vector<size_t> pending;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (!reused[i]) pending.push_back(i);
  }
  ParallelFor(pending.size(), config.jobs, [&](size_t k) {
    const Cell& cell = cells[pending[k]];
    const auto [base, fraction] = ParseSelector(cell.variant->dataset);
    const dataset::Dataset& ds = base == "large" ? data.large : data.small;
    std::optional<dataset::DatasetFraction> frac;
    if (fraction) frac = dataset::MakeFraction(ds.manifest(), *fraction, cell.seed);
    trainer::TrainResult tr;
    if (cell.variant->mode == TrainingMode::kPretrainFinetune) {
      trainer::TrainConfig tc = config.finetune;
      tc.seed = cell.seed;
      tr = trainer::Finetune(pretrained, ds, frac ? &*frac : nullptr, tc);
    } else {
      trainer::TrainConfig tc = config.scratch;
      tc.seed = cell.seed;
      tr = trainer::TrainScratch(ds, frac ? &*frac : nullptr, tc);
    }
    const fs::path ckpt_rel = fs::path("checkpoints") / (cell.name + ".hmgw");
    fs::create_directories(layout.checkpoints());
    gpt::SaveCheckpoint(tr.checkpoint, layout.root / ckpt_rel);
    tr.log.WriteCsv(layout.logs() / (cell.name + ".csv"));
    CellResult c;
    c.variant = cell.variant->name;
    c.seed = cell.seed;
    c.checkpoint = ckpt_rel.generic_string();
    for (dataset::Split s : plan.splits) {
      SplitResult r = EvaluateModel(tr.checkpoint, &pretrained, data.small, s, inner, cell.seed);
      rollout::WriteEvaluationCsv(
          layout.reports() / (cell.name + "-" + std::string(dataset::SplitName(s)) + ".csv"),
          r.rows);
      c.splits[std::string(dataset::SplitName(s))] = std::move(r);
    }
    json j = c.ToJson();
    j["hash"] = cell.hash;
    WriteText(layout.reports() / (cell.name + ".json"), j.dump(1) + "\n");
    WriteStamp(layout, cell.hash);
    done[pending[k]] = std::move(c);
  });
  result.trained_cells = static_cast<int>(pending.size());
  result.reused_cells = static_cast<int>(cells.size() - pending.size());

  // Aggregate over seeds.
  metrics::MetricsReport& report = result.report;
  const std::string primary(dataset::SplitName(plan.splits.front()));
  std::vector<double> real_divs;
  std::map<std::string, std::map<std::string, double>> behavior_means;
  size_t next = 0;
  for (const Variant& v : plan.variants) {
    VariantSummary summary;
    summary.name = v.name;
    for (size_t s = 0; s < config.seeds.size(); ++s) summary.cells.push_back(done[next++]);
    metrics::ModelScores scores;
    scores.name = v.name;
    for (dataset::Split sp : plan.splits) {
      const std::string name(dataset::SplitName(sp));
      std::vector<double> per_seed, pooled;
      for (const CellResult& c : summary.cells) {
        const SplitResult& r = c.splits.at(name);
        per_seed.push_back(r.mean_seconds);
        for (const rollout::EvaluationRow& row : r.rows) pooled.push_back(row.seconds());
      }
      summary.mean_seconds[name] = Mean(per_seed);
      summary.std_seconds[name] = PopulationStd(per_seed);
      if (!pooled.empty()) scores.lengths[name] = metrics::ComputeLengthStats(pooled);
    }
    // Seed means of the motion scores on the primary split.
    std::map<std::string, std::vector<double>> values;
    std::map<std::string, std::map<std::string, std::vector<double>>> per_behavior;
    for (const CellResult& c : summary.cells) {
      const SplitResult& r = c.splits.at(primary);
      const std::pair<const char*, const std::optional<double>*> named[] = {
          {"fid", &r.scores.fid}, {"ade", &r.scores.ade}, {"fde", &r.scores.fde},
          {"div", &r.scores.div}};
      for (const auto& [k, opt] : named) {
        if (*opt) values[k].push_back(**opt);
      }
      for (const auto& [k, msg] : r.scores.failures) {
        scores.failures[k] += (scores.failures[k].empty() ? "" : "; ") +
                              std::string("seed ") + std::to_string(c.seed) + ": " + msg;
      }
      for (const auto& [b, m] : r.scores.per_behavior) {
        for (const auto& [k, x] : m) per_behavior[b][k].push_back(x);
      }
      if (r.real_div && &v == &plan.variants.front()) real_divs.push_back(*r.real_div);
    }
    auto fill = [&](const char* k, std::optional<double>& slot) {
      if (!values[k].empty()) slot = Mean(values[k]);
    };
    fill("fid", scores.fid);
    fill("ade", scores.ade);
    fill("fde", scores.fde);
    fill("div", scores.div);
    for (const auto& [b, m] : per_behavior) {
      for (const auto& [k, xs] : m) scores.per_behavior[b][k] = Mean(xs);
      behavior_means[v.name][b] = scores.per_behavior[b]["length_seconds"];
    }
    report.models.push_back(scores);
    result.variants.push_back(std::move(summary));
  }
  if (!real_divs.empty()) report.real_div = Mean(real_divs);
  const Variant* anchor = nullptr;
  for (const Variant& v : plan.variants) {
    if (v.mode == TrainingMode::kPretrainFinetune) {
      anchor = &v;
      break;
    }
  }
  if (anchor != nullptr) {
    for (const Variant& v : plan.variants) {
      if (&v == anchor) continue;
      report.durability.push_back({anchor->name, v.name,
                                   metrics::CompareDurability(behavior_means[anchor->name],
                                                              behavior_means[v.name])});
    }
  }
  report.provenance = {{"datasets", {data.large.manifest().id, data.small.manifest().id}},
                       {"data_hash", DataHash(config)},
                       {"pretrain_hash", pretrain_hash},
                       {"seeds", config.seeds},
                       {"split", primary}};
  report.WriteJson(layout.reports() / "metrics.json");
  report.WriteCsv(layout.reports() / "metrics.csv");

  json summary = json::array();
  for (const VariantSummary& v : result.variants) {
    json seeds = json::array();
    for (const CellResult& c : v.cells) {
      json per_split = json::object();
      for (const auto& [name, r] : c.splits) per_split[name] = r.mean_seconds;
      seeds.push_back({{"seed", c.seed}, {"mean_seconds", per_split}, {"checkpoint", c.checkpoint}});
    }
    summary.push_back({{"variant", v.name},
                       {"mean_seconds", v.mean_seconds},
                       {"std_seconds", v.std_seconds},
                       {"seeds", seeds}});
  }
  json matrix = {{"variants", summary}};
  bool have_order = true;
  for (const char* n : {"hmg", "scratch-small", "scratch-large"}) {
    have_order = have_order && std::any_of(plan.variants.begin(), plan.variants.end(),
                                           [&](const Variant& v) { return v.name == n; });
  }
  if (have_order && primary == "validation") {
    const OrderingVerdict o = CheckOrdering(result);
    matrix["ordering"] = {{"seeds", o.seeds},
                          {"hmg_beats_scratch_small", o.hmg_beats_small},
                          {"hmg_mean", o.hmg_mean},
                          {"scratch_small_mean", o.small_mean},
                          {"scratch_large_mean", o.large_mean},
                          {"within_20_percent_of_large", o.within_large},
                          {"pass", o.pass}};
  }
  WriteText(layout.reports() / "matrix.json", matrix.dump(2) + "\n");

  for (dataset::Split sp : plan.splits) {
    const std::string name(dataset::SplitName(sp));
    std::vector<std::pair<std::string, metrics::FiveNumber>> boxes;
    for (const metrics::ModelScores& m : report.models) {
      const auto it = m.lengths.find(name);
      if (it != m.lengths.end()) boxes.emplace_back(m.name, it->second.summary);
    }
    if (!boxes.empty()) {
      WriteText(layout.figures() / ("lengths-" + name + ".svg"),
                metrics::BoxPlotSvg(boxes, "Generated episode length (" + name + ")",
                                    "seconds after the prompt"));
    }
  }
  return result;
}

json AblationCurve::ToJson() const {
  json pts = json::array();
  for (const AblationPoint& p : points) {
    pts.push_back({{"fraction", p.fraction},
                   {"seed_seconds", p.seed_seconds},
                   {"mean_seconds", p.mean_seconds}});
  }
  return {{"points", pts}};
}

AblationCurve RunAblation(const gpt::Checkpoint& pretrained, const dataset::Dataset& small,
                          std::vector<double> fractions, const ExperimentConfig& config,
                          const Layout& layout) {
  config.Validate();
  if (fractions.empty()) throw Error(ErrorKind::kPrecondition, "no ablation fractions");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw Error(ErrorKind::kPrecondition,
                  "ablation fraction " + std::to_string(f) + " outside (0, 1]");
    }
  }
  if (pretrained.provenance.phase != gpt::Phase::kPretrained) {
    throw Error(ErrorKind::kPrecondition, "ablation needs a pretrained checkpoint");
  }
  fs::create_directories(layout.logs());
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());
  AblationCurve curve;
  for (double f : fractions) {
    AblationPoint p;
    p.fraction = f;
    for (std::uint64_t seed : config.seeds) {
      trainer::TrainConfig tc = config.finetune;
      tc.seed = seed;
      // The full fraction is the plain fine-tune.
      std::optional<dataset::DatasetFraction> frac;
      if (f < 1.0) frac = dataset::MakeFraction(small.manifest(), f, seed);
      const trainer::TrainResult tr = trainer::Finetune(pretrained, small, frac ? &*frac : nullptr, tc);
      char tag[32];
      std::snprintf(tag, sizeof(tag), "ablation-f%.3g-s%llu", f, static_cast<unsigned long long>(seed));
      tr.log.WriteCsv(layout.logs() / (std::string(tag) + ".csv"));
      const SplitResult r = EvaluateModel(tr.checkpoint, &pretrained, small,
                                          dataset::Split::kValidation, config, seed);
      p.seed_seconds.push_back(r.mean_seconds);
    }
    p.mean_seconds = Mean(p.seed_seconds);
    curve.points.push_back(p);
  }
  WriteText(layout.reports() / "ablation.json", curve.ToJson().dump(2) + "\n");
  metrics::Series s{"pretrain + fine-tune", {}, {}};
  for (const AblationPoint& p : curve.points) {
    s.x.push_back(p.fraction);
    s.y.push_back(p.mean_seconds);
  }
  WriteText(layout.figures() / "ablation.svg",
            metrics::LinePlotSvg({s}, "Fine-tune data fraction vs. episode length",
                                 "fraction of the small train split", "mean length (s)"));
  return curve;
}

OrderingVerdict CheckOrdering(const MatrixResult& result) {
  const std::string split = "validation";
  const VariantSummary& hmg = result.at("hmg");
  const VariantSummary& small = result.at("scratch-small");
  const VariantSummary& large = result.at("scratch-large");
  OrderingVerdict v;
  v.seeds = static_cast<int>(hmg.cells.size());
  for (size_t i = 0; i < hmg.cells.size() && i < small.cells.size(); ++i) {
    v.hmg_beats_small += hmg.cells[i].splits.at(split).mean_seconds >
                         small.cells[i].splits.at(split).mean_seconds;
  }
  v.hmg_mean = hmg.mean_seconds.at(split);
  v.small_mean = small.mean_seconds.at(split);
  v.large_mean = large.mean_seconds.at(split);
  v.within_large = v.hmg_mean >= 0.8 * v.large_mean;
  const int needed = (4 * v.seeds + 4) / 5;  // 4 of 5, scaled
  v.pass = v.hmg_beats_small >= needed && v.hmg_mean > v.small_mean && v.within_large;
  return v;
}

}  // namespace hmg::harness
