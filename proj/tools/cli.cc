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

#include "cli.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hmg/common/error.h"
#include "hmg/dataset/dataset.h"
#include "hmg/experts/behavior.h"
#include "hmg/experts/expert.h"
#include "hmg/gpt/checkpoint_io.h"
#include "hmg/harness/harness.h"
#include "hmg/metrics/metrics.h"
#include "hmg/physim/render.h"
#include "hmg/rollout/rollout.h"
#include "hmg/trainer/trainer.h"

namespace hmg::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Flags shared by every subcommand.
struct Globals {
  std::uint64_t seed = 0;
  int jobs = 0;  // 0 = available parallelism
  bool deterministic = false;
  std::string out = "runs";
  std::string preset = "desk";
  std::string config_path;
  bool verbose = false;

  int Jobs() const {
    if (deterministic) return 1;
    if (jobs > 0) return jobs;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

// Training overrides; unset flags keep the preset / config file values.
struct TrainFlags {
  std::optional<int64_t> steps;
  std::optional<int> batch;
  std::optional<double> lr;
  std::optional<double> finetune_lr;
  std::optional<int> embed_dim;
  std::optional<int> layers;
  std::optional<int> heads;
  std::optional<int> bins;
  std::optional<int> context;
  std::optional<double> dropout;
  std::optional<int64_t> validate_every;
  bool freeze_backbone = false;
  std::string train_config;

  void Register(CLI::App* app, bool finetune) {
    app->add_option("--steps", steps, "Optimizer steps");
    app->add_option("--batch", batch, "Windows per batch");
    app->add_option("--lr", lr, "Peak learning rate (pretrain / scratch)");
    app->add_option("--validate-every", validate_every,
                    "Steps between validation passes (0 = never)");
    app->add_option("--train-config", train_config,
                    "Training config JSON; flags override it")
        ->check(CLI::ExistingFile);
    if (finetune) {
      app->add_option("--finetune-lr", finetune_lr, "Peak fine-tune learning rate");
      app->add_flag("--freeze-backbone", freeze_backbone,
                    "Train only the new output head");
    } else {
      app->add_option("--embed-dim", embed_dim, "Embedding width");
      app->add_option("--layers", layers, "Transformer blocks");
      app->add_option("--heads", heads, "Attention heads");
      app->add_option("--bins", bins, "Discretization bins per output dimension (K)");
      app->add_option("--context", context, "Context length, steps (>= 32 for rollouts)");
      app->add_option("--dropout", dropout, "Dropout probability");
    }
  }

  trainer::TrainConfig Apply(trainer::TrainConfig c, std::uint64_t seed) const {
    if (!train_config.empty()) {
      std::ifstream in(train_config);
      try {
        c = trainer::TrainConfigFromJson(json::parse(in), c);
      } catch (const json::exception& e) {
        throw Error(ErrorKind::kFormat, train_config + ": " + e.what());
      }
    }
    if (steps) c.steps = *steps;
    if (batch) c.batch_size = *batch;
    if (lr) c.learning_rate = *lr;
    if (finetune_lr) c.finetune_lr = *finetune_lr;
    if (validate_every) c.validate_every = *validate_every;
    if (freeze_backbone) c.freeze_backbone = true;
    if (embed_dim) c.model.embed_dim = *embed_dim;
    if (layers) c.model.num_layers = *layers;
    if (heads) c.model.num_heads = *heads;
    if (bins) c.model.num_bins = *bins;
    if (context) c.model.context_length = *context;
    if (dropout) c.model.dropout = *dropout;
    c.seed = seed;
    c.Validate();
    return c;
  }
};

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Behavior lookup that also knows the specs from an optional JSON file.
class Behaviors {
 public:
  explicit Behaviors(const std::string& file) {
    if (!file.empty()) extra_ = experts::LoadBehaviors(file);
  }
  const experts::BehaviorSpec& operator()(const std::string& name) const {
    for (const experts::BehaviorSpec& b : extra_) {
      if (b.name == name) return b;
    }
    return experts::FindBehavior(name);
  }
  rollout::BehaviorResolver resolver() const {
    return [this](const std::string& n) -> const experts::BehaviorSpec& { return (*this)(n); };
  }
  const std::vector<experts::BehaviorSpec>& extra() const { return extra_; }

 private:
  std::vector<experts::BehaviorSpec> extra_;
};

gpt::Checkpoint LoadChecked(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::kNotFound, "checkpoint not found: " + path);
  return gpt::LoadCheckpoint(path);
}

dataset::Dataset OpenChecked(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "manifest.json")) {
    throw Error(ErrorKind::kNotFound, "no dataset at " + dir);
  }
  return dataset::Dataset::Open(dir);
}

void WriteFile(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

json TrainSummary(const trainer::TrainResult& r) {
  json s = {{"steps", r.checkpoint.provenance.steps},
            {"phase", std::string(gpt::PhaseName(r.checkpoint.provenance.phase))},
            {"dataset", r.checkpoint.provenance.dataset_id}};
  if (!r.log.records.empty()) {
    s["final_ce_loss"] = r.log.records.back().ce_loss;
    const double v = r.log.records.back().val_mse;
    s["final_val_mse"] = std::isnan(v) ? json(nullptr) : json(v);
  }
  return s;
}

json SaveTrained(const trainer::TrainResult& r, const fs::path& out, const std::string& name) {
  const fs::path ckpt = out / "checkpoints" / (name + ".hmgw");
  const fs::path log = out / "logs" / (name + ".csv");
  fs::create_directories(ckpt.parent_path());
  fs::create_directories(log.parent_path());
  gpt::SaveCheckpoint(r.checkpoint, ckpt);
  r.log.WriteCsv(log);
  json s = TrainSummary(r);
  s["checkpoint"] = ckpt.string();
  s["log"] = log.string();
  return s;
}

std::string DefaultName(const std::string& given, const std::string& fallback) {
  return given.empty() ? fallback : given;
}

std::string FormatFraction(double f) {
  std::ostringstream os;
  os << f;
  return os.str();
}

// Owns option storage for the lifetime of one invocation.
class Arena {
 public:
  template <typename T>
  T* Make(T value = T()) {
    auto p = std::make_shared<T>(std::move(value));
    items_.push_back(p);
    return p.get();
  }

 private:
  std::vector<std::shared_ptr<void>> items_;
};

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Arena arena;
  CLI::App app{"Motion generation with a pretrained decoder-only transformer: expert data, "
               "training, rollouts and evaluation on a planar biped.",
               "hmg"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Globals g;
  app.add_option("--seed", g.seed, "Global seed; all randomness derives from it")
      ->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads (default: available cores)");
  app.add_flag("--deterministic", g.deterministic, "Force --jobs 1");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--preset", g.preset, "Default budgets: full, desk or demo")
      ->check(CLI::IsMember({"full", "desk", "demo"}))
      ->capture_default_str();
  app.add_option("--config", g.config_path,
                 "Experiment config JSON layered over the preset")
      ->check(CLI::ExistingFile);
  app.add_flag("-v,--verbose", g.verbose, "Progress messages on stderr");
  app.fallthrough();

  std::function<json()> action;
  std::string command;

  auto experiment = [&]() {
    harness::ExperimentConfig c = harness::ExperimentConfig::Preset(g.preset);
    if (!g.config_path.empty()) {
      std::ifstream in(g.config_path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw Error(ErrorKind::kFormat, g.config_path + ": " + e.what());
      }
      c = harness::ExperimentConfig::FromJson(j, c);
    }
    c.jobs = g.Jobs();
    return c;
  };
  auto log = [&](const std::string& msg) {
    if (g.verbose) err << "[hmg] " << msg << "\n";
  };

  // ---- list-behaviors
  {
    auto* sub = app.add_subcommand("list-behaviors", "Print the shipped behavior library");
    sub->callback([&, sub] {
      command = sub->get_name();
      action = [&] {
        json list = json::array();
        for (const experts::BehaviorSpec& b : experts::BehaviorLibrary()) {
          list.push_back({{"name", b.name},
                          {"category", experts::CategoryName(b.category)},
                          {"duration_s", b.duration},
                          {"validation_only", experts::IsValidationBehavior(b.name)}});
        }
        return json{{"behaviors", list}};
      };
    });
  }

  // ---- gen-data
  {
    auto* sub = app.add_subcommand("gen-data", "Generate an expert rollout dataset");
    auto* rollouts = arena.Make<int>(10);
    auto* val = arena.Make<int>(2);
    auto* noise = arena.Make<double>(experts::kDefaultNoiseScale);
    auto* max_steps = arena.Make<int>(experts::kMaxEpisodeSteps);
    auto* behaviors = arena.Make<std::string>();
    auto* behavior_file = arena.Make<std::string>();
    auto* name = arena.Make<std::string>();
    auto* obs_only = arena.Make<bool>(false);
    sub->add_option("--rollouts", *rollouts, "Rollouts per train behavior")->capture_default_str();
    sub->add_option("--validation-rollouts", *val,
                    "Extra held-out rollouts per train behavior")->capture_default_str();
    sub->add_option("--noise", *noise, "Action noise std, rad")->capture_default_str();
    sub->add_option("--max-steps", *max_steps, "Episode cap, steps at 32 Hz")
        ->capture_default_str();
    sub->add_option("--behaviors", *behaviors, "Comma-separated behavior names (default: all)");
    sub->add_option("--behavior-file", *behavior_file, "JSON behavior definitions to add")
        ->check(CLI::ExistingFile);
    sub->add_option("--name", *name, "Dataset id and directory name under <out>/data");
    sub->add_flag("--obs-only", *obs_only, "Store observations only (no actions)");
    sub->callback([&, sub, rollouts, val, noise, max_steps, behaviors, behavior_file, name,
                   obs_only] {
      command = sub->get_name();
      action = [&, rollouts, val, noise, max_steps, behaviors, behavior_file, name, obs_only] {
        const Behaviors lib(*behavior_file);
        std::vector<experts::BehaviorSpec> specs;
        const std::vector<std::string> names = SplitList(*behaviors);
        if (names.empty()) {
          specs = experts::BehaviorLibrary();
          specs.insert(specs.end(), lib.extra().begin(), lib.extra().end());
        } else {
          for (const std::string& n : names) specs.push_back(lib(n));
        }
        experts::BuildOptions o;
        o.rollouts_per_behavior = *rollouts;
        o.validation_rollouts = *val;
        o.noise_scale = *noise;
        o.max_steps = *max_steps;
        o.store_actions = !*obs_only;
        o.seed = g.seed;
        o.jobs = g.Jobs();
        const std::string id = DefaultName(*name, "rollouts-" + std::to_string(*rollouts));
        const fs::path dir = fs::path(g.out) / "data" / id;
        log("generating " + dir.string());
        const dataset::DatasetManifest m =
            experts::BuildDataset(specs, physim::DefaultBiped(), o, dir, id);
        return json{{"dataset", dir.string()},
                    {"episodes", m.episodes.size()},
                    {"behaviors", m.behaviors},
                    {"d_obs", m.d_obs},
                    {"d_act", m.d_act}};
      };
    });
  }

  // ---- pretrain / train-scratch / finetune
  {
    auto* sub = app.add_subcommand("pretrain", "Train the observation model on a dataset");
    auto* data = arena.Make<std::string>();
    auto* name = arena.Make<std::string>();
    auto* flags = arena.Make<TrainFlags>();
    sub->add_option("--data", *data, "Dataset directory")->required();
    sub->add_option("--name", *name, "Checkpoint name (default: pretrain)");
    flags->Register(sub, false);
    sub->callback([&, sub, data, name, flags] {
      command = sub->get_name();
      action = [&, data, name, flags] {
        const trainer::TrainConfig tc = flags->Apply(experiment().pretrain, g.seed);
        const dataset::Dataset ds = OpenChecked(*data);
        log("pretraining for " + std::to_string(tc.steps) + " steps");
        return SaveTrained(trainer::Pretrain(ds, tc), g.out, DefaultName(*name, "pretrain"));
      };
    });
  }
  {
    auto* sub = app.add_subcommand("train-scratch", "Train an action model from scratch");
    auto* data = arena.Make<std::string>();
    auto* name = arena.Make<std::string>();
    auto* fraction = arena.Make<double>(1.0);
    auto* flags = arena.Make<TrainFlags>();
    sub->add_option("--data", *data, "Dataset directory")->required();
    sub->add_option("--name", *name, "Checkpoint name (default: scratch)");
    sub->add_option("--fraction", *fraction, "Fraction of the train split, (0, 1]")
        ->capture_default_str();
    flags->Register(sub, false);
    sub->callback([&, sub, data, name, fraction, flags] {
      command = sub->get_name();
      action = [&, data, name, fraction, flags] {
        trainer::TrainConfig tc = experiment().scratch;
        tc = flags->Apply(tc, g.seed);
        const dataset::Dataset ds = OpenChecked(*data);
        std::optional<dataset::DatasetFraction> frac;
        if (*fraction != 1.0) frac = dataset::MakeFraction(ds.manifest(), *fraction, g.seed);
        log("training from scratch for " + std::to_string(tc.steps) + " steps");
        return SaveTrained(trainer::TrainScratch(ds, frac ? &*frac : nullptr, tc), g.out,
                           DefaultName(*name, "scratch"));
      };
    });
  }
  {
    auto* sub = app.add_subcommand("finetune",
                                   "Swap in an action head and fine-tune a pretrained model");
    auto* ckpt = arena.Make<std::string>();
    auto* data = arena.Make<std::string>();
    auto* name = arena.Make<std::string>();
    auto* fraction = arena.Make<double>(1.0);
    auto* flags = arena.Make<TrainFlags>();
    sub->add_option("--checkpoint", *ckpt, "Pretrained checkpoint (.hmgw)")->required();
    sub->add_option("--data", *data, "Dataset directory with actions")->required();
    sub->add_option("--name", *name, "Checkpoint name (default: finetune[-f<fraction>])");
    sub->add_option("--fraction", *fraction, "Fraction of the train split, (0, 1]")
        ->capture_default_str();
    flags->Register(sub, true);
    sub->callback([&, sub, ckpt, data, name, fraction, flags] {
      command = sub->get_name();
      action = [&, ckpt, data, name, fraction, flags] {
        const trainer::TrainConfig tc = flags->Apply(experiment().finetune, g.seed);
        const gpt::Checkpoint pre = LoadChecked(*ckpt);
        const dataset::Dataset ds = OpenChecked(*data);
        std::optional<dataset::DatasetFraction> frac;
        if (*fraction != 1.0) frac = dataset::MakeFraction(ds.manifest(), *fraction, g.seed);
        const std::string fallback =
            *fraction == 1.0 ? "finetune" : "finetune-f" + FormatFraction(*fraction);
        log("fine-tuning for " + std::to_string(tc.steps) + " steps");
        json s = SaveTrained(trainer::Finetune(pre, ds, frac ? &*frac : nullptr, tc), g.out,
                             DefaultName(*name, fallback));
        s["fraction"] = *fraction;
        return s;
      };
    });
  }

  // ---- rollout
  {
    auto* sub = app.add_subcommand("rollout", "Complete one stored episode from its prompt");
    auto* ckpt = arena.Make<std::string>();
    auto* data = arena.Make<std::string>();
    auto* episode = arena.Make<std::string>();
    auto* policy = arena.Make<std::string>("gpt");
    auto* decode = arena.Make<std::string>("greedy");
    auto* temperature = arena.Make<double>(1.0);
    auto* behavior_file = arena.Make<std::string>();
    sub->add_option("--data", *data, "Dataset directory")->required();
    sub->add_option("--episode", *episode, "Episode id")->required();
    sub->add_option("--policy", *policy, "Action source: gpt, expert or zero")
        ->check(CLI::IsMember({"gpt", "expert", "zero"}))
        ->capture_default_str();
    sub->add_option("--checkpoint", *ckpt, "Action checkpoint (.hmgw), for --policy gpt");
    sub->add_option("--decode", *decode, "greedy, expected or sample")
        ->check(CLI::IsMember({"greedy", "expected", "sample"}))
        ->capture_default_str();
    sub->add_option("--temperature", *temperature, "Softmax temperature for sample decoding")
        ->capture_default_str();
    sub->add_option("--behavior-file", *behavior_file, "JSON behavior definitions")
        ->check(CLI::ExistingFile);
    sub->callback([&, sub, ckpt, data, episode, policy, decode, temperature, behavior_file] {
      command = sub->get_name();
      action = [&, ckpt, data, episode, policy, decode, temperature, behavior_file] {
        std::unique_ptr<rollout::ActionSource> source;
        if (*policy == "gpt") {
          if (ckpt->empty()) throw CLI::RequiredError("--checkpoint (needed by --policy gpt)");
          source = std::make_unique<rollout::GptPolicy>(
              std::make_shared<gpt::Checkpoint>(LoadChecked(*ckpt)),
              rollout::DecodeOptions{rollout::DecodeModeFromName(*decode), *temperature});
        } else if (*policy == "expert") {
          source = std::make_unique<rollout::ExpertPolicy>();
        } else {
          source = std::make_unique<rollout::ZeroPolicy>();
        }
        const Behaviors lib(*behavior_file);
        const dataset::Dataset ds = OpenChecked(*data);
        const dataset::EpisodeData e = ds.LoadEpisode(*episode);
        const experts::BehaviorSpec& b = lib(e.behavior);
        const physim::BodyModel body = physim::DefaultBiped();
        const rollout::MotionPrompt prompt = rollout::MakePrompt(e, b, body);
        rollout::CompletionOptions co;
        co.seed = g.seed;
        const rollout::GeneratedEpisode gen = rollout::MotionCompletion(*source, prompt, b, body, co);
        const fs::path csv = fs::path(g.out) / "rollouts" / (*episode + ".csv");
        std::ostringstream os;
        os.precision(9);
        os << "step";
        for (size_t k = 0; k < (gen.observations.empty() ? 0 : gen.observations[0].size()); ++k) {
          os << ",obs" << k;
        }
        for (size_t k = 0; k < (gen.actions.empty() ? 0 : gen.actions[0].size()); ++k) {
          os << ",act" << k;
        }
        os << "\n";
        for (int t = 0; t < gen.length(); ++t) {
          os << rollout::kPromptSteps + t;
          for (double v : gen.observations[t]) os << "," << v;
          for (double v : gen.actions[t]) os << "," << v;
          os << "\n";
        }
        WriteFile(csv, os.str());
        return json{{"episode", *episode},
                    {"behavior", e.behavior},
                    {"source", source->id()},
                    {"generated_steps", gen.length()},
                    {"generated_seconds", gen.length() / rollout::kControlHz},
                    {"fell", gen.terminated_by_fall},
                    {"csv", csv.string()}};
      };
    });
  }

  // ---- evaluate
  {
    auto* sub = app.add_subcommand("evaluate",
                                   "Motion completion on every episode of a split, with metrics");
    auto* ckpt = arena.Make<std::string>();
    auto* extractor = arena.Make<std::string>();
    auto* data = arena.Make<std::string>();
    auto* split = arena.Make<std::string>("validation");
    auto* name = arena.Make<std::string>();
    auto* behavior_file = arena.Make<std::string>();
    sub->add_option("--checkpoint", *ckpt, "Action checkpoint (.hmgw)")->required();
    sub->add_option("--extractor", *extractor,
                    "Pretrained observation checkpoint for FID/DIV features");
    sub->add_option("--data", *data, "Dataset directory")->required();
    sub->add_option("--split", *split, "train or validation")
        ->check(CLI::IsMember({"train", "validation"}))
        ->capture_default_str();
    sub->add_option("--name", *name, "Report name (default: checkpoint file stem)");
    sub->add_option("--behavior-file", *behavior_file, "JSON behavior definitions")
        ->check(CLI::ExistingFile);
    sub->callback([&, sub, ckpt, extractor, data, split, name, behavior_file] {
      command = sub->get_name();
      action = [&, ckpt, extractor, data, split, name, behavior_file] {
        const gpt::Checkpoint model = LoadChecked(*ckpt);
        const dataset::Dataset ds = OpenChecked(*data);
        const Behaviors lib(*behavior_file);
        const harness::ExperimentConfig c = experiment();
        const std::string report_name = DefaultName(*name, fs::path(*ckpt).stem().string());
        const dataset::Split sp = dataset::SplitFromName(*split);
        std::optional<gpt::Checkpoint> features;
        if (!extractor->empty()) features = LoadChecked(*extractor);
        harness::SplitResult r = harness::EvaluateModel(model, features ? &*features : nullptr, ds,
                                                        sp, c, g.seed, lib.resolver());
        r.scores.name = report_name;
        const fs::path dir = fs::path(g.out) / "reports";
        rollout::WriteEvaluationCsv(dir / (report_name + "-" + *split + ".csv"), r.rows);
        metrics::MetricsReport report;
        report.models.push_back(r.scores);
        report.real_div = r.real_div;
        report.provenance = {{"checkpoint", *ckpt}, {"dataset", ds.manifest().id},
                             {"split", *split}, {"seed", g.seed}};
        report.WriteJson(dir / (report_name + "-metrics.json"));
        report.WriteCsv(dir / (report_name + "-metrics.csv"));
        auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        return json{{"episodes", r.rows.size()},
                    {"mean_seconds", r.mean_seconds},
                    {"fid", opt(r.scores.fid)},
                    {"ade", opt(r.scores.ade)},
                    {"fde", opt(r.scores.fde)},
                    {"div", opt(r.scores.div)},
                    {"failures", r.scores.failures},
                    {"report", (dir / (report_name + "-metrics.json")).string()}};
      };
    });
  }

  // ---- ablation
  {
    auto* sub = app.add_subcommand("ablation",
                                   "Fine-tune on fractions of the small train split");
    auto* ckpt = arena.Make<std::string>();
    auto* data = arena.Make<std::string>();
    auto* fractions = arena.Make<std::string>("0.1,0.25,0.5,0.75,1");
    sub->add_option("--checkpoint", *ckpt, "Pretrained checkpoint (.hmgw)")->required();
    sub->add_option("--data", *data, "Small dataset directory")->required();
    sub->add_option("--fractions", *fractions, "Comma-separated fractions in (0, 1]")
        ->capture_default_str();
    sub->callback([&, sub, ckpt, data, fractions] {
      command = sub->get_name();
      action = [&, ckpt, data, fractions] {
        std::vector<double> fs_;
        for (const std::string& f : SplitList(*fractions)) {
          try {
            fs_.push_back(std::stod(f));
          } catch (const std::exception&) {
            throw CLI::ValidationError("--fractions", "not a number: " + f);
          }
        }
        const harness::ExperimentConfig c = experiment();
        const harness::AblationCurve curve = harness::RunAblation(
            LoadChecked(*ckpt), OpenChecked(*data), fs_, c, harness::Layout{g.out});
        return curve.ToJson();
      };
    });
  }

  // ---- matrix / demo
  {
    auto* sub = app.add_subcommand("matrix", "Train and evaluate every variant x seed");
    auto* plan_path = arena.Make<std::string>();
    sub->add_option("--plan", *plan_path, "Plan JSON (default: hmg, scratch-large, scratch-small)")
        ->check(CLI::ExistingFile);
    sub->callback([&, sub, plan_path] {
      command = sub->get_name();
      action = [&, plan_path] {
        harness::ExperimentPlan plan;
        if (plan_path->empty()) {
          plan = harness::ExperimentPlan::Default(experiment(), g.out);
        } else {
          std::ifstream in(*plan_path);
          json j;
          try {
            j = json::parse(in);
          } catch (const json::exception& e) {
            throw Error(ErrorKind::kFormat, *plan_path + ": " + e.what());
          }
          if (!j.contains("preset")) j["preset"] = g.preset;
          plan = harness::ExperimentPlan::FromJson(j, g.out);
          plan.config.jobs = g.Jobs();
        }
        const harness::MatrixResult r = harness::RunMatrix(plan);
        json variants = json::object();
        for (const harness::VariantSummary& v : r.variants) variants[v.name] = v.mean_seconds;
        return json{{"trained_cells", r.trained_cells},
                    {"reused_cells", r.reused_cells},
                    {"mean_seconds", variants},
                    {"matrix", (fs::path(g.out) / "reports" / "matrix.json").string()}};
      };
    });
  }
  {
    auto* sub = app.add_subcommand(
        "demo", "Whole pipeline on the demo budgets: data, pretrain, matrix, ablation");
    sub->callback([&, sub] {
      command = sub->get_name();
      action = [&] {
        g.preset = "demo";
        const harness::ExperimentConfig c = experiment();
        const harness::ExperimentPlan plan = harness::ExperimentPlan::Default(c, g.out);
        const harness::MatrixResult r = harness::RunMatrix(plan);
        const harness::Layout layout{g.out};
        const harness::Datasets data = harness::PrepareDatasets(c, layout);
        const harness::AblationCurve curve = harness::RunAblation(
            harness::EnsurePretrained(c, data, layout), data.small, {0.5, 1.0}, c, layout);
        json variants = json::object();
        for (const harness::VariantSummary& v : r.variants) variants[v.name] = v.mean_seconds;
        return json{{"mean_seconds", variants}, {"ablation", curve.ToJson()}};
      };
    });
  }

  // ---- render / export-csv
  {
    auto* sub = app.add_subcommand("render", "SVG stick figures of a stored or generated episode");
    auto* data = arena.Make<std::string>();
    auto* episode = arena.Make<std::string>();
    auto* ckpt = arena.Make<std::string>();
    auto* stride = arena.Make<int>(16);
    sub->add_option("--data", *data, "Dataset directory")->required();
    sub->add_option("--episode", *episode, "Episode id")->required();
    sub->add_option("--checkpoint", *ckpt,
                    "Render this model's completion over the stored motion as ghosts");
    sub->add_option("--stride", *stride, "Steps between drawn frames")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->callback([&, sub, data, episode, ckpt, stride] {
      command = sub->get_name();
      action = [&, data, episode, ckpt, stride] {
        const dataset::Dataset ds = OpenChecked(*data);
        const dataset::EpisodeData e = ds.LoadEpisode(*episode);
        const experts::BehaviorSpec& b = experts::FindBehavior(e.behavior);
        const physim::BodyModel body = physim::DefaultBiped();
        physim::Simulator sim(body);
        // Reconstruct the stored motion by replaying its actions.
        std::vector<physim::SimState> stored;
        physim::SimState s = experts::InitialState(sim, b);
        stored.push_back(s);
        for (int t = 0; t + 1 < e.length && e.d_act > 0; ++t) {
          s = sim.Step(s, std::vector<double>(e.act(t), e.act(t) + e.d_act));
          stored.push_back(s);
        }
        std::vector<physim::SimState> frames, ghosts;
        if (ckpt->empty()) {
          for (size_t t = 0; t < stored.size(); t += *stride) frames.push_back(stored[t]);
        } else {
          const rollout::GptPolicy policy(std::make_shared<gpt::Checkpoint>(LoadChecked(*ckpt)));
          rollout::CompletionOptions co;
          co.seed = g.seed;
          const rollout::GeneratedEpisode gen =
              rollout::MotionCompletion(policy, rollout::MakePrompt(e, b, body), b, body, co);
          for (size_t t = 0; t < gen.states.size(); t += *stride) {
            frames.push_back(gen.states[t]);
            const size_t k = rollout::kPromptSteps + t;
            if (k < stored.size()) ghosts.push_back(stored[k]);
          }
          if (ghosts.size() < frames.size()) ghosts.clear();
        }
        if (frames.empty()) throw Error(ErrorKind::kPrecondition, "nothing to render");
        const fs::path svg = fs::path(g.out) / "figures" / (*episode + ".svg");
        WriteFile(svg, physim::RenderSvg(sim, frames, ghosts));
        return json{{"svg", svg.string()}, {"frames", frames.size()}};
      };
    });
  }
  {
    auto* sub = app.add_subcommand("export-csv", "Export a stored episode to CSV");
    auto* data = arena.Make<std::string>();
    auto* episode = arena.Make<std::string>();
    sub->add_option("--data", *data, "Dataset directory")->required();
    sub->add_option("--episode", *episode, "Episode id")->required();
    sub->callback([&, sub, data, episode] {
      command = sub->get_name();
      action = [&, data, episode] {
        const dataset::Dataset ds = OpenChecked(*data);
        const fs::path csv = fs::path(g.out) / "csv" / (*episode + ".csv");
        fs::create_directories(csv.parent_path());
        dataset::ExportCsv(ds.LoadEpisode(*episode), csv);
        return json{{"csv", csv.string()}};
      };
    });
  }

  std::vector<const char*> argv = {"hmg"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    json result = action();
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json summary = {{"command", command},
                    {"status", "ok"},
                    {"seed", g.seed},
                    {"jobs", g.Jobs()},
                    {"out", g.out},
                    {"seconds", seconds},
                    {"result", result}};
    out << summary.dump(2) << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  }
}

}  // namespace hmg::cli
