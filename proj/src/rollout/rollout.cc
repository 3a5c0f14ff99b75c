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

#include "hmg/rollout/rollout.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <utility>

#include "hmg/common/error.h"
#include "hmg/common/hash.h"
#include "hmg/common/parallel.h"
#include "hmg/experts/expert.h"

namespace hmg::rollout {

using gpt::Matrix;

MotionPrompt MakePrompt(const dataset::EpisodeData& episode,
                        const experts::BehaviorSpec& behavior,
                        const physim::BodyModel& model) {
  if (episode.length < kPromptSteps) {
    throw Error(ErrorKind::kPrecondition,
                "episode " + episode.id + " has " + std::to_string(episode.length) +
                    " steps; a prompt needs " + std::to_string(kPromptSteps));
  }
  if (episode.d_act == 0) {
    throw Error(ErrorKind::kPrecondition, "episode " + episode.id + " has no actions to replay");
  }
  physim::Simulator sim(model);
  if (episode.d_obs != sim.observation_dim() || episode.d_act != sim.action_dim()) {
    throw Error(ErrorKind::kDimension, "episode " + episode.id + " does not match the body model");
  }
  MotionPrompt p;
  p.behavior = episode.behavior;
  p.episode_id = episode.id;
  physim::SimState s = experts::InitialState(sim, behavior);
  for (int t = 0; t < kPromptSteps; ++t) {
    if (t > 0) {
      const double* a = episode.act(t - 1);
      s = sim.Step(s, std::vector<double>(a, a + episode.d_act));
    }
    std::vector<double> o = sim.Observe(s);
    for (int d = 0; d < episode.d_obs; ++d) {
      if (static_cast<float>(o[d]) != static_cast<float>(episode.obs(t)[d])) {
        throw Error(ErrorKind::kFormat, "prompt replay of " + episode.id + " diverges at step " +
                                            std::to_string(t) + ", dim " + std::to_string(d));
      }
    }
    p.observations.push_back(std::move(o));
  }
  p.state = s;
  return p;
}

const char* DecodeModeName(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kGreedy:
      return "greedy";
    case DecodeMode::kExpected:
      return "expected";
    case DecodeMode::kSample:
      return "sample";
  }
  return "greedy";
}

DecodeMode DecodeModeFromName(const std::string& name) {
  for (DecodeMode m : {DecodeMode::kGreedy, DecodeMode::kExpected, DecodeMode::kSample}) {
    if (name == DecodeModeName(m)) return m;
  }
  throw Error(ErrorKind::kFormat, "unknown decode mode '" + name + "'");
}

Eigen::VectorXd DecodeLogits(const gpt::Checkpoint& ckpt, const Matrix& logits,
                             Eigen::Index row, const DecodeOptions& options,
                             std::mt19937_64* rng) {
  const gpt::Discretizer& disc = ckpt.discretizer;
  const int dims = disc.dims();
  const int bins = disc.bins();
  if (options.mode == DecodeMode::kExpected) return gpt::DecodeRow(ckpt, logits, row);
  Eigen::VectorXd out(dims);
  for (int d = 0; d < dims; ++d) {
    const auto seg = logits.row(row).segment(static_cast<Eigen::Index>(d) * bins, bins);
    int pick = 0;
    if (options.mode == DecodeMode::kGreedy) {
      seg.maxCoeff(&pick);  // first maximum on ties
    } else {
      if (!(options.temperature > 0.0)) {
        throw Error(ErrorKind::kPrecondition, "sampling temperature must be > 0");
      }
      if (rng == nullptr) throw Error(ErrorKind::kPrecondition, "sampling needs an rng");
      const double top = seg.maxCoeff();
      std::vector<double> w(bins);
      for (int k = 0; k < bins; ++k) w[k] = std::exp((seg[k] - top) / options.temperature);
      pick = std::discrete_distribution<int>(w.begin(), w.end())(*rng);
    }
    out[d] = disc.Center(d, pick);
  }
  return out;
}

GptPolicy::GptPolicy(std::shared_ptr<const gpt::Checkpoint> checkpoint, DecodeOptions options)
    : ckpt_(std::move(checkpoint)), options_(options) {
  if (ckpt_ == nullptr) throw Error(ErrorKind::kPrecondition, "null checkpoint");
  if (ckpt_->config.head != gpt::HeadKind::kAction) {
    throw Error(ErrorKind::kPrecondition,
                "motion completion needs an action-head checkpoint, got phase " +
                    std::string(gpt::PhaseName(ckpt_->provenance.phase)));
  }
}

std::string GptPolicy::id() const {
  return std::string(gpt::PhaseName(ckpt_->provenance.phase)) + ":" +
         ckpt_->provenance.dataset_id + ":" + std::to_string(ckpt_->provenance.steps);
}

std::vector<double> GptPolicy::Act(const StepContext& c) const {
  const auto& window = *c.window;
  const int dims = ckpt_->config.input_dim;
  Matrix raw(static_cast<Eigen::Index>(window.size()), dims);
  for (size_t t = 0; t < window.size(); ++t) {
    if (static_cast<int>(window[t].size()) != dims) {
      throw Error(ErrorKind::kDimension, "observation width does not match the checkpoint");
    }
    for (int d = 0; d < dims; ++d) raw(static_cast<Eigen::Index>(t), d) = window[t][d];
  }
  const gpt::ForwardResult f =
      gpt::Forward(*ckpt_, ckpt_->input_stats.Apply(raw), 1, gpt::Mode::kEval);
  const Eigen::VectorXd a = DecodeLogits(*ckpt_, f.logits, f.logits.rows() - 1, options_, c.rng);
  return std::vector<double>(a.data(), a.data() + a.size());
}

std::vector<double> ExpertPolicy::Act(const StepContext& c) const {
  return experts::ExpertAction(*c.sim, *c.state, *c.behavior,
                               std::min(c.state->time, c.behavior->duration));
}

std::vector<double> ZeroPolicy::Act(const StepContext& c) const {
  return std::vector<double>(c.sim->action_dim(), 0.0);
}

GeneratedEpisode MotionCompletion(const ActionSource& source, const MotionPrompt& prompt,
                                  const experts::BehaviorSpec& behavior,
                                  const physim::BodyModel& model,
                                  const CompletionOptions& options) {
  if (static_cast<int>(prompt.observations.size()) != kPromptSteps) {
    throw Error(ErrorKind::kPrecondition, "prompt has " +
                                              std::to_string(prompt.observations.size()) +
                                              " steps, expected " + std::to_string(kPromptSteps));
  }
  if (options.max_total_steps < kPromptSteps) {
    throw Error(ErrorKind::kPrecondition, "step cap shorter than the prompt");
  }
  physim::Simulator sim(model);
  std::deque<std::vector<double>> window(prompt.observations.begin(), prompt.observations.end());
  std::mt19937_64 rng(options.seed);
  GeneratedEpisode ep;
  ep.behavior = prompt.behavior;
  ep.episode_id = prompt.episode_id;
  ep.source_id = source.id();
  physim::SimState state = prompt.state;
  const int cap = options.max_total_steps - kPromptSteps;
  for (int t = 0; t < cap; ++t) {
    StepContext c;
    c.sim = &sim;
    c.state = &state;
    c.behavior = &behavior;
    c.window = &window;
    c.step = t;
    c.rng = &rng;
    std::vector<double> action = source.Act(c);
    state = sim.Step(state, action);
    if (sim.IsFallen(state, options.fall_fraction)) {
      ep.terminated_by_fall = true;
      break;
    }
    std::vector<double> obs = sim.Observe(state);
    window.push_back(obs);
    if (static_cast<int>(window.size()) > kPromptSteps) window.pop_front();
    ep.observations.push_back(std::move(obs));
    ep.actions.push_back(std::move(action));
    ep.states.push_back(state);
  }
  return ep;
}

double Evaluation::MeanSeconds() const {
  if (rows.empty()) return 0.0;
  double sum = 0.0;
  for (const EvaluationRow& r : rows) sum += r.seconds();
  return sum / static_cast<double>(rows.size());
}

Evaluation BatchEvaluate(const ActionSource& source, const dataset::Dataset& ds,
                         dataset::Split split, const physim::BodyModel& model,
                         const EvaluateOptions& options) {
  const BehaviorResolver resolve =
      options.resolve ? options.resolve
                      : BehaviorResolver([](const std::string& n) -> const experts::BehaviorSpec& {
                          return experts::FindBehavior(n);
                        });
  std::vector<const dataset::EpisodeRecord*> records = ds.manifest().InSplit(split);
  if (records.empty()) {
    throw Error(ErrorKind::kPrecondition,
                "dataset " + ds.manifest().id + " has no " +
                    std::string(dataset::SplitName(split)) + " episodes");
  }
  Evaluation out;
  std::vector<const dataset::EpisodeRecord*> picked;
  std::map<std::string, int> taken;
  for (const dataset::EpisodeRecord* r : records) {
    if (r->length < kPromptSteps) {
      out.skipped.push_back(r->id);
      continue;
    }
    if (options.max_per_behavior > 0 && taken[r->behavior] >= options.max_per_behavior) continue;
    ++taken[r->behavior];
    picked.push_back(r);
  }
  out.rows.resize(picked.size());
  out.episodes.resize(picked.size());
  ParallelFor(picked.size(), options.jobs, [&](size_t i) {
    const dataset::EpisodeRecord& r = *picked[i];
    const experts::BehaviorSpec& behavior = resolve(r.behavior);
    const MotionPrompt prompt = MakePrompt(ds.LoadEpisode(r.id), behavior, model);
    CompletionOptions co = options.completion;
    Fnv1a h;
    h.Add(r.id);
    co.seed = options.completion.seed ^ h.value();
    GeneratedEpisode g = MotionCompletion(source, prompt, behavior, model, co);
    EvaluationRow& row = out.rows[i];
    row.behavior = r.behavior;
    row.episode_id = r.id;
    row.split = split;
    row.generated_steps = g.length();
    row.fell = g.terminated_by_fall;
    out.episodes[i] = std::move(g);
  });
  return out;
}

void WriteEvaluationCsv(const std::filesystem::path& path,
                        const std::vector<EvaluationRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "behavior,episode_id,split,generated_steps,generated_seconds,total_steps,"
         "total_seconds,fell\n";
  for (const EvaluationRow& r : rows) {
    out << r.behavior << ',' << r.episode_id << ',' << dataset::SplitName(r.split) << ','
        << r.generated_steps << ',' << r.seconds() << ',' << r.generated_steps + kPromptSteps
        << ',' << r.total_seconds() << ',' << (r.fell ? 1 : 0) << '\n';
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace hmg::rollout
