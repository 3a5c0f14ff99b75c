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

#include "hmg/trainer/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "hmg/common/error.h"
#include "hmg/gpt/checkpoint_io.h"

namespace hmg::trainer {
namespace {

using gpt::Checkpoint;
using gpt::Matrix;

// Number of (input, target) pairs an episode offers.
int PairCount(const dataset::EpisodeData& e, Target target) {
  return target == Target::kNextObservation ? e.length - 1 : e.length;
}

const double* TargetRow(const dataset::EpisodeData& e, Target target, int i) {
  return target == Target::kNextObservation ? e.obs(i + 1) : e.act(i);
}

int TargetDim(const EpisodeSet& set, Target target) {
  return target == Target::kNextObservation ? set.d_obs : set.d_act;
}

// Writes one window (pairs [start, start + len)) into rows [row, row + W),
// front-padding with pair 0's input when len < W.
void FillWindow(const Checkpoint& ckpt, const dataset::EpisodeData& e, Target target,
                int start, int len, int window, int row, Batch& b) {
  const int din = e.d_obs;
  const int dout = ckpt.config.output_dim;
  const int pad = window - len;
  for (int i = 0; i < window; ++i) {
    const int r = row + i;
    const bool real = i >= pad;
    const int idx = real ? start + i - pad : start;
    const double* x = e.obs(idx);
    for (int d = 0; d < din; ++d) {
      b.inputs(r, d) = (x[d] - ckpt.input_stats.mean[d]) / ckpt.input_stats.std[d];
    }
    b.targets.mask[r] = real ? 1.0 : 0.0;
    const double* y = TargetRow(e, target, idx);
    for (int d = 0; d < dout; ++d) {
      b.targets.values[static_cast<size_t>(r) * dout + d] = y[d];
      b.targets.bins[static_cast<size_t>(r) * dout + d] = ckpt.discretizer.Discretize(y[d], d);
    }
  }
}

Batch EmptyBatch(const Checkpoint& ckpt, int rows) {
  Batch b;
  b.inputs.resize(rows, ckpt.config.input_dim);
  b.targets.mask.assign(rows, 0.0);
  b.targets.values.assign(static_cast<size_t>(rows) * ckpt.config.output_dim, 0.0);
  b.targets.bins.assign(static_cast<size_t>(rows) * ckpt.config.output_dim, 0);
  return b;
}

void CheckCompatible(const Checkpoint& ckpt, const EpisodeSet& set, Target target) {
  if (set.d_obs != ckpt.config.input_dim || TargetDim(set, target) != ckpt.config.output_dim) {
    throw Error(ErrorKind::kDimension, "dataset dims do not match the model");
  }
}

}  // namespace

double ScheduledLearningRate(int64_t step, int64_t total, double peak,
                             const OptimizerConfig& o) {
  const int64_t warmup =
      std::max<int64_t>(1, static_cast<int64_t>(std::llround(o.warmup_fraction * total)));
  if (step < warmup) return peak * static_cast<double>(step + 1) / warmup;
  const double progress =
      static_cast<double>(step - warmup) / std::max<int64_t>(1, total - warmup);
  return peak * (o.min_lr_ratio + (1.0 - o.min_lr_ratio) * 0.5 * (1.0 + std::cos(M_PI * progress)));
}

namespace {

dataset::NormalizationStats RequireStats(const dataset::Dataset& ds) {
  if (ds.manifest().stats) return *ds.manifest().stats;
  return dataset::ComputeNormalizationStats(ds);
}

std::string DatasetTag(const dataset::Dataset& ds, const dataset::DatasetFraction* f) {
  if (f == nullptr || f->fraction == 1.0) return ds.manifest().id;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "@%.4g/seed%llu", f->fraction,
                static_cast<unsigned long long>(f->seed));
  return ds.manifest().id + buf;
}

}  // namespace

std::string_view TrainPhaseName(TrainPhase phase) {
  switch (phase) {
    case TrainPhase::kPretrain: return "pretrain";
    case TrainPhase::kFinetune: return "finetune";
    case TrainPhase::kScratch: return "scratch";
  }
  return "";
}

TrainPhase TrainPhaseFromName(std::string_view name) {
  for (TrainPhase p : {TrainPhase::kPretrain, TrainPhase::kFinetune, TrainPhase::kScratch}) {
    if (name == TrainPhaseName(p)) return p;
  }
  throw Error(ErrorKind::kFormat, "unknown train phase '" + std::string(name) + "'");
}

nlohmann::json TrainConfigToJson(const TrainConfig& c) {
  const OptimizerConfig& o = c.optimizer;
  nlohmann::json j = {
      {"phase", TrainPhaseName(c.phase)},
      {"steps", c.steps},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"finetune_lr_ratio", c.finetune_lr_ratio},
      {"finetune_lr", c.finetune_lr ? nlohmann::json(*c.finetune_lr) : nlohmann::json(nullptr)},
      {"optimizer",
       {{"beta1", o.beta1},
        {"beta2", o.beta2},
        {"eps", o.eps},
        {"weight_decay", o.weight_decay},
        {"warmup_fraction", o.warmup_fraction},
        {"min_lr_ratio", o.min_lr_ratio},
        {"grad_clip", o.grad_clip}}},
      {"freeze_backbone", c.freeze_backbone},
      {"validate_every", c.validate_every},
      {"max_validation_windows", c.max_validation_windows},
      {"loss", LossKindName(c.loss)},
      {"model", gpt::ModelConfigToJson(c.model)},
      {"seed", c.seed}};
  return j;
}

TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig c) {
  const nlohmann::json known = TrainConfigToJson(c);
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) {
      throw Error(ErrorKind::kFormat, "unknown train config key '" + item.key() + "'");
    }
  }
  try {
    if (j.contains("phase")) c.phase = TrainPhaseFromName(j.at("phase").get<std::string>());
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.finetune_lr_ratio = j.value("finetune_lr_ratio", c.finetune_lr_ratio);
    if (j.contains("finetune_lr")) {
      c.finetune_lr = j.at("finetune_lr").is_null()
                          ? std::nullopt
                          : std::optional<double>(j.at("finetune_lr").get<double>());
    }
    if (j.contains("optimizer")) {
      const nlohmann::json& oj = j.at("optimizer");
      OptimizerConfig& o = c.optimizer;
      for (const auto& item : oj.items()) {
        if (!known.at("optimizer").contains(item.key())) {
          throw Error(ErrorKind::kFormat, "unknown optimizer key '" + item.key() + "'");
        }
      }
      o.beta1 = oj.value("beta1", o.beta1);
      o.beta2 = oj.value("beta2", o.beta2);
      o.eps = oj.value("eps", o.eps);
      o.weight_decay = oj.value("weight_decay", o.weight_decay);
      o.warmup_fraction = oj.value("warmup_fraction", o.warmup_fraction);
      o.min_lr_ratio = oj.value("min_lr_ratio", o.min_lr_ratio);
      o.grad_clip = oj.value("grad_clip", o.grad_clip);
    }
    c.freeze_backbone = j.value("freeze_backbone", c.freeze_backbone);
    c.validate_every = j.value("validate_every", c.validate_every);
    c.max_validation_windows = j.value("max_validation_windows", c.max_validation_windows);
    if (j.contains("loss")) c.loss = gpt::LossKindFromName(j.at("loss").get<std::string>());
    if (j.contains("model")) c.model = gpt::ModelConfigFromJson(j.at("model"), c.model);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("train config: ") + e.what());
  }
  return c;
}

TrainConfig TrainConfig::FinetuneFrom(const TrainConfig& pretrain) {
  TrainConfig c = pretrain;
  c.phase = TrainPhase::kFinetune;
  c.steps = std::max<int64_t>(1, pretrain.steps / kFinetuneBudgetDivisor);
  return c;
}

double TrainConfig::PeakLearningRate() const {
  if (phase == TrainPhase::kFinetune) {
    return finetune_lr.value_or(learning_rate * finetune_lr_ratio);
  }
  return learning_rate;
}

void TrainConfig::Validate() const {
  if (steps < 1) throw Error(ErrorKind::kPrecondition, "step budget must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::kPrecondition, "batch size must be >= 1");
  if (!(learning_rate > 0.0) || !(PeakLearningRate() > 0.0)) {
    throw Error(ErrorKind::kPrecondition, "learning rates must be > 0");
  }
  if (phase == TrainPhase::kFinetune && !(PeakLearningRate() < learning_rate)) {
    throw Error(ErrorKind::kPrecondition,
                "fine-tune learning rate must be below the pretrain rate");
  }
}

void TrainLog::WriteCsv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "step,ce_loss,val_mse,lr,seconds\n";
  out.precision(10);
  for (const TrainRecord& r : records) {
    out << r.step << "," << r.ce_loss << "," << r.val_mse << "," << r.lr << "," << r.seconds
        << "\n";
  }
}

gpt::Normalizer ToNormalizer(const dataset::DimStats& s) {
  return {Eigen::Map<const Eigen::VectorXd>(s.mean.data(), s.mean.size()),
          Eigen::Map<const Eigen::VectorXd>(s.std.data(), s.std.size())};
}

EpisodeSet LoadSplit(const dataset::Dataset& ds, dataset::Split split,
                     const dataset::DatasetFraction* fraction) {
  EpisodeSet set;
  set.d_obs = ds.manifest().d_obs;
  set.d_act = ds.manifest().d_act;
  if (fraction != nullptr) {
    if (fraction->base_id != ds.manifest().id) {
      throw Error(ErrorKind::kPrecondition, "fraction belongs to dataset " + fraction->base_id);
    }
    // Manifest order, so the full fraction trains exactly like the full split.
    const std::set<std::string> keep(fraction->selected.begin(), fraction->selected.end());
    for (const std::string& id : keep) ds.manifest().Find(id);  // throws if unknown
    for (const dataset::EpisodeRecord* r : ds.manifest().InSplit(split)) {
      if (keep.count(r->id) != 0) set.episodes.push_back(ds.LoadEpisode(r->id));
    }
    return set;
  }
  for (const dataset::EpisodeRecord* r : ds.manifest().InSplit(split)) {
    set.episodes.push_back(ds.LoadEpisode(r->id));
  }
  return set;
}

Batch SampleBatch(const Checkpoint& ckpt, const EpisodeSet& set, Target target,
                  int batch_size, std::mt19937_64& rng) {
  CheckCompatible(ckpt, set, target);
  const int window = ckpt.config.context_length;
  std::vector<int64_t> cumulative;
  int64_t total = 0;
  for (const dataset::EpisodeData& e : set.episodes) {
    const int pairs = PairCount(e, target);
    total += pairs < 1 ? 0 : std::max(1, pairs - window + 1);
    cumulative.push_back(total);
  }
  if (total == 0) throw Error(ErrorKind::kPrecondition, "no trainable windows in the split");
  std::uniform_int_distribution<int64_t> pick(0, total - 1);
  Batch b = EmptyBatch(ckpt, batch_size * window);
  for (int k = 0; k < batch_size; ++k) {
    const int64_t u = pick(rng);
    const size_t ei = std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
    const dataset::EpisodeData& e = set.episodes[ei];
    const int64_t before = ei == 0 ? 0 : cumulative[ei - 1];
    const int start = static_cast<int>(u - before);
    const int len = std::min(window, PairCount(e, target));
    FillWindow(ckpt, e, target, start, len, window, k * window, b);
  }
  return b;
}

double ValidateMse(const Checkpoint& ckpt, const EpisodeSet& set, Target target,
                   int max_windows) {
  CheckCompatible(ckpt, set, target);
  const int window = ckpt.config.context_length;
  struct Slot {
    const dataset::EpisodeData* e;
    int start;
    int len;
  };
  std::vector<Slot> slots;
  for (const dataset::EpisodeData& e : set.episodes) {
    const int pairs = PairCount(e, target);
    for (int s = 0; s < pairs; s += window) slots.push_back({&e, s, std::min(window, pairs - s)});
  }
  if (slots.empty()) throw Error(ErrorKind::kPrecondition, "empty validation split");
  if (max_windows > 0 && static_cast<int>(slots.size()) > max_windows) {
    std::vector<Slot> picked;
    for (int k = 0; k < max_windows; ++k) picked.push_back(slots[k * slots.size() / max_windows]);
    slots = std::move(picked);
  }
  double sum = 0.0, count = 0.0;
  for (const Slot& s : slots) {
    Batch b = EmptyBatch(ckpt, s.len);
    FillWindow(ckpt, *s.e, target, s.start, s.len, s.len, 0, b);
    const gpt::ForwardResult f = gpt::Forward(ckpt, b.inputs, 1, gpt::Mode::kEval);
    const double mse = gpt::DecodedMse(ckpt, f.logits, b.targets);
    const double n = static_cast<double>(s.len) * ckpt.config.output_dim;
    sum += mse * n;
    count += n;
  }
  return sum / count;
}

TrainLog RunTraining(Checkpoint& ckpt, const EpisodeSet& train, const EpisodeSet& val,
                     Target target, const TrainConfig& config, double peak_lr) {
  config.Validate();
  if (train.empty()) throw Error(ErrorKind::kPrecondition, "empty train split");
  const auto t0 = std::chrono::steady_clock::now();
  const OptimizerConfig& o = config.optimizer;
  std::vector<gpt::Tensor>& ts = ckpt.weights.tensors();
  std::vector<Matrix> m1, m2;
  for (const gpt::Tensor& t : ts) {
    m1.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    m2.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  }
  std::mt19937_64 rng(config.seed);
  gpt::BackwardOptions bo;
  bo.loss = config.loss;
  bo.mode = gpt::Mode::kTrain;
  bo.freeze_backbone = config.freeze_backbone;
  bo.rng = &rng;
  const double dims = ckpt.config.output_dim;

  TrainLog log;
  double interval_loss = 0.0;
  int interval_steps = 0;
  for (int64_t step = 0; step < config.steps; ++step) {
    const double lr = ScheduledLearningRate(step, config.steps, peak_lr, o);
    const Batch batch = SampleBatch(ckpt, train, target, config.batch_size, rng);
    gpt::LossResult r = gpt::Backward(ckpt, batch.inputs, config.batch_size, batch.targets, bo);
    if (!std::isfinite(r.loss)) {
      throw Error(ErrorKind::kNumeric, "non-finite training loss at step " + std::to_string(step));
    }
    double norm2 = 0.0;
    for (const Matrix& g : r.grads.tensors) norm2 += g.squaredNorm();
    const double scale =
        (o.grad_clip > 0.0 && norm2 > o.grad_clip * o.grad_clip) ? o.grad_clip / std::sqrt(norm2)
                                                                 : 1.0;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step + 1));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step + 1));
    for (size_t i = 0; i < ts.size(); ++i) {
      if (config.freeze_backbone && ts[i].backbone) continue;
      const Matrix g = r.grads.tensors[i] * scale;
      m1[i] = o.beta1 * m1[i] + (1.0 - o.beta1) * g;
      m2[i] = o.beta2 * m2[i] + (1.0 - o.beta2) * g.cwiseAbs2();
      Matrix& w = ts[i].value;
      if (ts[i].decay) w *= 1.0 - lr * o.weight_decay;
      w.array() -= lr * (m1[i].array() / c1) / ((m2[i].array() / c2).sqrt() + o.eps);
      for (Eigen::Index k = 0; k < w.size(); ++k) {
        const float f = static_cast<float>(w.data()[k]);
        if (!std::isfinite(f)) {
          throw Error(ErrorKind::kNumeric, "tensor '" + ts[i].name + "' became non-finite at step " +
                                               std::to_string(step));
        }
        w.data()[k] = f;
      }
    }
    interval_loss += r.loss / dims;
    ++interval_steps;
    const bool last = step + 1 == config.steps;
    if (last || (config.validate_every > 0 && (step + 1) % config.validate_every == 0)) {
      TrainRecord rec;
      rec.step = step + 1;
      rec.ce_loss = interval_loss / interval_steps;
      rec.val_mse = val.empty() ? std::numeric_limits<double>::quiet_NaN()
                                : ValidateMse(ckpt, val, target, config.max_validation_windows);
      rec.lr = lr;
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log.records.push_back(rec);
      interval_loss = 0.0;
      interval_steps = 0;
    }
  }
  ckpt.provenance.steps += config.steps;
  return log;
}

TrainResult Pretrain(const dataset::Dataset& ds, const TrainConfig& config) {
  if (config.phase != TrainPhase::kPretrain) {
    throw Error(ErrorKind::kPrecondition, "pretrain needs phase = pretrain");
  }
  config.Validate();
  const EpisodeSet train = LoadSplit(ds, dataset::Split::kTrain);
  if (train.empty()) {
    throw Error(ErrorKind::kPrecondition, "dataset " + ds.manifest().id + " has no train episodes");
  }
  const gpt::Normalizer obs = ToNormalizer(RequireStats(ds).observations);
  gpt::ModelConfig mc = config.model;
  mc.input_dim = train.d_obs;
  mc.output_dim = train.d_obs;
  mc.head = gpt::HeadKind::kObservation;
  TrainResult out;
  out.checkpoint = gpt::InitCheckpoint(mc, obs, obs, gpt::Phase::kPretrained, config.seed);
  out.checkpoint.provenance.dataset_id = ds.manifest().id;
  const EpisodeSet val = LoadSplit(ds, dataset::Split::kValidation);
  out.log = RunTraining(out.checkpoint, train, val, Target::kNextObservation, config,
                        config.PeakLearningRate());
  return out;
}

TrainResult Finetune(const Checkpoint& pretrained, const dataset::Dataset& ds,
                     const dataset::DatasetFraction* fraction, const TrainConfig& config) {
  if (config.phase != TrainPhase::kFinetune) {
    throw Error(ErrorKind::kPrecondition, "finetune needs phase = finetune");
  }
  if (pretrained.provenance.phase != gpt::Phase::kPretrained ||
      pretrained.config.head != gpt::HeadKind::kObservation) {
    throw Error(ErrorKind::kPrecondition, "finetune source must be a pretrained checkpoint");
  }
  if (ds.manifest().d_act == 0) {
    throw Error(ErrorKind::kPrecondition, "dataset " + ds.manifest().id + " has no actions");
  }
  config.Validate();
  const EpisodeSet train = LoadSplit(ds, dataset::Split::kTrain, fraction);
  const gpt::Normalizer act = ToNormalizer(RequireStats(ds).actions);
  TrainResult out;
  out.checkpoint = gpt::SwapHead(pretrained, ds.manifest().d_act, act, config.seed ^ 0x5eedull);
  out.checkpoint.provenance.dataset_id = DatasetTag(ds, fraction);
  const EpisodeSet val = LoadSplit(ds, dataset::Split::kValidation);
  out.log = RunTraining(out.checkpoint, train, val, Target::kAction, config,
                        config.PeakLearningRate());
  out.checkpoint.provenance.phase = gpt::Phase::kFinetuned;
  return out;
}

TrainResult TrainScratch(const dataset::Dataset& ds, const dataset::DatasetFraction* fraction,
                         const TrainConfig& config) {
  if (config.phase != TrainPhase::kScratch) {
    throw Error(ErrorKind::kPrecondition, "train-scratch needs phase = scratch");
  }
  if (ds.manifest().d_act == 0) {
    throw Error(ErrorKind::kPrecondition, "dataset " + ds.manifest().id + " has no actions");
  }
  config.Validate();
  const EpisodeSet train = LoadSplit(ds, dataset::Split::kTrain, fraction);
  const dataset::NormalizationStats stats = RequireStats(ds);
  gpt::ModelConfig mc = config.model;
  mc.input_dim = train.d_obs;
  mc.output_dim = train.d_act;
  mc.head = gpt::HeadKind::kAction;
  TrainResult out;
  out.checkpoint = gpt::InitCheckpoint(mc, ToNormalizer(stats.observations),
                                       ToNormalizer(stats.actions), gpt::Phase::kScratch,
                                       config.seed);
  out.checkpoint.provenance.dataset_id = DatasetTag(ds, fraction);
  const EpisodeSet val = LoadSplit(ds, dataset::Split::kValidation);
  out.log = RunTraining(out.checkpoint, train, val, Target::kAction, config,
                        config.PeakLearningRate());
  return out;
}

}  // namespace hmg::trainer
