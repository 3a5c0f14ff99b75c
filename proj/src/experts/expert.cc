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

#include "hmg/experts/expert.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>
#include <set>
#include <string>
#include <thread>

#include "hmg/common/error.h"
#include "hmg/common/hash.h"

namespace hmg::experts {
namespace {

using physim::SimState;
using physim::Simulator;
using physim::Vec2;

constexpr int kJointsPerLeg = 3;
constexpr int kHip = 0;
constexpr int kKnee = 1;
constexpr int kAnkle = 2;

int JointIndex(int leg, int joint) { return leg * kJointsPerLeg + joint; }

double Smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

void RequireBipedLayout(const Simulator& sim) {
  if (sim.model().num_joints() != 2 * kJointsPerLeg ||
      sim.feet().size() != 2) {
    throw Error(ErrorKind::kPrecondition,
                "expert controllers need a two-leg hip/knee/ankle biped");
  }
}

// Torso kept at a world pitch through the stance hip, swing foot placed
// from the COM offset and velocity error, feet kept level.
std::vector<double> GaitAction(const Simulator& sim, const SimState& s,
                               const BehaviorSpec& b, double t) {
  const GaitParams& g = b.gait;
  const physim::BodyModel& model = sim.model();
  const double half = 0.5 * g.period;
  const double steps = t / half;
  const long step = static_cast<long>(std::floor(steps));
  const double phase = steps - static_cast<double>(step);
  const int stance = step % 2 == 0 ? 0 : 1;
  const int swing = 1 - stance;

  const physim::Kinematics kin = sim.ComputeKinematics(s);
  const Vec2 com = sim.CenterOfMass(s);
  const Vec2 com_v = sim.CenterOfMassVelocity(s);
  const double v_target = b.target_velocity(t);
  const double lean = b.torso_lean(t) + g.lean_per_speed * v_target;
  const double offset = com.x() - kin.origin[sim.feet()[stance]].x();

  std::vector<double> target(model.num_joints());
  const double swing_world = g.swing_hip + g.swing_hip_per_speed * v_target +
                             g.cd * offset + g.cv * (com_v.x() - v_target);
  const int sw_hip = JointIndex(swing, kHip);
  target[sw_hip] = swing_world - s.theta;
  const double extend = Smoothstep((phase - g.knee_extend_at) / 0.25);
  target[JointIndex(swing, kKnee)] =
      g.swing_knee + extend * (g.swing_knee_late - g.swing_knee);
  const double swing_shin = s.theta + s.q[sw_hip] + s.q[JointIndex(swing, kKnee)];
  target[JointIndex(swing, kAnkle)] = -swing_shin;

  const int st_hip = JointIndex(stance, kHip);
  target[JointIndex(stance, kKnee)] = g.stance_knee;
  const double stance_shin =
      s.theta + s.q[st_hip] + s.q[JointIndex(stance, kKnee)];
  target[JointIndex(stance, kAnkle)] = -stance_shin + g.stance_ankle;

  // The stance hip holds the torso and cancels the swing hip reaction.
  const physim::Joint& sw = model.joints[sw_hip];
  const physim::Joint& st = model.joints[st_hip];
  const double swing_torque =
      sw.kp * (target[sw_hip] - s.q[sw_hip]) - sw.kd * s.qd[sw_hip];
  const double stance_thigh = s.theta + s.q[st_hip];
  target[st_hip] = stance_thigh - lean - swing_torque / st.kp;
  return target;
}

// Standing pose plus scripted hip/knee sway, balanced with the ankles.
std::vector<double> StandAction(const Simulator& sim, const SimState& s,
                                const BehaviorSpec& b, double t) {
  const physim::BodyModel& model = sim.model();
  std::vector<double> target = model.standing_pose;
  const physim::Kinematics kin = sim.ComputeKinematics(s);
  double support = 0.0;
  for (int f : sim.feet()) {
    const physim::Link& foot = model.links[f];
    const Vec2 mid = 0.5 * (foot.contacts.front() + foot.contacts.back());
    support += (kin.origin[f] + Eigen::Rotation2Dd(kin.angle[f]) * mid).x();
  }
  support /= static_cast<double>(sim.feet().size());
  const double offset = sim.CenterOfMass(s).x() - support;
  const double velocity = sim.CenterOfMassVelocity(s).x();
  const double hip = b.hip_sway(t);
  const double knee = b.knee_sway(t);
  for (int leg = 0; leg < 2; ++leg) {
    target[JointIndex(leg, kHip)] += hip;
    target[JointIndex(leg, kKnee)] += knee;
    target[JointIndex(leg, kAnkle)] += -0.5 * knee -
                                       b.stand.ankle_position_gain * offset -
                                       b.stand.ankle_velocity_gain * velocity;
  }
  return target;
}

}  // namespace

SimState InitialState(const Simulator& sim, const BehaviorSpec& behavior) {
  physim::InitialPose pose;
  pose.q = sim.model().standing_pose;
  pose.z = sim.GroundedRootHeight(pose.q);
  pose.vx = behavior.initial_velocity;
  return sim.Reset(pose);
}

std::vector<double> ExpertAction(const Simulator& sim, const SimState& state,
                                 const BehaviorSpec& behavior, double t) {
  if (!(t >= 0.0 && t <= behavior.duration)) {
    throw Error(ErrorKind::kRange,
                "time " + std::to_string(t) + " s outside behavior '" +
                    behavior.name + "' domain [0, " +
                    std::to_string(behavior.duration) + "]");
  }
  RequireBipedLayout(sim);
  std::vector<double> target = behavior.controller == ControllerKind::kGait
                                   ? GaitAction(sim, state, behavior, t)
                                   : StandAction(sim, state, behavior, t);
  const physim::BodyModel& model = sim.model();
  for (int j = 0; j < model.num_joints(); ++j) {
    target[j] = std::clamp(target[j], model.joints[j].lo, model.joints[j].hi);
  }
  return target;
}

Episode GenerateRollout(const BehaviorSpec& behavior,
                        const physim::BodyModel& model, double noise_scale,
                        std::uint64_t seed, int max_steps) {
  if (!(noise_scale >= 0.0)) {
    throw Error(ErrorKind::kPrecondition, "noise scale must be >= 0");
  }
  Simulator sim(model);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Episode ep;
  ep.behavior = behavior.name;
  ep.seed = seed;
  SimState state = InitialState(sim, behavior);
  for (int t = 0; t < max_steps; ++t) {
    std::vector<double> action = ExpertAction(sim, state, behavior, state.time);
    // Recorded actions are float32 and inside the limits, i.e. exactly what
    // the simulator applies.
    for (int j = 0; j < model.num_joints(); ++j) {
      const double n = noise(rng);
      const physim::Joint& joint = model.joints[j];
      float f = static_cast<float>(std::clamp(action[j] + noise_scale * n, joint.lo, joint.hi));
      if (f < joint.lo) f = std::nextafter(f, 1e30f);
      if (f > joint.hi) f = std::nextafter(f, -1e30f);
      action[j] = f;
    }
    ep.states.push_back(state);
    ep.observations.push_back(sim.Observe(state));
    ep.actions.push_back(action);
    state = sim.Step(state, action);
    if (sim.IsFallen(state)) {
      ep.terminated_by_fall = true;
      break;
    }
  }
  return ep;
}

std::vector<SimState> ReplayActions(
    const BehaviorSpec& behavior, const physim::BodyModel& model,
    std::span<const std::vector<double>> actions) {
  Simulator sim(model);
  std::vector<SimState> states;
  SimState state = InitialState(sim, behavior);
  for (const std::vector<double>& a : actions) {
    states.push_back(state);
    state = sim.Step(state, a);
  }
  return states;
}

std::uint64_t EpisodeSeed(std::uint64_t base_seed, const std::string& behavior,
                          int index) {
  Fnv1a h;
  h.Add(behavior).AddByte(0);
  for (int b = 0; b < 4; ++b) h.AddByte(static_cast<unsigned char>(index >> (8 * b)));
  return base_seed + h.value();
}

dataset::EpisodeData ToEpisodeData(const Episode& episode, bool with_actions) {
  dataset::EpisodeData d;
  d.id = episode.id;
  d.behavior = episode.behavior;
  d.index = episode.index;
  d.seed = episode.seed;
  d.length = episode.length();
  d.terminated_by_fall = episode.terminated_by_fall;
  d.d_obs = d.length > 0 ? static_cast<int>(episode.observations[0].size()) : 0;
  d.d_act = (with_actions && d.length > 0) ? static_cast<int>(episode.actions[0].size()) : 0;
  for (int t = 0; t < d.length; ++t) {
    d.observations.insert(d.observations.end(), episode.observations[t].begin(),
                          episode.observations[t].end());
    if (with_actions) {
      d.actions.insert(d.actions.end(), episode.actions[t].begin(), episode.actions[t].end());
    }
  }
  return d;
}

std::string EpisodeId(const std::string& behavior, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return behavior + "-" + buf;
}

dataset::DatasetManifest BuildDataset(const std::vector<BehaviorSpec>& behaviors,
                                      const physim::BodyModel& model,
                                      const BuildOptions& options,
                                      const std::filesystem::path& dir,
                                      const std::string& id) {
  if (options.rollouts_per_behavior < 1) {
    throw Error(ErrorKind::kPrecondition, "rollouts per behavior must be >= 1");
  }
  if (options.noise_scale < 0.0 || options.validation_rollouts < 0) {
    throw Error(ErrorKind::kPrecondition, "noise scale and validation rollouts must be >= 0");
  }
  std::set<std::string> names;
  for (const BehaviorSpec& b : behaviors) {
    if (!names.insert(b.name).second) {
      throw Error(ErrorKind::kDuplicate, "behavior '" + b.name + "' listed twice");
    }
  }
  struct Job {
    const BehaviorSpec* behavior;
    int index;
    dataset::Split split;
  };
  std::vector<Job> jobs;
  for (const BehaviorSpec& b : behaviors) {
    const bool held_out = IsValidationBehavior(b.name);
    const int n = options.rollouts_per_behavior + (held_out ? 0 : options.validation_rollouts);
    for (int i = 0; i < n; ++i) {
      const bool val = held_out || i >= options.rollouts_per_behavior;
      jobs.push_back({&b, i, val ? dataset::Split::kValidation : dataset::Split::kTrain});
    }
  }
  const physim::Simulator probe(model);
  dataset::Dataset ds = dataset::Dataset::Create(
      dir, id, options.seed, probe.layout().size,
      options.store_actions ? model.num_joints() : 0);

  auto run = [&](const Job& job) {
    const uint64_t seed = EpisodeSeed(options.seed, job.behavior->name, job.index);
    Episode ep =
        GenerateRollout(*job.behavior, model, options.noise_scale, seed, options.max_steps);
    ep.id = EpisodeId(job.behavior->name, job.index);
    ep.index = job.index;
    return ToEpisodeData(ep, options.store_actions);
  };
  // Generate in parallel chunks; write in job order so the store is
  // identical for any worker count.
  const size_t width = static_cast<size_t>(std::max(1, options.jobs));
  for (size_t begin = 0; begin < jobs.size(); begin += width) {
    const size_t end = std::min(jobs.size(), begin + width);
    std::vector<dataset::EpisodeData> out(end - begin);
    std::vector<std::exception_ptr> errors(end - begin);
    std::vector<std::thread> threads;
    for (size_t k = begin; k < end; ++k) {
      threads.emplace_back([&, k] {
        try {
          out[k - begin] = run(jobs[k]);
        } catch (...) {
          errors[k - begin] = std::current_exception();
        }
      });
    }
    for (std::thread& t : threads) t.join();
    for (size_t k = begin; k < end; ++k) {
      if (errors[k - begin]) std::rethrow_exception(errors[k - begin]);
      ds.WriteEpisode(out[k - begin], jobs[k].split);
    }
  }
  if (!ds.manifest().InSplit(dataset::Split::kTrain).empty()) ds.FinalizeStats();
  return ds.manifest();
}

}  // namespace hmg::experts
