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

#include "hmg/experts/behavior.h"

#include <algorithm>
#include <fstream>

#include "hmg/common/error.h"

namespace hmg::experts {
namespace {

using nlohmann::json;

json SplineToJson(const Spline& s) {
  json out = json::array();
  for (const auto& [t, v] : s.knots()) out.push_back({t, v});
  return out;
}

Spline SplineFromJson(const json& j) {
  if (j.is_number()) return Spline(j.get<double>());
  std::vector<std::pair<double, double>> knots;
  for (const json& k : j) {
    knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
  }
  return Spline(std::move(knots));
}

// Base torso pitch shared by the walking gaits.
constexpr double kWalkLean = -0.091;

BehaviorSpec Gait(const std::string& name, Category category) {
  BehaviorSpec b;
  b.name = name;
  b.category = category;
  b.controller = ControllerKind::kGait;
  return b;
}

std::vector<BehaviorSpec> MakeLibrary() {
  std::vector<BehaviorSpec> lib;

  BehaviorSpec stand;
  stand.name = "stand";
  stand.category = Category::kNonCyclic;
  stand.controller = ControllerKind::kStand;
  lib.push_back(stand);

  BehaviorSpec walk = Gait("walk-forward", Category::kCyclicModerate);
  walk.target_velocity = Spline(0.7);
  walk.torso_lean = Spline(kWalkLean);
  walk.initial_velocity = 0.7;
  lib.push_back(walk);

  BehaviorSpec back = Gait("walk-backward", Category::kCyclicModerate);
  back.target_velocity = Spline(-0.5);
  back.torso_lean = Spline(kWalkLean);
  back.initial_velocity = -0.5;
  lib.push_back(back);

  BehaviorSpec turns = Gait("walk-random-turns", Category::kCyclicModerate);
  turns.target_velocity =
      Spline({{0.0, 0.6}, {2.6, 0.6}, {3.6, -0.45}, {6.1, -0.45},
              {7.1, 0.6}, {9.4, 0.6}, {10.4, -0.45}, {12.2, -0.45},
              {13.2, 0.6}});
  turns.torso_lean = Spline(kWalkLean);
  turns.initial_velocity = 0.6;
  lib.push_back(turns);

  // Faster cadence, shorter stance; hand-searched for survival under noise.
  GaitParams fast;
  fast.period = 0.35;
  fast.swing_hip = 0.2824;
  fast.swing_hip_per_speed = 0.18;
  fast.swing_knee = -0.9401;
  fast.swing_knee_late = -0.4969;
  fast.knee_extend_at = 0.3772;
  fast.stance_knee = -0.2004;
  fast.stance_ankle = -0.02;
  fast.cd = 0.2397;
  fast.cv = 0.1861;
  fast.lean_per_speed = -0.3;
  constexpr double kRunLean = 0.0209;

  BehaviorSpec run = Gait("run-forward", Category::kCyclicFast);
  run.gait = fast;
  run.target_velocity = Spline(1.3);
  run.torso_lean = Spline(kRunLean);
  run.initial_velocity = 1.3;
  lib.push_back(run);

  BehaviorSpec run_left = Gait("run-left", Category::kCyclicFast);
  run_left.gait = fast;
  run_left.target_velocity = Spline(-1.0);
  run_left.torso_lean = Spline(kRunLean);
  run_left.initial_velocity = -1.0;
  lib.push_back(run_left);

  BehaviorSpec gesture;
  gesture.name = "arm-gesture-stand";
  gesture.category = Category::kNonCyclic;
  gesture.controller = ControllerKind::kStand;
  gesture.hip_sway = Spline({{0.0, 0.0}, {1.2, 0.35}, {2.0, 0.05},
                             {3.7, 0.5}, {4.4, 0.5}, {5.5, -0.1},
                             {7.3, 0.3}, {8.0, 0.0}, {9.6, 0.45},
                             {11.5, -0.05}, {12.6, 0.25}, {15.0, 0.0}});
  gesture.knee_sway = Spline({{0.0, 0.0}, {1.2, -0.2}, {2.0, 0.0},
                              {3.7, -0.3}, {4.4, -0.3}, {5.5, 0.0},
                              {7.3, -0.15}, {8.0, 0.0}, {9.6, -0.25},
                              {11.5, 0.0}, {12.6, -0.1}, {15.0, 0.0}});
  lib.push_back(gesture);

  BehaviorSpec side = Gait("side-step", Category::kNonCyclic);
  side.target_velocity =
      Spline({{0.0, 0.3}, {2.0, 0.3}, {2.8, 0.0}, {4.5, 0.05},
              {5.3, -0.3}, {7.9, -0.3}, {8.6, 0.15}, {11.0, 0.2},
              {12.0, -0.1}, {15.0, -0.1}});
  side.torso_lean = Spline(kWalkLean);
  side.initial_velocity = 0.3;
  lib.push_back(side);
  return lib;
}

}  // namespace

const char* CategoryName(Category category) {
  switch (category) {
    case Category::kCyclicModerate:
      return "cyclic-moderate";
    case Category::kCyclicFast:
      return "cyclic-fast";
    case Category::kNonCyclic:
      return "non-cyclic";
  }
  return "non-cyclic";
}

Category CategoryFromName(const std::string& name) {
  if (name == "cyclic-moderate") return Category::kCyclicModerate;
  if (name == "cyclic-fast") return Category::kCyclicFast;
  if (name == "non-cyclic") return Category::kNonCyclic;
  throw Error(ErrorKind::kFormat, "unknown behavior category '" + name + "'");
}

Spline::Spline(std::vector<std::pair<double, double>> knots)
    : knots_(std::move(knots)) {
  if (knots_.empty()) throw Error(ErrorKind::kFormat, "spline without knots");
  if (!std::is_sorted(knots_.begin(), knots_.end(),
                      [](const auto& a, const auto& b) {
                        return a.first < b.first;
                      })) {
    throw Error(ErrorKind::kFormat, "spline knots must be sorted by time");
  }
}

double Spline::operator()(double t) const {
  if (knots_.empty()) return 0.0;
  if (t <= knots_.front().first) return knots_.front().second;
  if (t >= knots_.back().first) return knots_.back().second;
  auto hi = std::upper_bound(
      knots_.begin(), knots_.end(), t,
      [](double v, const auto& k) { return v < k.first; });
  auto lo = hi - 1;
  const double u = (t - lo->first) / (hi->first - lo->first);
  const double w = u * u * (3.0 - 2.0 * u);
  return lo->second + w * (hi->second - lo->second);
}

BehaviorSpec BehaviorFromJson(const json& doc) {
  BehaviorSpec b;
  try {
    b.name = doc.at("name").get<std::string>();
    b.category = CategoryFromName(doc.at("category").get<std::string>());
    b.duration = doc.value("duration", 15.0);
    const std::string controller = doc.value("controller", "stand");
    if (controller == "stand") {
      b.controller = ControllerKind::kStand;
    } else if (controller == "gait") {
      b.controller = ControllerKind::kGait;
    } else {
      throw Error(ErrorKind::kFormat, "unknown controller '" + controller + "'");
    }
    if (doc.contains("gait")) {
      const json& g = doc["gait"];
      GaitParams& p = b.gait;
      p.period = g.value("period", p.period);
      p.swing_hip = g.value("swing_hip", p.swing_hip);
      p.swing_hip_per_speed = g.value("swing_hip_per_speed", p.swing_hip_per_speed);
      p.swing_knee = g.value("swing_knee", p.swing_knee);
      p.swing_knee_late = g.value("swing_knee_late", p.swing_knee_late);
      p.knee_extend_at = g.value("knee_extend_at", p.knee_extend_at);
      p.stance_knee = g.value("stance_knee", p.stance_knee);
      p.stance_ankle = g.value("stance_ankle", p.stance_ankle);
      p.cd = g.value("cd", p.cd);
      p.cv = g.value("cv", p.cv);
      p.lean_per_speed = g.value("lean_per_speed", p.lean_per_speed);
    }
    if (doc.contains("stand")) {
      const json& s = doc["stand"];
      b.stand.ankle_position_gain =
          s.value("ankle_position_gain", b.stand.ankle_position_gain);
      b.stand.ankle_velocity_gain =
          s.value("ankle_velocity_gain", b.stand.ankle_velocity_gain);
    }
    if (doc.contains("knots")) {
      const json& k = doc["knots"];
      if (k.contains("target_velocity")) {
        b.target_velocity = SplineFromJson(k["target_velocity"]);
      }
      if (k.contains("torso_lean")) b.torso_lean = SplineFromJson(k["torso_lean"]);
      if (k.contains("hip_sway")) b.hip_sway = SplineFromJson(k["hip_sway"]);
      if (k.contains("knee_sway")) b.knee_sway = SplineFromJson(k["knee_sway"]);
    }
    b.initial_velocity = doc.value("initial_velocity", 0.0);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("behavior json: ") + e.what());
  }
  if (!(b.duration > 0.0)) {
    throw Error(ErrorKind::kFormat, "behavior '" + b.name + "' duration <= 0");
  }
  if (b.controller == ControllerKind::kGait && !(b.gait.period > 0.0)) {
    throw Error(ErrorKind::kFormat, "behavior '" + b.name + "' period <= 0");
  }
  return b;
}

json BehaviorToJson(const BehaviorSpec& b) {
  json doc = {{"name", b.name},
              {"category", CategoryName(b.category)},
              {"duration", b.duration},
              {"controller",
               b.controller == ControllerKind::kGait ? "gait" : "stand"},
              {"initial_velocity", b.initial_velocity}};
  if (b.controller == ControllerKind::kGait) {
    const GaitParams& p = b.gait;
    doc["gait"] = {{"period", p.period},
                   {"swing_hip", p.swing_hip},
                   {"swing_hip_per_speed", p.swing_hip_per_speed},
                   {"swing_knee", p.swing_knee},
                   {"swing_knee_late", p.swing_knee_late},
                   {"knee_extend_at", p.knee_extend_at},
                   {"stance_knee", p.stance_knee},
                   {"stance_ankle", p.stance_ankle},
                   {"cd", p.cd},
                   {"cv", p.cv},
                   {"lean_per_speed", p.lean_per_speed}};
  } else {
    doc["stand"] = {{"ankle_position_gain", b.stand.ankle_position_gain},
                    {"ankle_velocity_gain", b.stand.ankle_velocity_gain}};
  }
  doc["knots"] = {{"target_velocity", SplineToJson(b.target_velocity)},
                  {"torso_lean", SplineToJson(b.torso_lean)},
                  {"hip_sway", SplineToJson(b.hip_sway)},
                  {"knee_sway", SplineToJson(b.knee_sway)}};
  return doc;
}

std::vector<BehaviorSpec> LoadBehaviors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kNotFound, "cannot open behaviors " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, path + ": " + e.what());
  }
  std::vector<BehaviorSpec> out;
  const json& list = doc.is_array() ? doc : doc.at("behaviors");
  for (const json& b : list) out.push_back(BehaviorFromJson(b));
  return out;
}

const std::vector<BehaviorSpec>& BehaviorLibrary() {
  static const std::vector<BehaviorSpec> library = MakeLibrary();
  return library;
}

const BehaviorSpec& FindBehavior(const std::string& name) {
  for (const BehaviorSpec& b : BehaviorLibrary()) {
    if (b.name == name) return b;
  }
  throw Error(ErrorKind::kNotFound, "unknown behavior '" + name + "'");
}

const std::vector<std::string>& ValidationBehaviors() {
  static const std::vector<std::string> names = {"walk-random-turns",
                                                 "side-step"};
  return names;
}

bool IsValidationBehavior(const std::string& name) {
  const auto& v = ValidationBehaviors();
  return std::find(v.begin(), v.end(), name) != v.end();
}

}  // namespace hmg::experts
