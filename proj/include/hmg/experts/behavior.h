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

#ifndef HMG_EXPERTS_BEHAVIOR_H_
#define HMG_EXPERTS_BEHAVIOR_H_

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace hmg::experts {

enum class Category { kCyclicModerate, kCyclicFast, kNonCyclic };

const char* CategoryName(Category category);
Category CategoryFromName(const std::string& name);

// C1 interpolation through (time, value) knots: a cubic smoothstep between
// neighbouring knots, constant beyond the ends. Never overshoots the knots.
class Spline {
 public:
  Spline() = default;
  explicit Spline(double constant) : knots_{{0.0, constant}} {}
  explicit Spline(std::vector<std::pair<double, double>> knots);

  double operator()(double t) const;
  const std::vector<std::pair<double, double>>& knots() const {
    return knots_;
  }
  bool empty() const { return knots_.empty(); }

 private:
  std::vector<std::pair<double, double>> knots_;
};

enum class ControllerKind { kStand, kGait };

// Gait references follow a fixed step clock: the left leg is in stance for
// the first half of every period.
struct GaitParams {
  double period = 0.54;            // s per two steps
  double swing_hip = 0.257;        // world thigh angle at v = 0, rad
  double swing_hip_per_speed = 0.137;  // rad per m/s of target speed
  double swing_knee = -0.619;      // early swing, rad
  double swing_knee_late = -0.48;  // late swing, rad
  double knee_extend_at = 0.507;   // fraction of the step
  double stance_knee = -0.201;
  double stance_ankle = -0.034;    // foot pitch offset, rad
  double cd = 0.752;               // foot placement gain on COM offset
  double cv = 0.176;               // foot placement gain on COM velocity error
  double lean_per_speed = 0.054;   // torso pitch added per m/s of target speed
};

struct StandParams {
  double ankle_position_gain = 2.0;  // rad per m of COM offset
  double ankle_velocity_gain = 0.5;  // rad per m/s of COM velocity
};

struct BehaviorSpec {
  std::string name;
  Category category = Category::kNonCyclic;
  double duration = 15.0;  // s
  ControllerKind controller = ControllerKind::kStand;
  GaitParams gait;
  StandParams stand;
  Spline target_velocity{0.0};  // root velocity reference, m/s
  Spline torso_lean{0.0};       // torso world pitch reference, rad
  Spline hip_sway{0.0};         // added to both hips (stand), rad
  Spline knee_sway{0.0};        // added to both knees (stand), rad
  double initial_velocity = 0.0;  // m/s

  bool locomotion() const { return category != Category::kNonCyclic; }
};

BehaviorSpec BehaviorFromJson(const nlohmann::json& doc);
nlohmann::json BehaviorToJson(const BehaviorSpec& behavior);
std::vector<BehaviorSpec> LoadBehaviors(const std::string& path);

// The eight shipped behaviors: stand, walk-forward, walk-backward,
// walk-random-turns, run-forward, run-left, arm-gesture-stand, side-step.
const std::vector<BehaviorSpec>& BehaviorLibrary();
const BehaviorSpec& FindBehavior(const std::string& name);

// Fixed split of the library by behavior name.
const std::vector<std::string>& ValidationBehaviors();
bool IsValidationBehavior(const std::string& name);

}  // namespace hmg::experts

#endif  // HMG_EXPERTS_BEHAVIOR_H_
