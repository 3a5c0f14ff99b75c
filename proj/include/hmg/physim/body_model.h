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

#ifndef HMG_PHYSIM_BODY_MODEL_H_
#define HMG_PHYSIM_BODY_MODEL_H_

#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace hmg::physim {

// Planar vectors are (x, z): x forward, z up. Angles are counterclockwise
// in the x-z plane, so a positive hip angle swings the leg forward.
using Vec2 = Eigen::Vector2d;

struct Link {
  std::string name;
  double mass = 1.0;     // kg
  double length = 1.0;   // m
  double inertia = 0.1;  // kg m^2 about the center of mass
  // Local coordinates relative to the link origin (its proximal joint).
  Vec2 com = Vec2::Zero();
  // Drawn segment, in local coordinates.
  Vec2 segment_start = Vec2::Zero();
  Vec2 segment_end = Vec2(0.0, -1.0);
  // Ground contact points, in local coordinates. Links with contacts are feet.
  std::vector<Vec2> contacts;
};

struct Joint {
  std::string name;
  int parent = 0;
  int child = 1;
  Vec2 anchor = Vec2::Zero();  // child origin in parent-local coordinates
  double lo = -1.0;            // rad
  double hi = 1.0;             // rad
  double kp = 100.0;           // N m / rad
  double kd = 10.0;            // N m s / rad
  double torque_limit = 100.0; // N m
};

struct ContactParams {
  double stiffness = 1e4;  // N/m
  double damping = 1e2;    // N s/m
  double friction = 1.0;   // Coulomb coefficient
};

// Articulated planar body. Link 0 is the floating root (torso); each joint
// adds one actuated rotational degree of freedom.
struct BodyModel {
  std::vector<Link> links;
  std::vector<Joint> joints;
  int root = 0;
  double standing_height = 1.0;  // m, root height in the standing pose
  double gravity = 9.81;         // m/s^2, pointing down
  ContactParams contact;
  std::vector<double> standing_pose;  // rad per joint

  int num_joints() const { return static_cast<int>(joints.size()); }
  int num_links() const { return static_cast<int>(links.size()); }
  // Indices of links carrying contact points, in link order.
  std::vector<int> FootLinks() const;
  int num_feet() const { return static_cast<int>(FootLinks().size()); }
  // Generalized coordinates: x, z, theta, then one per joint.
  int num_dofs() const { return 3 + num_joints(); }
  // Throws Error(kPrecondition) naming the first broken invariant.
  void Validate() const;
};

// Seven-link biped: torso, thighs, shins and feet with six actuated joints
// ordered left hip, left knee, left ankle, right hip, right knee, right ankle.
BodyModel DefaultBiped();

BodyModel BodyModelFromJson(const nlohmann::json& doc);
nlohmann::json BodyModelToJson(const BodyModel& model);
BodyModel LoadBodyModel(const std::string& path);

}  // namespace hmg::physim

#endif  // HMG_PHYSIM_BODY_MODEL_H_
