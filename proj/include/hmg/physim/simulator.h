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

#ifndef HMG_PHYSIM_SIMULATOR_H_
#define HMG_PHYSIM_SIMULATOR_H_

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hmg/physim/body_model.h"

namespace hmg::physim {

inline constexpr int kControlHz = 32;
inline constexpr int kSubsteps = 8;
inline constexpr double kControlPeriod = 1.0 / kControlHz;
inline constexpr double kSubstepDt = kControlPeriod / kSubsteps;
inline constexpr double kFallFraction = 0.6;
inline constexpr double kActivationThreshold = 1e-6;  // N m

// Tangential stick anchor of one contact point.
struct ContactAnchor {
  bool active = false;
  double anchor_x = 0.0;

  bool operator==(const ContactAnchor&) const = default;
};

struct SimState {
  double x = 0.0, z = 0.0, theta = 0.0;       // root pose
  double vx = 0.0, vz = 0.0, omega = 0.0;     // root velocity (world frame)
  std::vector<double> q, qd;                  // joint angles and rates
  std::vector<double> foot_force;             // normal contact force per foot
  std::vector<double> applied_torque;         // after clamping
  std::vector<double> commanded_torque;       // PD output before clamping
  std::vector<ContactAnchor> anchors;         // one per contact point
  double time = 0.0;

  bool operator==(const SimState&) const = default;
};

struct InitialPose {
  double x = 0.0, z = 0.0, theta = 0.0;
  double vx = 0.0, vz = 0.0, omega = 0.0;
  std::vector<double> q;
  std::vector<double> qd;  // empty means zero
};

// World-frame kinematics of every link for one configuration.
struct Kinematics {
  std::vector<Vec2> origin;
  std::vector<double> angle;
  std::vector<Vec2> com;
};

// Observation layout; widths for the default biped in brackets.
struct ObservationLayout {
  int joint_pose = 0;          // [6]
  int velocimeter = 0;         // [2]
  int gyrometer = 0;           // [1]
  int end_effector_pose = 0;   // [4]
  int world_z_axis = 0;        // [2]
  int actuator_activation = 0; // [6]
  int touch_sensors = 0;       // [2]
  int torque_sensors = 0;      // [6]
  int body_height = 0;         // [1]
  int size = 0;                // [30]

  static ObservationLayout For(const BodyModel& model);
};

// Planar articulated-body integrator with PD position actuators and penalty
// ground contact. Each Step() advances one control period of kSubsteps
// semi-implicit Euler substeps.
class Simulator {
 public:
  explicit Simulator(BodyModel model);

  const BodyModel& model() const { return *model_; }
  int action_dim() const { return model_->num_joints(); }
  int observation_dim() const { return layout_.size; }
  const ObservationLayout& layout() const { return layout_; }
  // Link index of every foot, in observation order.
  const std::vector<int>& feet() const { return feet_; }

  // Throws Error(kLimitViolation) when a joint angle is outside its limits.
  SimState Reset(const InitialPose& pose) const;
  // Standing pose with the lowest contact point at ground level.
  SimState ResetStanding() const;

  // Throws Error(kNumeric) naming the offending field on non-finite input.
  SimState Step(const SimState& state, std::span<const double> action);

  std::vector<double> Observe(const SimState& state) const;
  bool IsFallen(const SimState& state,
                double fall_fraction = kFallFraction) const;

  Kinematics ComputeKinematics(const SimState& state) const;
  double KineticEnergy(const SimState& state) const;
  double PotentialEnergy(const SimState& state) const;
  double MechanicalEnergy(const SimState& state) const {
    return KineticEnergy(state) + PotentialEnergy(state);
  }
  // Whole-body center of mass and its velocity.
  Vec2 CenterOfMass(const SimState& state) const;
  Vec2 CenterOfMassVelocity(const SimState& state) const;
  // World position of a contact point.
  Vec2 ContactPoint(const SimState& state, int foot_index, int point) const;

  // Root z at which the lowest contact point of `q` (upright torso) is at z=0.
  double GroundedRootHeight(std::span<const double> q,
                            double theta = 0.0) const;

  // Pins the root in place (fixed-base mode). Used for actuator tests.
  void set_root_pinned(bool pinned) { root_pinned_ = pinned; }
  bool root_pinned() const { return root_pinned_; }
  // Disables ground contact entirely.
  void set_contact_enabled(bool enabled) { contact_enabled_ = enabled; }

 private:
  void Substep(SimState& s, std::span<const double> target);

  std::shared_ptr<const BodyModel> model_;
  ObservationLayout layout_;
  std::vector<int> feet_;
  std::vector<int> contact_offset_;  // first anchor index per foot
  // For each link, the joint indices on the path from the root.
  std::vector<std::vector<int>> chain_;
  std::vector<int> parent_joint_;  // joint whose child is the link, -1 root
  bool root_pinned_ = false;
  bool contact_enabled_ = true;

  // Scratch buffers reused across substeps.
  Eigen::MatrixXd mass_;
  Eigen::VectorXd bias_;
  Eigen::MatrixXd jac_;
};

void CheckFinite(const SimState& state);

}  // namespace hmg::physim

#endif  // HMG_PHYSIM_SIMULATOR_H_
