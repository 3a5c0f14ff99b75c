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

#include "hmg/physim/simulator.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hmg/common/error.h"

namespace hmg::physim {
namespace {

Eigen::Matrix2d Rotation(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

// Derivative of a rotated point with respect to the rotation angle.
Vec2 Perp(const Vec2& v) { return Vec2(-v.y(), v.x()); }

void RequireFinite(double v, const std::string& field) {
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::kNumeric, "non-finite value in " + field);
  }
}

void RequireFinite(const std::vector<double>& v, const std::string& field) {
  for (size_t i = 0; i < v.size(); ++i) {
    RequireFinite(v[i], field + "[" + std::to_string(i) + "]");
  }
}

}  // namespace

void CheckFinite(const SimState& s) {
  RequireFinite(s.x, "state.x");
  RequireFinite(s.z, "state.z");
  RequireFinite(s.theta, "state.theta");
  RequireFinite(s.vx, "state.vx");
  RequireFinite(s.vz, "state.vz");
  RequireFinite(s.omega, "state.omega");
  RequireFinite(s.q, "state.q");
  RequireFinite(s.qd, "state.qd");
  RequireFinite(s.time, "state.time");
}

ObservationLayout ObservationLayout::For(const BodyModel& model) {
  const int nj = model.num_joints();
  const int nf = model.num_feet();
  ObservationLayout l;
  int at = 0;
  l.joint_pose = at;
  at += nj;
  l.velocimeter = at;
  at += 2;
  l.gyrometer = at;
  at += 1;
  l.end_effector_pose = at;
  at += 2 * nf;
  l.world_z_axis = at;
  at += 2;
  l.actuator_activation = at;
  at += nj;
  l.touch_sensors = at;
  at += nf;
  l.torque_sensors = at;
  at += nj;
  l.body_height = at;
  at += 1;
  l.size = at;
  return l;
}

Simulator::Simulator(BodyModel model)
    : model_(std::make_shared<const BodyModel>(std::move(model))) {
  const BodyModel& m = *model_;
  layout_ = ObservationLayout::For(m);
  feet_ = m.FootLinks();
  int offset = 0;
  for (int f : feet_) {
    contact_offset_.push_back(offset);
    offset += static_cast<int>(m.links[f].contacts.size());
  }
  contact_offset_.push_back(offset);
  chain_.assign(m.links.size(), {});
  parent_joint_.assign(m.links.size(), -1);
  for (int j = 0; j < m.num_joints(); ++j) {
    const Joint& joint = m.joints[j];
    chain_[joint.child] = chain_[joint.parent];
    chain_[joint.child].push_back(j);
    parent_joint_[joint.child] = j;
  }
  const int n = m.num_dofs();
  mass_.resize(n, n);
  bias_.resize(n);
  jac_.resize(2, n);
}

SimState Simulator::Reset(const InitialPose& pose) const {
  const BodyModel& m = *model_;
  const int nj = m.num_joints();
  if (static_cast<int>(pose.q.size()) != nj) {
    throw Error(ErrorKind::kDimension,
                "initial pose has " + std::to_string(pose.q.size()) +
                    " joint angles, model has " + std::to_string(nj));
  }
  for (int j = 0; j < nj; ++j) {
    const double a = pose.q[j];
    if (!(a >= m.joints[j].lo && a <= m.joints[j].hi)) {
      throw Error(ErrorKind::kLimitViolation,
                  "joint '" + m.joints[j].name + "' angle " +
                      std::to_string(a) + " outside [" +
                      std::to_string(m.joints[j].lo) + ", " +
                      std::to_string(m.joints[j].hi) + "]");
    }
  }
  SimState s;
  s.x = pose.x;
  s.z = pose.z;
  s.theta = pose.theta;
  s.vx = pose.vx;
  s.vz = pose.vz;
  s.omega = pose.omega;
  s.q = pose.q;
  s.qd = pose.qd.empty() ? std::vector<double>(nj, 0.0) : pose.qd;
  if (static_cast<int>(s.qd.size()) != nj) {
    throw Error(ErrorKind::kDimension, "initial joint rates size mismatch");
  }
  s.foot_force.assign(feet_.size(), 0.0);
  s.applied_torque.assign(nj, 0.0);
  s.commanded_torque.assign(nj, 0.0);
  s.anchors.assign(contact_offset_.back(), ContactAnchor{});
  s.time = 0.0;
  CheckFinite(s);
  return s;
}

SimState Simulator::ResetStanding() const {
  InitialPose pose;
  pose.q = model_->standing_pose;
  pose.z = GroundedRootHeight(pose.q);
  return Reset(pose);
}

double Simulator::GroundedRootHeight(std::span<const double> q,
                                     double theta) const {
  SimState s;
  s.theta = theta;
  s.q.assign(q.begin(), q.end());
  const Kinematics k = ComputeKinematics(s);
  double lowest = std::numeric_limits<double>::infinity();
  for (int f : feet_) {
    for (const Vec2& c : model_->links[f].contacts) {
      lowest = std::min(lowest, (k.origin[f] + Rotation(k.angle[f]) * c).y());
    }
  }
  return std::isfinite(lowest) ? -lowest : model_->standing_height;
}

Kinematics Simulator::ComputeKinematics(const SimState& s) const {
  const BodyModel& m = *model_;
  Kinematics k;
  k.origin.assign(m.links.size(), Vec2::Zero());
  k.angle.assign(m.links.size(), 0.0);
  k.com.assign(m.links.size(), Vec2::Zero());
  k.origin[m.root] = Vec2(s.x, s.z);
  k.angle[m.root] = s.theta;
  for (int j = 0; j < m.num_joints(); ++j) {
    const Joint& joint = m.joints[j];
    k.origin[joint.child] =
        k.origin[joint.parent] + Rotation(k.angle[joint.parent]) * joint.anchor;
    k.angle[joint.child] = k.angle[joint.parent] + s.q[j];
  }
  for (int i = 0; i < m.num_links(); ++i) {
    k.com[i] = k.origin[i] + Rotation(k.angle[i]) * m.links[i].com;
  }
  return k;
}

Vec2 Simulator::ContactPoint(const SimState& s, int foot_index,
                             int point) const {
  const Kinematics k = ComputeKinematics(s);
  const int f = feet_.at(foot_index);
  return k.origin[f] + Rotation(k.angle[f]) * model_->links[f].contacts.at(point);
}

double Simulator::KineticEnergy(const SimState& s) const {
  const BodyModel& m = *model_;
  const Kinematics k = ComputeKinematics(s);
  const Vec2 root_v(s.vx, s.vz);
  double ke = 0.0;
  for (int i = 0; i < m.num_links(); ++i) {
    // v_com = v_root + sum over rotational dofs of rate * perp(com - pivot)
    Vec2 v = root_v + s.omega * Perp(k.com[i] - k.origin[m.root]);
    double w = s.omega;
    for (int j : chain_[i]) {
      v += s.qd[j] * Perp(k.com[i] - k.origin[m.joints[j].child]);
      w += s.qd[j];
    }
    ke += 0.5 * m.links[i].mass * v.squaredNorm() +
          0.5 * m.links[i].inertia * w * w;
  }
  return ke;
}

Vec2 Simulator::CenterOfMass(const SimState& s) const {
  const BodyModel& m = *model_;
  const Kinematics k = ComputeKinematics(s);
  Vec2 sum = Vec2::Zero();
  double total = 0.0;
  for (int i = 0; i < m.num_links(); ++i) {
    sum += m.links[i].mass * k.com[i];
    total += m.links[i].mass;
  }
  return sum / total;
}

Vec2 Simulator::CenterOfMassVelocity(const SimState& s) const {
  const BodyModel& m = *model_;
  const Kinematics k = ComputeKinematics(s);
  Vec2 sum = Vec2::Zero();
  double total = 0.0;
  for (int i = 0; i < m.num_links(); ++i) {
    Vec2 v = Vec2(s.vx, s.vz) + s.omega * Perp(k.com[i] - k.origin[m.root]);
    for (int j : chain_[i]) {
      v += s.qd[j] * Perp(k.com[i] - k.origin[m.joints[j].child]);
    }
    sum += m.links[i].mass * v;
    total += m.links[i].mass;
  }
  return sum / total;
}

double Simulator::PotentialEnergy(const SimState& s) const {
  const BodyModel& m = *model_;
  const Kinematics k = ComputeKinematics(s);
  double pe = 0.0;
  for (int i = 0; i < m.num_links(); ++i) {
    pe += m.links[i].mass * m.gravity * k.com[i].y();
  }
  return pe;
}

SimState Simulator::Step(const SimState& state,
                         std::span<const double> action) {
  const BodyModel& m = *model_;
  const int nj = m.num_joints();
  CheckFinite(state);
  if (static_cast<int>(action.size()) != nj) {
    throw Error(ErrorKind::kDimension,
                "action has " + std::to_string(action.size()) +
                    " entries, model has " + std::to_string(nj) + " joints");
  }
  std::vector<double> target(nj);
  for (int j = 0; j < nj; ++j) {
    RequireFinite(action[j], "action[" + std::to_string(j) + "]");
    target[j] = std::clamp(action[j], m.joints[j].lo, m.joints[j].hi);
  }
  SimState next = state;
  for (int sub = 0; sub < kSubsteps; ++sub) Substep(next, target);
  next.time = state.time + kControlPeriod;
  CheckFinite(next);
  return next;
}

void Simulator::Substep(SimState& s, std::span<const double> target) {
  const BodyModel& m = *model_;
  const int nj = m.num_joints();
  const int n = m.num_dofs();
  const Kinematics k = ComputeKinematics(s);

  // Link angular rates and velocity-product (centripetal) accelerations of
  // every link origin, accumulated root to leaf.
  std::vector<double> w(m.links.size(), 0.0);
  std::vector<Vec2> origin_bias(m.links.size(), Vec2::Zero());
  w[m.root] = s.omega;
  for (int j = 0; j < nj; ++j) {
    const Joint& joint = m.joints[j];
    w[joint.child] = w[joint.parent] + s.qd[j];
    origin_bias[joint.child] =
        origin_bias[joint.parent] - w[joint.parent] * w[joint.parent] *
                                        (Rotation(k.angle[joint.parent]) *
                                         joint.anchor);
  }

  Eigen::VectorXd qdot(n);
  qdot << s.vx, s.vz, s.omega,
      Eigen::Map<const Eigen::VectorXd>(s.qd.data(), nj);

  // Fills jac_ with the translational Jacobian of world point p on link i.
  auto point_jacobian = [&](int i, const Vec2& p) {
    jac_.setZero();
    jac_(0, 0) = 1.0;
    jac_(1, 1) = 1.0;
    jac_.col(2) = Perp(p - k.origin[m.root]);
    for (int j : chain_[i]) {
      jac_.col(3 + j) = Perp(p - k.origin[m.joints[j].child]);
    }
  };

  mass_.setZero();
  bias_.setZero();  // generalized forces, right-hand side
  const Vec2 gravity(0.0, -m.gravity);
  for (int i = 0; i < m.num_links(); ++i) {
    const Link& link = m.links[i];
    point_jacobian(i, k.com[i]);
    mass_.noalias() += link.mass * jac_.transpose() * jac_;
    // Rotational part: the angular Jacobian is a 0/1 row over the chain.
    std::vector<int> rot = chain_[i];
    mass_(2, 2) += link.inertia;
    for (int a : rot) {
      mass_(2, 3 + a) += link.inertia;
      mass_(3 + a, 2) += link.inertia;
      for (int b : rot) mass_(3 + a, 3 + b) += link.inertia;
    }
    const Vec2 com_bias = origin_bias[i] - w[i] * w[i] *
                                               (Rotation(k.angle[i]) * link.com);
    bias_.noalias() += jac_.transpose() * (link.mass * (gravity - com_bias));
  }

  // Penalty ground contact with a tangential stick anchor.
  const ContactParams& cp = m.contact;
  for (size_t f = 0; f < feet_.size(); ++f) {
    const int link = feet_[f];
    double normal_sum = 0.0;
    for (size_t c = 0; c < m.links[link].contacts.size(); ++c) {
      ContactAnchor& anchor = s.anchors[contact_offset_[f] + c];
      const Vec2 p =
          k.origin[link] + Rotation(k.angle[link]) * m.links[link].contacts[c];
      if (!contact_enabled_ || p.y() >= 0.0) {
        anchor.active = false;
        continue;
      }
      point_jacobian(link, p);
      const Vec2 v = jac_ * qdot;
      const double fn = std::max(0.0, -cp.stiffness * p.y() - cp.damping * v.y());
      if (!anchor.active) {
        anchor.active = true;
        anchor.anchor_x = p.x();
      }
      double ft = -cp.stiffness * (p.x() - anchor.anchor_x) - cp.damping * v.x();
      const double cap = cp.friction * fn;
      if (std::abs(ft) > cap) {
        ft = std::copysign(cap, ft);
        anchor.anchor_x = p.x() + (ft + cp.damping * v.x()) / cp.stiffness;
      }
      bias_.noalias() += jac_.transpose() * Vec2(ft, fn);
      normal_sum += fn;
    }
    s.foot_force[f] = normal_sum;
  }

  // PD position actuators. Unsaturated actuators are integrated implicitly:
  // the torque is evaluated at the end-of-substep velocity and position,
  //   tau = kp (target - q - dt qd') - kd qd',
  // which folds (dt kd + dt^2 kp) into the mass matrix. Saturated actuators
  // apply their clamped torque explicitly. An actuator whose implicit torque
  // lands beyond its limit joins the saturated set and the step is re-solved.
  const double dt = kSubstepDt;
  const Eigen::VectorXd rhs0 = mass_ * qdot + dt * bias_;
  std::vector<double> clamp(nj, 0.0);  // nonzero: saturated at this torque
  for (int j = 0; j < nj; ++j) {
    const Joint& joint = m.joints[j];
    const double tau = joint.kp * (target[j] - s.q[j]) - joint.kd * s.qd[j];
    s.commanded_torque[j] = tau;
    if (std::abs(tau) > joint.torque_limit) clamp[j] = std::copysign(joint.torque_limit, tau);
  }

  Eigen::VectorXd qdot_next = Eigen::VectorXd::Zero(n);
  for (int pass = 0; pass <= nj; ++pass) {
    Eigen::VectorXd rhs = rhs0;
    Eigen::MatrixXd lhs = mass_;
    for (int j = 0; j < nj; ++j) {
      const Joint& joint = m.joints[j];
      if (clamp[j] != 0.0) {
        rhs(3 + j) += dt * clamp[j];
      } else {
        lhs(3 + j, 3 + j) += dt * (joint.kd + dt * joint.kp);
        rhs(3 + j) += dt * joint.kp * (target[j] - s.q[j]);
      }
    }
    if (root_pinned_) {
      qdot_next.tail(nj) = lhs.bottomRightCorner(nj, nj).ldlt().solve(rhs.tail(nj));
    } else {
      qdot_next = lhs.ldlt().solve(rhs);
    }
    bool changed = false;
    for (int j = 0; j < nj; ++j) {
      const Joint& joint = m.joints[j];
      const double v = qdot_next(3 + j);
      if (clamp[j] != 0.0) {
        s.applied_torque[j] = clamp[j];
        continue;
      }
      const double tau = joint.kp * (target[j] - s.q[j] - dt * v) - joint.kd * v;
      s.applied_torque[j] = tau;
      if (std::abs(tau) > joint.torque_limit) {
        clamp[j] = std::copysign(joint.torque_limit, tau);
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Semi-implicit Euler: velocities first, then positions.
  s.vx = qdot_next(0);
  s.vz = qdot_next(1);
  s.omega = qdot_next(2);
  s.x += dt * s.vx;
  s.z += dt * s.vz;
  s.theta += dt * s.omega;
  for (int j = 0; j < nj; ++j) {
    s.qd[j] = qdot_next(3 + j);
    s.q[j] += dt * s.qd[j];
    const Joint& joint = m.joints[j];
    if (s.q[j] < joint.lo) {
      s.q[j] = joint.lo;
      s.qd[j] = std::max(s.qd[j], 0.0);
    } else if (s.q[j] > joint.hi) {
      s.q[j] = joint.hi;
      s.qd[j] = std::min(s.qd[j], 0.0);
    }
  }
}

std::vector<double> Simulator::Observe(const SimState& s) const {
  const BodyModel& m = *model_;
  const int nj = m.num_joints();
  const Kinematics k = ComputeKinematics(s);
  const Eigen::Matrix2d to_root = Rotation(s.theta).transpose();
  std::vector<double> obs(layout_.size, 0.0);
  for (int j = 0; j < nj; ++j) obs[layout_.joint_pose + j] = s.q[j];
  const Vec2 v = to_root * Vec2(s.vx, s.vz);
  obs[layout_.velocimeter] = v.x();
  obs[layout_.velocimeter + 1] = v.y();
  obs[layout_.gyrometer] = s.omega;
  for (size_t f = 0; f < feet_.size(); ++f) {
    const Vec2 e = to_root * (k.origin[feet_[f]] - k.origin[m.root]);
    obs[layout_.end_effector_pose + 2 * f] = e.x();
    obs[layout_.end_effector_pose + 2 * f + 1] = e.y();
    obs[layout_.touch_sensors + f] = s.foot_force.empty() ? 0.0 : s.foot_force[f];
  }
  obs[layout_.world_z_axis] = std::sin(s.theta);
  obs[layout_.world_z_axis + 1] = std::cos(s.theta);
  for (int j = 0; j < nj; ++j) {
    obs[layout_.actuator_activation + j] =
        std::abs(s.commanded_torque[j]) > kActivationThreshold ? 1.0 : 0.0;
    obs[layout_.torque_sensors + j] = s.applied_torque[j];
  }
  obs[layout_.body_height] = s.z;
  return obs;
}

bool Simulator::IsFallen(const SimState& s, double fall_fraction) const {
  return s.z < fall_fraction * model_->standing_height;
}

}  // namespace hmg::physim
