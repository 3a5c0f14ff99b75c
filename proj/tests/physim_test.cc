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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hmg/common/error.h"
#include "hmg/physim/body_model.h"
#include "hmg/physim/render.h"
#include "hmg/physim/simulator.h"
#include "test_models.h"

namespace hmg::physim {
namespace {

using testing::PassiveBiped;
using testing::PendulumModel;

TEST(BodyModelTest, DefaultIsValidAndRoundTripsJson) {
  const BodyModel m = DefaultBiped();
  EXPECT_NO_THROW(m.Validate());
  EXPECT_EQ(m.num_joints(), 6);
  EXPECT_EQ(m.num_feet(), 2);
  const BodyModel back = BodyModelFromJson(BodyModelToJson(m));
  EXPECT_EQ(BodyModelToJson(back), BodyModelToJson(m));
}

TEST(BodyModelTest, RejectsBrokenInvariants) {
  BodyModel m = DefaultBiped();
  m.links[2].mass = 0.0;
  EXPECT_THROW(m.Validate(), Error);
  m = DefaultBiped();
  m.joints[1].lo = m.joints[1].hi;
  EXPECT_THROW(m.Validate(), Error);
  m = DefaultBiped();
  m.joints[0].kd = -1.0;
  EXPECT_THROW(m.Validate(), Error);
}

TEST(BodyModelTest, LoadsFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "hmg_body.json";
  std::ofstream(path) << BodyModelToJson(DefaultBiped()).dump(2);
  EXPECT_EQ(BodyModelToJson(LoadBodyModel(path.string())), BodyModelToJson(DefaultBiped()));
  std::filesystem::remove(path);
}

TEST(ResetTest, StandingStateMatchesModel) {
  Simulator sim(DefaultBiped());
  const SimState s = sim.ResetStanding();
  EXPECT_DOUBLE_EQ(s.z, sim.model().standing_height);
  EXPECT_EQ(s.time, 0.0);
  for (double v : s.qd) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(s.vx, 0.0);
  EXPECT_EQ(s.omega, 0.0);
}

TEST(ResetTest, LimitBoundaryAcceptedBeyondRejected) {
  Simulator sim(DefaultBiped());
  InitialPose p;
  p.z = 1.2;
  p.q = sim.model().standing_pose;
  p.q[1] = sim.model().joints[1].lo;  // knee at its limit
  EXPECT_EQ(sim.Reset(p).q[1], sim.model().joints[1].lo);
  p.q[0] = sim.model().joints[0].hi + 1e-9;
  try {
    sim.Reset(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLimitViolation);
  }
}

TEST(StepTest, AdvancesOnePeriodDeterministically) {
  Simulator a(DefaultBiped()), b(DefaultBiped());
  SimState s = a.ResetStanding(), t = b.ResetStanding();
  for (int i = 0; i < 20; ++i) {
    const double before = s.time;
    s = a.Step(s, a.model().standing_pose);
    t = b.Step(t, b.model().standing_pose);
    EXPECT_EQ(s.time, before + kControlPeriod);
  }
  EXPECT_EQ(s, t);
}

TEST(StepTest, NonFiniteInputNamesField) {
  Simulator sim(DefaultBiped());
  SimState s = sim.ResetStanding();
  std::vector<double> a = sim.model().standing_pose;
  a[4] = std::nan("");
  try {
    sim.Step(s, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("action[4]"), std::string::npos) << e.what();
  }
  s.qd[2] = INFINITY;
  try {
    sim.Step(s, sim.model().standing_pose);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("qd[2]"), std::string::npos) << e.what();
  }
}

TEST(StepTest, TargetsClampedAndAnglesStayInLimits) {
  Simulator sim(DefaultBiped());
  SimState s = sim.ResetStanding();
  const std::vector<double> wild = {9, -9, 9, -9, 9, -9};
  for (int i = 0; i < 64; ++i) {
    s = sim.Step(s, wild);
    for (int j = 0; j < 6; ++j) {
      EXPECT_GE(s.q[j], sim.model().joints[j].lo);
      EXPECT_LE(s.q[j], sim.model().joints[j].hi);
      EXPECT_LE(std::abs(s.applied_torque[j]), sim.model().joints[j].torque_limit);
    }
  }
}

TEST(PhysicsOracleTest, BallisticDropWithinOnePercent) {
  Simulator sim(DefaultBiped());
  sim.set_contact_enabled(false);
  SimState s = sim.ResetStanding();
  const double z0 = sim.CenterOfMass(s).y();
  for (int i = 0; i < 16; ++i) s = sim.Step(s, sim.model().standing_pose);
  const double drop = z0 - sim.CenterOfMass(s).y();
  const double expected = 0.5 * 9.81 * 0.5 * 0.5;
  EXPECT_NEAR(s.time, 0.5, 1e-12);
  EXPECT_LT(std::abs(drop - expected) / expected, 0.01) << drop;
}

TEST(PhysicsOracleTest, PinnedJointPdConverges) {
  Simulator sim(PendulumModel());
  sim.set_root_pinned(true);
  sim.set_contact_enabled(false);
  InitialPose p;
  p.z = 2.0;
  p.q = {0.0};
  SimState s = sim.Reset(p);
  const std::vector<double> target = {0.8};
  for (int i = 0; i < 64; ++i) s = sim.Step(s, target);
  EXPECT_NEAR(s.q[0], 0.8, 0.01);
  EXPECT_EQ(s.x, 0.0);
  EXPECT_EQ(s.z, 2.0);
}

TEST(PhysicsOracleTest, PassiveEnergyDriftBelowOnePercentPerSecond) {
  Simulator sim(PassiveBiped());
  sim.set_contact_enabled(false);
  InitialPose p;
  p.z = 3.0;
  p.vx = 0.5;
  p.vz = 1.0;
  p.omega = 0.8;
  p.q = sim.model().standing_pose;
  p.qd = {1.0, -2.0, 1.5, -1.0, 2.0, -1.5};
  SimState s = sim.Reset(p);
  const double e0 = sim.MechanicalEnergy(s);
  const std::vector<double> hold(6, 0.0);
  double worst = 0.0;
  for (int i = 0; i < kControlHz; ++i) {
    s = sim.Step(s, hold);
    worst = std::max(worst, std::abs(sim.MechanicalEnergy(s) - e0));
  }
  EXPECT_LT(worst / std::abs(e0), 0.01) << "e0=" << e0 << " worst=" << worst;
}

TEST(PhysicsOracleTest, DampingOnlyDissipates) {
  BodyModel m = PassiveBiped();
  m.gravity = 0.0;
  for (Joint& j : m.joints) j.kd = 5.0;
  Simulator sim(m);
  sim.set_contact_enabled(false);
  InitialPose p;
  p.z = 3.0;
  p.q = m.standing_pose;
  p.qd = {2.0, -2.0, 1.0, -1.0, 2.0, -1.0};
  SimState s = sim.Reset(p);
  double e = sim.KineticEnergy(s);
  const std::vector<double> any(6, 0.0);
  for (int i = 0; i < 32; ++i) {
    s = sim.Step(s, any);
    const double next = sim.KineticEnergy(s);
    EXPECT_LE(next, e + 1e-9);
    e = next;
  }
}

TEST(PhysicsOracleTest, StandingPoseIsAnEquilibrium) {
  Simulator sim(DefaultBiped());
  SimState s = sim.ResetStanding();
  // The compliant ankles leave a slow, lightly damped sway; it stays small.
  for (int i = 0; i < 8 * kControlHz; ++i) {
    s = sim.Step(s, sim.model().standing_pose);
    ASSERT_FALSE(sim.IsFallen(s));
    ASSERT_LT(std::abs(s.theta), 0.1);
    if (s.time > 0.5) {
      ASSERT_LT(std::abs(s.vx) + std::abs(s.vz) + std::abs(s.omega), 0.1);
    }
  }
  const std::vector<double> o = sim.Observe(s);
  const ObservationLayout& l = sim.layout();
  // Both feet loaded and together carrying the body weight.
  double total_mass = 0.0;
  for (const Link& k : sim.model().links) total_mass += k.mass;
  EXPECT_GT(o[l.touch_sensors], 0.0);
  EXPECT_GT(o[l.touch_sensors + 1], 0.0);
  EXPECT_NEAR(o[l.touch_sensors] + o[l.touch_sensors + 1], total_mass * 9.81,
              0.02 * total_mass * 9.81);
}

TEST(ObserveTest, LayoutAndInvariants) {
  Simulator sim(DefaultBiped());
  EXPECT_EQ(sim.observation_dim(), 30);
  SimState s = sim.ResetStanding();
  s.theta = 0.3;
  const std::vector<double> o = sim.Observe(s);
  ASSERT_EQ(o.size(), 30u);
  const ObservationLayout& l = sim.layout();
  EXPECT_NEAR(std::hypot(o[l.world_z_axis], o[l.world_z_axis + 1]), 1.0, 1e-9);
  for (int j = 0; j < 6; ++j) EXPECT_EQ(o[l.joint_pose + j], s.q[j]);
  EXPECT_EQ(o[l.body_height], s.z);
  for (int f = 0; f < 2; ++f) EXPECT_GE(o[l.touch_sensors + f], 0.0);
}

TEST(ObserveTest, AirborneFeetReadZeroTouch) {
  Simulator sim(DefaultBiped());
  InitialPose p;
  p.z = 3.0;
  p.q = sim.model().standing_pose;
  SimState s = sim.Step(sim.Reset(p), sim.model().standing_pose);
  const std::vector<double> o = sim.Observe(s);
  EXPECT_EQ(o[sim.layout().touch_sensors], 0.0);
  EXPECT_EQ(o[sim.layout().touch_sensors + 1], 0.0);
}

TEST(FallTest, ThresholdIsStrict) {
  Simulator sim(DefaultBiped());
  SimState s = sim.ResetStanding();
  s.z = kFallFraction * sim.model().standing_height;
  EXPECT_FALSE(sim.IsFallen(s));
  s.z = std::nextafter(s.z, 0.0);
  EXPECT_TRUE(sim.IsFallen(s));
}

TEST(FallTest, ZeroTargetsCollapse) {
  Simulator sim(DefaultBiped());
  SimState s = sim.ResetStanding();
  s.vx = 0.7;
  bool fell = false;
  const std::vector<double> zero(6, 0.0);
  for (int i = 0; i < 480 && !fell; ++i) {
    s = sim.Step(s, zero);
    fell = sim.IsFallen(s);
  }
  EXPECT_TRUE(fell);
}

TEST(RenderTest, EmptySequenceIsAnError) {
  Simulator sim(DefaultBiped());
  EXPECT_THROW(RenderSvg(sim, {}), Error);
}

TEST(RenderTest, DrawsOneGroupPerFrameAndGhost) {
  Simulator sim(DefaultBiped());
  std::vector<SimState> frames(3, sim.ResetStanding());
  std::vector<SimState> ghost(3, sim.ResetStanding());
  const std::string svg = RenderSvg(sim, frames, ghost);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  size_t groups = 0;
  for (size_t p = svg.find("<g "); p != std::string::npos; p = svg.find("<g ", p + 1)) ++groups;
  EXPECT_EQ(groups, 6u);
  EXPECT_NE(svg.find("stroke-opacity=\"0.35\""), std::string::npos);
}

}  // namespace
}  // namespace hmg::physim
