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

#include "hmg/physim/body_model.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hmg/common/error.h"
#include "hmg/physim/simulator.h"

namespace hmg::physim {
namespace {

using nlohmann::json;

Vec2 ReadVec(const json& j) {
  if (!j.is_array() || j.size() != 2) {
    throw Error(ErrorKind::kFormat, "expected [x, z] pair, got " + j.dump());
  }
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

json WriteVec(const Vec2& v) { return json::array({v.x(), v.y()}); }

Link MakeSegment(const std::string& name, double mass, double length,
                 double com_along) {
  Link link;
  link.name = name;
  link.mass = mass;
  link.length = length;
  link.inertia = mass * length * length / 12.0;
  link.com = Vec2(0.0, -com_along);
  link.segment_start = Vec2::Zero();
  link.segment_end = Vec2(0.0, -length);
  return link;
}

}  // namespace

std::vector<int> BodyModel::FootLinks() const {
  std::vector<int> feet;
  for (int i = 0; i < num_links(); ++i) {
    if (!links[i].contacts.empty()) feet.push_back(i);
  }
  return feet;
}

void BodyModel::Validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorKind::kPrecondition, "body model: " + what);
  };
  if (links.empty()) fail("no links");
  if (root < 0 || root >= num_links()) fail("root index out of range");
  for (const Link& l : links) {
    if (!(l.mass > 0.0)) fail("link '" + l.name + "' mass must be > 0");
    if (!(l.length > 0.0)) fail("link '" + l.name + "' length must be > 0");
    if (!(l.inertia > 0.0)) fail("link '" + l.name + "' inertia must be > 0");
  }
  if (num_joints() != num_links() - 1) {
    fail("a tree over N links needs exactly N-1 joints");
  }
  std::vector<bool> placed(links.size(), false);
  placed[root] = true;
  for (const Joint& j : joints) {
    if (j.parent < 0 || j.parent >= num_links() || j.child < 0 ||
        j.child >= num_links()) {
      fail("joint '" + j.name + "' references a missing link");
    }
    if (!placed[j.parent]) {
      fail("joint '" + j.name + "' parent must precede it in the tree");
    }
    if (placed[j.child]) fail("joint '" + j.name + "' child already placed");
    placed[j.child] = true;
    if (!(j.lo < j.hi)) fail("joint '" + j.name + "' needs lo < hi");
    if (j.kp < 0.0 || j.kd < 0.0) fail("joint '" + j.name + "' gains < 0");
    if (!(j.torque_limit > 0.0)) {
      fail("joint '" + j.name + "' torque limit must be > 0");
    }
  }
  if (!(standing_height > 0.0)) fail("standing height must be > 0");
  if (!(gravity >= 0.0)) fail("gravity must be >= 0");
  if (static_cast<int>(standing_pose.size()) != num_joints()) {
    fail("standing pose needs one angle per joint");
  }
  for (int i = 0; i < num_joints(); ++i) {
    if (standing_pose[i] < joints[i].lo || standing_pose[i] > joints[i].hi) {
      fail("standing pose outside limits at joint '" + joints[i].name + "'");
    }
  }
}

BodyModel DefaultBiped() {
  BodyModel model;
  Link torso;
  torso.name = "torso";
  torso.mass = 22.0;
  torso.length = 0.6;
  torso.inertia = 0.9;
  torso.com = Vec2(0.0, 0.25);
  torso.segment_start = Vec2::Zero();
  torso.segment_end = Vec2(0.0, 0.6);
  model.links.push_back(torso);

  for (const char* side : {"left", "right"}) {
    const std::string s(side);
    model.links.push_back(MakeSegment(s + "_thigh", 6.0, 0.45, 0.2));
    model.links.push_back(MakeSegment(s + "_shin", 3.0, 0.45, 0.2));
    Link foot;
    foot.name = s + "_foot";
    foot.mass = 1.0;
    foot.length = 0.28;
    foot.inertia = 0.012;
    foot.com = Vec2(0.02, -0.05);
    foot.segment_start = Vec2(-0.12, -0.08);
    foot.segment_end = Vec2(0.16, -0.08);
    foot.contacts = {Vec2(-0.12, -0.08), Vec2(0.16, -0.08)};
    model.links.push_back(foot);
  }

  auto add_joint = [&](const std::string& name, int parent, int child,
                       Vec2 anchor, double lo, double hi, double kp,
                       double kd, double limit) {
    Joint j;
    j.name = name;
    j.parent = parent;
    j.child = child;
    j.anchor = anchor;
    j.lo = lo;
    j.hi = hi;
    j.kp = kp;
    j.kd = kd;
    j.torque_limit = limit;
    model.joints.push_back(j);
  };
  for (int side = 0; side < 2; ++side) {
    const std::string s = side == 0 ? "left" : "right";
    const int thigh = 1 + 3 * side;
    add_joint(s + "_hip", 0, thigh, Vec2::Zero(), -1.2, 1.8, 1000.0, 40.0,
              300.0);
    add_joint(s + "_knee", thigh, thigh + 1, Vec2(0.0, -0.45), -2.4, 0.0,
              1000.0, 40.0, 300.0);
    add_joint(s + "_ankle", thigh + 1, thigh + 2, Vec2(0.0, -0.45), -0.9,
              0.9, 1000.0, 10.0, 200.0);
  }
  model.standing_pose = {0.1, -0.2, 0.1, 0.1, -0.2, 0.1};
  model.standing_height = 1.0;
  Simulator probe(model);
  model.standing_height = probe.GroundedRootHeight(model.standing_pose);
  return model;
}

BodyModel BodyModelFromJson(const json& doc) {
  BodyModel model;
  try {
    for (const json& jl : doc.at("links")) {
      Link l;
      l.name = jl.value("name", "");
      l.mass = jl.at("mass").get<double>();
      l.length = jl.at("length").get<double>();
      l.inertia = jl.at("inertia").get<double>();
      if (jl.contains("com")) l.com = ReadVec(jl["com"]);
      l.segment_start = Vec2::Zero();
      l.segment_end = Vec2(0.0, -l.length);
      if (jl.contains("segment")) {
        l.segment_start = ReadVec(jl["segment"].at(0));
        l.segment_end = ReadVec(jl["segment"].at(1));
      }
      if (jl.contains("contacts")) {
        for (const json& c : jl["contacts"]) l.contacts.push_back(ReadVec(c));
      }
      model.links.push_back(l);
    }
    for (const json& jj : doc.at("joints")) {
      Joint j;
      j.name = jj.value("name", "");
      j.parent = jj.at("parent").get<int>();
      j.child = jj.at("child").get<int>();
      if (jj.contains("anchor")) j.anchor = ReadVec(jj["anchor"]);
      j.lo = jj.at("lo").get<double>();
      j.hi = jj.at("hi").get<double>();
      j.kp = jj.at("kp").get<double>();
      j.kd = jj.at("kd").get<double>();
      j.torque_limit = jj.at("torque_limit").get<double>();
      model.joints.push_back(j);
    }
    model.root = doc.value("root", 0);
    model.gravity = doc.value("gravity", 9.81);
    if (doc.contains("contact")) {
      const json& c = doc["contact"];
      model.contact.stiffness = c.value("stiffness", 1e4);
      model.contact.damping = c.value("damping", 1e2);
      model.contact.friction = c.value("friction", 1.0);
    }
    if (doc.contains("standing_pose")) {
      model.standing_pose = doc["standing_pose"].get<std::vector<double>>();
    } else {
      model.standing_pose.assign(model.joints.size(), 0.0);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("body model json: ") + e.what());
  }
  if (doc.contains("standing_height")) {
    model.standing_height = doc["standing_height"].get<double>();
  } else {
    model.standing_height = 1.0;
    model.Validate();
    model.standing_height =
        Simulator(model).GroundedRootHeight(model.standing_pose);
  }
  model.Validate();
  return model;
}

json BodyModelToJson(const BodyModel& model) {
  json doc;
  json links = json::array();
  for (const Link& l : model.links) {
    json jl = {{"name", l.name},
               {"mass", l.mass},
               {"length", l.length},
               {"inertia", l.inertia},
               {"com", WriteVec(l.com)},
               {"segment", {WriteVec(l.segment_start), WriteVec(l.segment_end)}}};
    if (!l.contacts.empty()) {
      json c = json::array();
      for (const Vec2& p : l.contacts) c.push_back(WriteVec(p));
      jl["contacts"] = c;
    }
    links.push_back(jl);
  }
  json joints = json::array();
  for (const Joint& j : model.joints) {
    joints.push_back({{"name", j.name},
                      {"parent", j.parent},
                      {"child", j.child},
                      {"anchor", WriteVec(j.anchor)},
                      {"lo", j.lo},
                      {"hi", j.hi},
                      {"kp", j.kp},
                      {"kd", j.kd},
                      {"torque_limit", j.torque_limit}});
  }
  doc["links"] = links;
  doc["joints"] = joints;
  doc["root"] = model.root;
  doc["gravity"] = model.gravity;
  doc["standing_height"] = model.standing_height;
  doc["standing_pose"] = model.standing_pose;
  doc["contact"] = {{"stiffness", model.contact.stiffness},
                    {"damping", model.contact.damping},
                    {"friction", model.contact.friction}};
  return doc;
}

BodyModel LoadBodyModel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kNotFound, "cannot open body model " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, path + ": " + e.what());
  }
  return BodyModelFromJson(doc);
}

}  // namespace hmg::physim
