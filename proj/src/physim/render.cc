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

#include "hmg/physim/render.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <Eigen/Geometry>

#include "hmg/common/error.h"

namespace hmg::physim {
namespace {

struct Canvas {
  double ppm;
  double ground_y;  // pixel row of z = 0
  double left;      // pixel column of slot 0

  double X(double slot_x) const { return left + slot_x * ppm; }
  double Y(double z) const { return ground_y - z * ppm; }
};

void DrawFigure(std::ostringstream& out, const Simulator& sim, const SimState& s,
                double slot_x, const Canvas& c, const std::string& color,
                double opacity) {
  const Kinematics k = sim.ComputeKinematics(s);
  const BodyModel& m = sim.model();
  out << "<g stroke=\"" << color << "\" stroke-opacity=\"" << opacity
      << "\" stroke-width=\"4\" stroke-linecap=\"round\" fill=\"none\">\n";
  for (size_t i = 0; i < m.links.size(); ++i) {
    const Eigen::Rotation2Dd r(k.angle[i]);
    const Vec2 a = k.origin[i] + r * m.links[i].segment_start;
    const Vec2 b = k.origin[i] + r * m.links[i].segment_end;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  <line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\"/>\n",
                  c.X(a.x() - s.x + slot_x), c.Y(a.y()), c.X(b.x() - s.x + slot_x), c.Y(b.y()));
    out << buf;
  }
  char head[128];
  const Eigen::Rotation2Dd r(k.angle[m.root]);
  const Vec2 top = k.origin[m.root] + r * m.links[m.root].segment_end;
  std::snprintf(head, sizeof(head), "  <circle cx=\"%.1f\" cy=\"%.1f\" r=\"%.1f\"/>\n",
                c.X(top.x() - s.x + slot_x), c.Y(top.y() + 0.1), 0.1 * c.ppm);
  out << head << "</g>\n";
}

}  // namespace

std::string RenderSvg(const Simulator& sim, std::span<const SimState> frames,
                      std::span<const SimState> reference, const RenderOptions& options) {
  if (frames.empty()) throw Error(ErrorKind::kPrecondition, "nothing to render");
  const size_t slots = std::max(frames.size(), reference.size());
  const double ppm = options.pixels_per_meter;
  const double height_m = 2.0;
  const double width = (slots * options.frame_spacing + 0.6) * ppm;
  const Canvas c{ppm, height_m * ppm - 20.0, 0.5 * ppm};
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\">\n",
                width, height_m * ppm, width, height_m * ppm);
  out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"0\" y1=\"%.1f\" x2=\"%.0f\" y2=\"%.1f\" stroke=\"#444\" "
                "stroke-width=\"2\"/>\n",
                c.ground_y, width, c.ground_y);
  out << buf;
  for (size_t i = 0; i < reference.size(); ++i) {
    DrawFigure(out, sim, reference[i], i * options.frame_spacing, c, options.ghost_color,
               options.ghost_opacity);
  }
  for (size_t i = 0; i < frames.size(); ++i) {
    DrawFigure(out, sim, frames[i], i * options.frame_spacing, c, options.color, 1.0);
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace hmg::physim
