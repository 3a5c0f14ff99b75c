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

#ifndef HMG_PHYSIM_RENDER_H_
#define HMG_PHYSIM_RENDER_H_

#include <span>
#include <string>

#include "hmg/physim/simulator.h"

namespace hmg::physim {

struct RenderOptions {
  double frame_spacing = 1.2;  // m between successive figures
  double pixels_per_meter = 120.0;
  double ghost_opacity = 0.35;
  std::string color = "#1f4e79";
  std::string ghost_color = "#808080";
};

// SVG of stick figures laid out left to right, one per frame. When
// `reference` is non-empty its frames are drawn as translucent gray ghosts
// behind the matching frames. Throws Error(kPrecondition) on an empty
// sequence.
std::string RenderSvg(const Simulator& sim, std::span<const SimState> frames,
                      std::span<const SimState> reference = {},
                      const RenderOptions& options = {});

}  // namespace hmg::physim

#endif  // HMG_PHYSIM_RENDER_H_
