#pragma once

#include "roadlayout/grid.hpp"
#include "roadlayout/scene_model.hpp"

namespace roadlayout {

// Fixed primitive dimensions used by the renderer (meters).
struct RenderStyle {
  static constexpr double kLineWidth = 0.25;
  static constexpr double kDelimiterSpacing = 0.5;  // between the two line centers
  static constexpr double kCrosswalkWidth = 3.0;
  static constexpr double kSideCrosswalkGap = 1.0;  // from the main-road edge
  static constexpr double kIntersectionDepth = 6.0;
};

// Rasterizes theta into a top-view label grid by cell-center membership.
// Paint order Background, Sidewalk, Road, Crosswalk, LaneBoundary; later wins.
// Throws ValidationError for invalid theta.
SemanticGrid render(const SceneAttributes& theta, const GridSpec& spec = {});

}  // namespace roadlayout
