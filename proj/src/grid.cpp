#include "roadlayout/grid.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "roadlayout/errors.hpp"

namespace roadlayout {

std::string_view name_of(SemanticClass c) {
  switch (c) {
    case SemanticClass::kBackground: return "background";
    case SemanticClass::kRoad: return "road";
    case SemanticClass::kSidewalk: return "sidewalk";
    case SemanticClass::kLaneBoundary: return "lane_boundary";
    case SemanticClass::kCrosswalk: return "crosswalk";
    case SemanticClass::kUnknown: return "unknown";
  }
  return "invalid";
}

std::optional<SemanticClass> class_from_byte(std::uint8_t b) {
  if (b >= kNumClassesWithUnknown) return std::nullopt;
  return static_cast<SemanticClass>(b);
}

std::pair<int, int> GridSpec::cell_of(GroundPoint p) const {
  const int row = rows - 1 - static_cast<int>(std::floor(p.z / cell_depth()));
  const int col = static_cast<int>(std::floor(p.x / cell_width() + cols / 2.0));
  return {std::clamp(row, 0, rows - 1), std::clamp(col, 0, cols - 1)};
}

void GridSpec::check() const {
  if (rows <= 0 || cols <= 0) throw DataError("grid dimensions must be positive");
  if (!(depth_extent > 0.0) || !(lateral_extent > 0.0) || !std::isfinite(depth_extent) ||
      !std::isfinite(lateral_extent)) {
    throw DataError("grid extents must be positive and finite");
  }
}

SemanticGrid::SemanticGrid(int rows, int cols, SemanticClass fill) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("negative grid dimensions");
  labels_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
}

SemanticGrid SemanticGrid::flipped_horizontally() const {
  SemanticGrid out(rows_, cols_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) out.at(r, cols_ - 1 - c) = at(r, c);
  return out;
}

ClassHistogram class_histogram(const SemanticGrid& grid) {
  ClassHistogram h{};
  for (SemanticClass c : grid.labels()) ++h[static_cast<std::size_t>(c)];
  return h;
}

}  // namespace roadlayout
