#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace roadlayout {

// Label values double as the raw on-disk byte.
enum class SemanticClass : std::uint8_t {
  kBackground = 0,
  kRoad = 1,
  kSidewalk = 2,
  kLaneBoundary = 3,
  kCrosswalk = 4,
  kUnknown = 5,
};

inline constexpr std::size_t kNumLabelClasses = 5;  // excludes Unknown
inline constexpr std::size_t kNumClassesWithUnknown = 6;

std::string_view name_of(SemanticClass c);
std::optional<SemanticClass> class_from_byte(std::uint8_t b);

// The four non-catch-all layout classes.
inline constexpr std::array<SemanticClass, 4> kLayoutClasses = {
    SemanticClass::kRoad, SemanticClass::kSidewalk, SemanticClass::kLaneBoundary,
    SemanticClass::kCrosswalk};

struct GroundPoint {
  double x = 0.0;  // meters, right-positive
  double z = 0.0;  // meters, forward-positive
};

// Top-view raster: rows run far-to-near, the ego origin is the bottom-center
// edge of the grid.
struct GridSpec {
  int rows = 256;
  int cols = 128;
  double depth_extent = 60.0;
  double lateral_extent = 30.0;

  double cell_depth() const { return depth_extent / rows; }
  double cell_width() const { return lateral_extent / cols; }

  GroundPoint cell_center(int row, int col) const {
    return {(col + 0.5 - cols / 2.0) * cell_width(), (rows - row - 0.5) * cell_depth()};
  }
  bool contains(GroundPoint p) const {
    return p.z >= 0.0 && p.z <= depth_extent && std::abs(p.x) <= lateral_extent / 2.0;
  }
  // Nearest cell for a ground point inside the extent.
  std::pair<int, int> cell_of(GroundPoint p) const;

  void check() const;
};

class SemanticGrid {
 public:
  SemanticGrid() = default;
  SemanticGrid(int rows, int cols, SemanticClass fill = SemanticClass::kBackground);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return labels_.size(); }

  SemanticClass at(int row, int col) const { return labels_[index(row, col)]; }
  SemanticClass& at(int row, int col) { return labels_[index(row, col)]; }

  std::span<const SemanticClass> labels() const { return labels_; }
  std::span<SemanticClass> labels() { return labels_; }

  SemanticGrid flipped_horizontally() const;

  friend bool operator==(const SemanticGrid&, const SemanticGrid&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(col);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<SemanticClass> labels_;
};

using ClassHistogram = std::array<std::size_t, kNumClassesWithUnknown>;

ClassHistogram class_histogram(const SemanticGrid& grid);

inline std::size_t count_of(const ClassHistogram& h, SemanticClass c) {
  return h[static_cast<std::size_t>(c)];
}

}  // namespace roadlayout
