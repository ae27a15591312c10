#include "roadlayout/bev_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace roadlayout {

namespace {

using B = BinaryAttribute;
using M = MulticlassAttribute;
using C = ContinuousAttribute;

// Every lateral quantity below is expressed so that mirroring the scene
// negates it bit-exactly (IEEE negation commutes with +, -, *). That is what
// makes render(mirror(theta)) an exact horizontal flip.

struct RoadFrame {
  double lateral;  // signed distance right of the ego-lane centerline
  double along;    // arc length from the ego origin
  bool in_sector;
};

struct SideRoad {
  bool exists = false;
  double side = 0.0;  // -1 left, +1 right
  double width = 0.0;
  double anchor_x = 0.0;
  double anchor_z = 0.0;
  double tangent_x = 0.0;  // unit tangent of the main road at the anchor
  double tangent_z = 1.0;
  double inner_edge = 0.0;  // magnitude of the far main-road edge
  double near_edge = 0.0;   // magnitude of the main-road edge on this side
  bool crosswalk = false;
};

class SceneRasterizer {
 public:
  explicit SceneRasterizer(const SceneAttributes& theta) {
    lane_width_ = theta[C::kLaneWidth];
    offset_ = theta[C::kEgoLateralOffset];
    lanes_left_ = theta[M::kLanesLeft];
    lanes_right_ = theta[M::kLanesRight];
    edge_left_ = (lanes_left_ + 0.5) * lane_width_;
    edge_right_ = (lanes_right_ + 0.5) * lane_width_;

    if (theta[B::kMainRoadCurves]) {
      radius_ = theta[C::kCurveRadius];
      bend_ = theta[B::kCurveDirectionLeft] ? -1.0 : 1.0;
      center_x_ = bend_ * radius_ - offset_;
    }

    sidewalk_width_ = theta[C::kSidewalkWidth];
    sidewalk_left_ = theta[B::kSidewalkLeftExists];
    sidewalk_right_ = theta[B::kSidewalkRightExists];

    left_ = make_side_road(theta[B::kLeftSideRoadExists], -1.0,
                           theta[C::kLeftSideRoadDistance], theta[C::kLeftSideRoadWidth],
                           theta[B::kCrosswalkOnLeftSideRoad]);
    right_ = make_side_road(theta[B::kRightSideRoadExists], 1.0,
                            theta[C::kRightSideRoadDistance], theta[C::kRightSideRoadWidth],
                            theta[B::kCrosswalkOnRightSideRoad]);

    if (theta[B::kMainRoadEndsAtT]) {
      if (left_.exists) road_end_ = std::min(road_end_, theta[C::kLeftSideRoadDistance]);
      if (right_.exists) road_end_ = std::min(road_end_, theta[C::kRightSideRoadDistance]);
    }
    if (theta[B::kCrosswalkNearExists]) crosswalks_.push_back(theta[C::kCrosswalkNearDistance]);
    if (theta[B::kCrosswalkFarExists]) crosswalks_.push_back(theta[C::kCrosswalkFarDistance]);

    delimiter_ = theta[B::kDelimiterExists] && !theta[B::kOneWay];
    delimiter_center_ = ((lanes_right_ - lanes_left_) * 0.5) * lane_width_;
    intersection_ = theta[B::kEgoInIntersection];
  }

  SemanticClass classify(GroundPoint p) const {
    const RoadFrame f = frame(p);
    const bool main_road = on_main_road(f);

    SemanticClass label = SemanticClass::kBackground;
    if (on_sidewalk(f)) label = SemanticClass::kSidewalk;

    const bool side_left = on_side_road(left_, p);
    const bool side_right = on_side_road(right_, p);
    const bool intersection =
        intersection_ && p.z >= 0.0 && p.z <= RenderStyle::kIntersectionDepth;
    if (main_road || side_left || side_right || intersection) label = SemanticClass::kRoad;

    if ((main_road && on_main_crosswalk(f)) || (side_left && on_side_crosswalk(left_, p)) ||
        (side_right && on_side_crosswalk(right_, p))) {
      label = SemanticClass::kCrosswalk;
    }
    if (main_road && on_marking(f)) label = SemanticClass::kLaneBoundary;
    return label;
  }

 private:
  SideRoad make_side_road(bool exists, double side, double distance, double width,
                          bool crosswalk) const {
    SideRoad s;
    s.exists = exists;
    if (!exists) return s;
    s.side = side;
    s.width = width;
    s.crosswalk = crosswalk;
    s.inner_edge = side < 0.0 ? edge_right_ : edge_left_;
    s.near_edge = side < 0.0 ? edge_left_ : edge_right_;
    if (bend_ == 0.0) {
      s.anchor_x = -offset_;
      s.anchor_z = distance;
      return s;
    }
    const double angle = distance / radius_;
    const double cos_a = std::cos(angle);
    const double sin_a = std::sin(angle);
    s.anchor_x = center_x_ - bend_ * radius_ * cos_a;
    s.anchor_z = radius_ * sin_a;
    s.tangent_x = bend_ * sin_a;
    s.tangent_z = cos_a;
    return s;
  }

  RoadFrame frame(GroundPoint p) const {
    if (bend_ == 0.0) return {p.x + offset_, p.z, true};
    const double dx = p.x - center_x_;
    const double dist = std::sqrt(dx * dx + p.z * p.z);
    const double angle = std::atan2(p.z, -bend_ * dx);
    const bool in_sector = std::abs(angle) <= std::numbers::pi / 2.0;
    return {bend_ * (radius_ - dist), radius_ * angle, in_sector};
  }

  bool on_main_road(const RoadFrame& f) const {
    return f.in_sector && f.along <= road_end_ && -edge_left_ <= f.lateral &&
           f.lateral <= edge_right_;
  }

  bool on_sidewalk(const RoadFrame& f) const {
    if (!f.in_sector || f.along > road_end_) return false;
    auto beside = [&](double side, double edge) {
      const double outward = side * f.lateral;
      return outward > edge && outward <= edge + sidewalk_width_;
    };
    return (sidewalk_left_ && beside(-1.0, edge_left_)) ||
           (sidewalk_right_ && beside(1.0, edge_right_));
  }

  // Coordinates of p in a side road's anchor frame: along the main road
  // tangent, and lateral along the right normal.
  static std::pair<double, double> side_frame(const SideRoad& s, GroundPoint p) {
    const double dx = p.x - s.anchor_x;
    const double dz = p.z - s.anchor_z;
    const double along = dx * s.tangent_x + dz * s.tangent_z;
    const double lateral = dx * s.tangent_z + dz * -s.tangent_x;
    return {along, lateral};
  }

  static bool on_side_road(const SideRoad& s, GroundPoint p) {
    if (!s.exists) return false;
    const auto [along, lateral] = side_frame(s, p);
    return std::abs(along) <= s.width / 2.0 && s.side * lateral >= -s.inner_edge;
  }

  static bool on_side_crosswalk(const SideRoad& s, GroundPoint p) {
    if (!s.crosswalk) return false;
    const double outward = s.side * side_frame(s, p).second;
    const double start = s.near_edge + RenderStyle::kSideCrosswalkGap;
    return outward >= start && outward <= start + RenderStyle::kCrosswalkWidth;
  }

  bool on_main_crosswalk(const RoadFrame& f) const {
    return std::any_of(crosswalks_.begin(), crosswalks_.end(), [&](double d) {
      return std::abs(f.along - d) <= RenderStyle::kCrosswalkWidth / 2.0;
    });
  }

  bool on_marking(const RoadFrame& f) const {
    constexpr double half_line = RenderStyle::kLineWidth / 2.0;
    // Edge lines sit just inside the road band.
    if (f.lateral - -edge_left_ <= RenderStyle::kLineWidth ||
        edge_right_ - f.lateral <= RenderStyle::kLineWidth) {
      return true;
    }
    for (int k = 1; k <= lanes_left_ + lanes_right_; ++k) {
      const double multiple = k - lanes_left_ - 0.5;
      if (std::abs(f.lateral - multiple * lane_width_) <= half_line) return true;
    }
    if (delimiter_) {
      constexpr double half_gap = RenderStyle::kDelimiterSpacing / 2.0;
      if (std::abs(f.lateral - (delimiter_center_ - half_gap)) <= half_line ||
          std::abs(f.lateral - (delimiter_center_ + half_gap)) <= half_line) {
        return true;
      }
    }
    return false;
  }

  double lane_width_ = 0.0;
  double offset_ = 0.0;
  int lanes_left_ = 0;
  int lanes_right_ = 0;
  double edge_left_ = 0.0;
  double edge_right_ = 0.0;

  double bend_ = 0.0;  // 0 straight, -1 curving left, +1 curving right
  double radius_ = 0.0;
  double center_x_ = 0.0;

  double road_end_ = INFINITY;
  double sidewalk_width_ = 0.0;
  bool sidewalk_left_ = false;
  bool sidewalk_right_ = false;
  SideRoad left_;
  SideRoad right_;
  std::vector<double> crosswalks_;
  bool delimiter_ = false;
  double delimiter_center_ = 0.0;
  bool intersection_ = false;
};

}  // namespace

SemanticGrid render(const SceneAttributes& theta, const GridSpec& spec) {
  spec.check();
  require_valid(theta);
  const SceneRasterizer rasterizer(theta);
  SemanticGrid grid(spec.rows, spec.cols);
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) grid.at(r, c) = rasterizer.classify(spec.cell_center(r, c));
  }
  return grid;
}

}  // namespace roadlayout
