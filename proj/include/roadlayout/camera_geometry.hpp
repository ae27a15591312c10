#pragma once

#include <optional>
#include <vector>

#include "roadlayout/grid.hpp"

namespace roadlayout {

// Pinhole camera above a flat ground plane. The optical center sits at
// (0, height, 0) in ground coordinates; yaw and roll are zero. Positive pitch
// tilts the optical axis toward the ground. Pixel coordinates place integer
// values at pixel centers.
struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int image_width = 0;
  int image_height = 0;
  double height = 0.0;
  double pitch = 0.0;

  // Throws DataError when an invariant does not hold.
  void check() const;

  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

inline constexpr double kMinCameraDepth = 1e-6;

// Camera-frame depth of the ground point (X, 0, Z).
double camera_depth(const CameraModel& cam, double x, double z);

// Throws GeometryError when the point is at or behind the camera plane.
PixelPoint ground_to_image(const CameraModel& cam, double x, double z);

// Ray/plane intersection. Empty at or above the horizon, and for hits
// farther than max_range along Z.
std::optional<GroundPoint> image_to_ground(const CameraModel& cam, double u, double v,
                                           double max_range = 600.0);

// True where the cell center lands strictly inside the image.
std::vector<bool> visibility_mask(const CameraModel& cam, const GridSpec& spec);

// Occlusion-free perspective labels from a complete top-view grid. Pixels
// whose ray misses the plane or the grid extent are Background.
SemanticGrid bev_to_perspective(const SemanticGrid& bev, const GridSpec& spec,
                                const CameraModel& cam);

// Top-view labels sampled from a perspective label image. Cells outside the
// camera frustum are Unknown.
SemanticGrid perspective_to_bev(const SemanticGrid& persp, const CameraModel& cam,
                                const GridSpec& spec);

}  // namespace roadlayout
