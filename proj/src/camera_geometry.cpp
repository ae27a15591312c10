#include "roadlayout/camera_geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "roadlayout/errors.hpp"

namespace roadlayout {

void CameraModel::check() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(fx) || !finite(fy) || !finite(cx) || !finite(cy) || !finite(height) ||
      !finite(pitch)) {
    throw DataError("camera parameters must be finite");
  }
  if (!(fx > 0.0) || !(fy > 0.0)) throw DataError("camera focal lengths must be positive");
  if (!(height > 0.0)) throw DataError("camera height must be positive");
  if (!(std::abs(pitch) < std::numbers::pi / 2.0)) {
    throw DataError("camera pitch must lie in (-pi/2, pi/2)");
  }
  if (image_width < 0 || image_height < 0) {
    throw DataError("camera image dimensions must be non-negative");
  }
}

double camera_depth(const CameraModel& cam, double /*x*/, double z) {
  return cam.height * std::sin(cam.pitch) + z * std::cos(cam.pitch);
}

PixelPoint ground_to_image(const CameraModel& cam, double x, double z) {
  const double c = std::cos(cam.pitch);
  const double s = std::sin(cam.pitch);
  const double depth = cam.height * s + z * c;
  if (!(depth > kMinCameraDepth)) {
    throw GeometryError("ground point (" + std::to_string(x) + ", " + std::to_string(z) +
                        ") is at or behind the camera plane");
  }
  const double down = cam.height * c - z * s;
  return {cam.cx + cam.fx * x / depth, cam.cy + cam.fy * down / depth};
}

std::optional<GroundPoint> image_to_ground(const CameraModel& cam, double u, double v,
                                           double max_range) {
  const double c = std::cos(cam.pitch);
  const double s = std::sin(cam.pitch);
  const double ray_x = (u - cam.cx) / cam.fx;
  const double ray_down = (v - cam.cy) / cam.fy;
  // Downward component of the ray direction in ground coordinates.
  const double descent = ray_down * c + s;
  if (!(descent > 0.0)) return std::nullopt;
  const double t = cam.height / descent;
  const GroundPoint hit{t * ray_x, t * (c - ray_down * s)};
  if (!std::isfinite(hit.x) || !std::isfinite(hit.z) || hit.z > max_range) return std::nullopt;
  return hit;
}

namespace {

// Nearest pixel of a cell center, or nothing when outside the image.
std::optional<std::pair<int, int>> project_cell(const CameraModel& cam, GroundPoint p) {
  if (!(camera_depth(cam, p.x, p.z) > kMinCameraDepth)) return std::nullopt;
  const PixelPoint px = ground_to_image(cam, p.x, p.z);
  const bool inside = px.u > -0.5 && px.u < cam.image_width - 0.5 && px.v > -0.5 &&
                      px.v < cam.image_height - 0.5;
  if (!inside) return std::nullopt;
  return std::pair{static_cast<int>(std::floor(px.v + 0.5)),
                   static_cast<int>(std::floor(px.u + 0.5))};
}

}  // namespace

std::vector<bool> visibility_mask(const CameraModel& cam, const GridSpec& spec) {
  cam.check();
  spec.check();
  std::vector<bool> mask(static_cast<std::size_t>(spec.rows) * spec.cols, false);
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      mask[static_cast<std::size_t>(r) * spec.cols + c] =
          project_cell(cam, spec.cell_center(r, c)).has_value();
    }
  }
  return mask;
}

SemanticGrid bev_to_perspective(const SemanticGrid& bev, const GridSpec& spec,
                                const CameraModel& cam) {
  cam.check();
  spec.check();
  if (bev.rows() != spec.rows || bev.cols() != spec.cols) {
    throw DataError("top-view grid is " + std::to_string(bev.rows()) + "x" +
                    std::to_string(bev.cols()) + ", grid spec expects " +
                    std::to_string(spec.rows) + "x" + std::to_string(spec.cols));
  }
  SemanticGrid out(cam.image_height, cam.image_width, SemanticClass::kBackground);
  for (int r = 0; r < cam.image_height; ++r) {
    for (int c = 0; c < cam.image_width; ++c) {
      const auto hit = image_to_ground(cam, c, r, 10.0 * spec.depth_extent);
      if (!hit || !spec.contains(*hit)) continue;
      const auto [row, col] = spec.cell_of(*hit);
      out.at(r, c) = bev.at(row, col);
    }
  }
  return out;
}

SemanticGrid perspective_to_bev(const SemanticGrid& persp, const CameraModel& cam,
                                const GridSpec& spec) {
  cam.check();
  spec.check();
  if (persp.rows() != cam.image_height || persp.cols() != cam.image_width) {
    throw DataError("perspective grid is " + std::to_string(persp.cols()) + "x" +
                    std::to_string(persp.rows()) + " pixels, camera image is " +
                    std::to_string(cam.image_width) + "x" + std::to_string(cam.image_height));
  }
  SemanticGrid out(spec.rows, spec.cols, SemanticClass::kUnknown);
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      if (auto px = project_cell(cam, spec.cell_center(r, c))) {
        out.at(r, c) = persp.at(px->first, px->second);
      }
    }
  }
  return out;
}

}  // namespace roadlayout
