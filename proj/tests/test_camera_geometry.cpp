#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "roadlayout/bev_renderer.hpp"
#include "roadlayout/camera_geometry.hpp"
#include "test_support.hpp"

using namespace roadlayout;

namespace {

// Independent projection: rotate the camera-relative point by the pitch with
// an explicit matrix, then apply the intrinsics.
std::array<double, 2> project_oracle(const CameraModel& cam, double x, double z) {
  const double p[3] = {x, -cam.height, z};  // y up, relative to the optical center
  const double c = std::cos(cam.pitch), s = std::sin(cam.pitch);
  const double axis[3] = {0.0, -s, c};
  const double down[3] = {0.0, -c, -s};
  const double right[3] = {1.0, 0.0, 0.0};
  auto dot = [&](const double* a) { return a[0] * p[0] + a[1] * p[1] + a[2] * p[2]; };
  const double depth = dot(axis);
  return {cam.cx + cam.fx * dot(right) / depth, cam.cy + cam.fy * dot(down) / depth};
}

CameraModel random_camera(std::mt19937_64& rng) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  CameraModel cam;
  cam.fx = uni(300, 1500);
  cam.fy = uni(300, 1500);
  cam.cx = uni(200, 700);
  cam.cy = uni(150, 400);
  cam.image_width = 1280;
  cam.image_height = 720;
  cam.height = uni(1.0, 2.5);
  cam.pitch = uni(-0.1, 0.15);
  return cam;
}

// Steep downward view whose pixels are far smaller than a grid cell.
CameraModel fine_camera() {
  CameraModel cam;
  cam.fx = cam.fy = 800.0;
  cam.cx = 319.5;
  cam.cy = 239.5;
  cam.image_width = 640;
  cam.image_height = 480;
  cam.height = 2.0;
  cam.pitch = 0.6;
  return cam;
}

SemanticGrid blocky_grid(std::mt19937_64& rng, const GridSpec& spec) {
  SemanticGrid g(spec.rows, spec.cols);
  std::uniform_int_distribution<int> cls(0, 4);
  std::array<std::array<int, 16>, 32> blocks{};
  for (auto& row : blocks)
    for (auto& b : row) b = cls(rng);
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c)
      g.at(r, c) = static_cast<SemanticClass>(blocks[r / 8][c / 8]);
  return g;
}

}  // namespace

TEST_CASE("ground_to_image worked examples") {
  const auto cam = testing::small_camera();
  auto p = ground_to_image(cam, 0.0, 10.0);
  CHECK(p.u == doctest::Approx(320.0).epsilon(1e-12));
  CHECK(p.v == doctest::Approx(315.0).epsilon(1e-12));
  p = ground_to_image(cam, 3.0, 30.0);
  CHECK(p.u == doctest::Approx(370.0).epsilon(1e-12));
  CHECK(p.v == doctest::Approx(265.0).epsilon(1e-12));
  CHECK_THROWS_AS(ground_to_image(cam, 0.0, -1.0), GeometryError);
  CHECK_THROWS_AS(ground_to_image(cam, 0.0, 0.0), GeometryError);
}

TEST_CASE("image_to_ground worked examples") {
  const auto cam = testing::small_camera();
  const auto g = image_to_ground(cam, 320.0, 315.0);
  REQUIRE(g);
  CHECK(g->x == doctest::Approx(0.0));
  CHECK(g->z == doctest::Approx(10.0).epsilon(1e-12));
  CHECK_FALSE(image_to_ground(cam, 320.0, 240.0));
  CHECK_FALSE(image_to_ground(cam, 320.0, 230.0));
  // Far guard.
  CHECK(image_to_ground(cam, 320.0, 241.0, 1000.0));
  CHECK_FALSE(image_to_ground(cam, 320.0, 241.0, 600.0));
}

TEST_CASE("projection matches the rotation-matrix oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> xs(-15.0, 15.0), zs(1.0, 60.0);
  for (int i = 0; i < 200; ++i) {
    const auto cam = random_camera(rng);
    const double x = xs(rng), z = zs(rng);
    const auto p = ground_to_image(cam, x, z);
    const auto q = project_oracle(cam, x, z);
    CHECK(p.u == doctest::Approx(q[0]).epsilon(1e-12));
    CHECK(p.v == doctest::Approx(q[1]).epsilon(1e-12));
  }
}

TEST_CASE("round trip over random cameras") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> xs(-15.0, 15.0), zs(4.0, 60.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto cam = random_camera(rng);
    for (int i = 0; i < 100; ++i) {
      const double x = xs(rng), z = zs(rng);
      const auto p = ground_to_image(cam, x, z);
      const auto g = image_to_ground(cam, p.u, p.v);
      REQUIRE(g);
      worst = std::max({worst, std::abs(g->x - x), std::abs(g->z - z)});
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("v decreases strictly with depth at zero pitch") {
  const auto cam = testing::small_camera();
  double prev = INFINITY;
  for (double z = 0.5; z <= 60.0; z += 0.05) {
    const double v = ground_to_image(cam, 0.0, z).v;
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("pitch moves the horizon") {
  auto cam = testing::small_camera();
  cam.pitch = 0.1;
  const double horizon = cam.cy - cam.fy * std::tan(cam.pitch);
  CHECK_FALSE(image_to_ground(cam, 320.0, horizon - 0.5));
  CHECK(image_to_ground(cam, 320.0, horizon + 0.5, 1e9));
}

TEST_CASE("visibility mask") {
  const auto cam = testing::small_camera();
  const GridSpec spec;
  const auto mask = visibility_mask(cam, spec);
  auto visible = [&](double x, double z) {
    const auto [r, c] = spec.cell_of({x, z});
    return static_cast<bool>(mask[static_cast<std::size_t>(r) * spec.cols + c]);
  };
  CHECK(visible(0.0, 10.0));
  CHECK_FALSE(visible(10.0, 10.0));
  CHECK_FALSE(visible(0.0, 0.5));  // below the bottom image edge

  auto blind = cam;
  blind.image_height = 0;
  const auto none = visibility_mask(blind, spec);
  CHECK(std::none_of(none.begin(), none.end(), [](bool b) { return b; }));

  // Oracle: cell centers strictly inside the image.
  for (int r = 0; r < spec.rows; r += 3) {
    for (int c = 0; c < spec.cols; c += 3) {
      const auto p = spec.cell_center(r, c);
      const auto q = project_oracle(cam, p.x, p.z);
      const bool inside = q[0] > -0.5 && q[0] < 639.5 && q[1] > -0.5 && q[1] < 479.5;
      CHECK(mask[static_cast<std::size_t>(r) * spec.cols + c] == inside);
    }
  }
}

TEST_CASE("bev_to_perspective constant sources") {
  const auto cam = testing::small_camera();
  const GridSpec spec;
  const auto empty = bev_to_perspective(SemanticGrid(256, 128), spec, cam);
  CHECK(count_of(class_histogram(empty), SemanticClass::kBackground) == 640u * 480u);

  const auto road = bev_to_perspective(SemanticGrid(256, 128, SemanticClass::kRoad), spec, cam);
  REQUIRE(road.rows() == 480);
  REQUIRE(road.cols() == 640);
  for (int v = 0; v < 480; ++v) {
    for (int u = 0; u < 640; ++u) {
      bool expect = false;
      if (v > cam.cy) {
        const double z = cam.fy * cam.height / (v - cam.cy);
        const double x = (u - cam.cx) * z / cam.fx;
        expect = z <= 60.0 && std::abs(x) <= 15.0;
        // Hits landing exactly on the extent edge may round either way.
        if (std::abs(std::abs(x) - 15.0) < 1e-9 || std::abs(z - 60.0) < 1e-9) continue;
      }
      if ((road.at(v, u) == SemanticClass::kRoad) != expect) {
        FAIL_CHECK("pixel " << u << "," << v);
      }
    }
  }
}

TEST_CASE("bev_to_perspective crosswalk band rows") {
  const auto cam = testing::small_camera();
  const GridSpec spec;
  SemanticGrid bev(256, 128, SemanticClass::kRoad);
  for (int r = 0; r < spec.rows; ++r) {
    const double z_lo = (spec.rows - r - 1) * spec.cell_depth();
    const double z_hi = z_lo + spec.cell_depth();
    if (z_hi > 10.0 && z_lo < 12.0) {
      for (int c = 0; c < spec.cols; ++c) bev.at(r, c) = SemanticClass::kCrosswalk;
    }
  }
  const auto persp = bev_to_perspective(bev, spec, cam);
  const int u = 320;
  for (int v = 241; v < 480; ++v) {
    const double z = cam.fy * cam.height / (v - cam.cy);
    const bool crosswalk = persp.at(v, u) == SemanticClass::kCrosswalk;
    if (v >= 303 && v <= 315) CHECK(crosswalk);  // v in [302.5, 315]
    if (z < 10.0 - spec.cell_depth() || z > 12.0 + spec.cell_depth()) CHECK_FALSE(crosswalk);
  }
}

TEST_CASE("perspective_to_bev keeps Unknown exactly off the visible cells") {
  std::mt19937_64 rng(8);
  const GridSpec spec;
  for (int k = 0; k < 10; ++k) {
    auto cam = random_camera(rng);
    cam.image_width = 320;
    cam.image_height = 240;
    SemanticGrid persp(240, 320);
    for (auto& l : persp.labels()) l = static_cast<SemanticClass>(rng() % 5);
    const auto bev = perspective_to_bev(persp, cam, spec);
    const auto mask = visibility_mask(cam, spec);
    for (std::size_t i = 0; i < bev.size(); ++i) {
      CHECK((bev.labels()[i] == SemanticClass::kUnknown) == !mask[i]);
    }
  }
  const auto cam = testing::small_camera();
  const auto bev = perspective_to_bev(SemanticGrid(480, 640, SemanticClass::kRoad), cam, spec);
  const auto mask = visibility_mask(cam, spec);
  for (std::size_t i = 0; i < bev.size(); ++i) {
    CHECK(bev.labels()[i] == (mask[i] ? SemanticClass::kRoad : SemanticClass::kUnknown));
  }
}

TEST_CASE("1x1 image sees only the cells projecting into its pixel") {
  const GridSpec spec;
  auto cam = testing::small_camera();
  // Put the principal point so that one cell center lands on pixel (0, 0).
  const auto target = spec.cell_center(200, 70);
  const auto p = ground_to_image(cam, target.x, target.z);
  cam.cx -= p.u;
  cam.cy -= p.v;
  cam.image_width = cam.image_height = 1;
  const auto bev = perspective_to_bev(SemanticGrid(1, 1, SemanticClass::kSidewalk), cam, spec);
  std::size_t seen = 0;
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      const auto q = spec.cell_center(r, c);
      const auto o = project_oracle(cam, q.x, q.z);
      const bool inside = std::abs(o[0]) < 0.5 && std::abs(o[1]) < 0.5;
      CHECK((bev.at(r, c) == SemanticClass::kSidewalk) == inside);
      CHECK((bev.at(r, c) == SemanticClass::kUnknown) == !inside);
      seen += inside;
    }
  }
  CHECK(seen >= 1);
  CHECK(bev.at(200, 70) == SemanticClass::kSidewalk);
}

TEST_CASE("label round trip is exact on uniform neighborhoods") {
  const auto cam = fine_camera();
  const GridSpec spec;
  const auto mask = visibility_mask(cam, spec);
  std::mt19937_64 rng(21);
  std::size_t checked = 0;
  for (int k = 0; k < 10; ++k) {
    const auto g = blocky_grid(rng, spec);
    const auto back = perspective_to_bev(bev_to_perspective(g, spec, cam), cam, spec);
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        if (!mask[static_cast<std::size_t>(r) * spec.cols + c] || !testing::uniform_neighborhood(g, r, c)) continue;
        ++checked;
        if (back.at(r, c) != g.at(r, c)) FAIL_CHECK("cell " << r << "," << c);
      }
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("bad inputs") {
  auto cam = testing::small_camera();
  const GridSpec spec;
  CHECK_THROWS_AS(perspective_to_bev(SemanticGrid(10, 10), cam, spec), DataError);
  CHECK_THROWS_AS(bev_to_perspective(SemanticGrid(10, 10), spec, cam), DataError);
  cam.fx = 0.0;
  CHECK_THROWS_AS(cam.check(), DataError);
  cam = testing::small_camera();
  cam.height = -1.0;
  CHECK_THROWS_AS(visibility_mask(cam, spec), DataError);
  cam = testing::small_camera();
  cam.pitch = 2.0;
  CHECK_THROWS_AS(cam.check(), DataError);
}
