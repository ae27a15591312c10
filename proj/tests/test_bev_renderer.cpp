#include <algorithm>
#include <array>
#include <cmath>

#include "doctest.h"
#include "roadlayout/bev_renderer.hpp"
#include "test_support.hpp"

using namespace roadlayout;
using B = BinaryAttribute;
using M = MulticlassAttribute;
using C = ContinuousAttribute;

namespace {

bool is_paved(SemanticClass c) {
  return c == SemanticClass::kRoad || c == SemanticClass::kLaneBoundary ||
         c == SemanticClass::kCrosswalk;
}

// Cells whose center falls in the straight band [lo, hi] over the full depth.
std::size_t band_cell_oracle(const GridSpec& spec, double lo, double hi) {
  std::size_t n = 0;
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      const double x = (c + 0.5 - spec.cols / 2.0) * spec.lateral_extent / spec.cols;
      n += x >= lo && x <= hi;
    }
  }
  return n;
}

// Ties go to the class painted last, as in the renderer.
int paint_rank(std::size_t cls) {
  constexpr std::array<int, kNumClassesWithUnknown> kRank = {0, 2, 1, 4, 3, -1};
  return kRank[cls];
}

SemanticGrid majority_downsample(const SemanticGrid& fine) {
  SemanticGrid out(fine.rows() / 2, fine.cols() / 2);
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < out.cols(); ++c) {
      std::array<int, kNumClassesWithUnknown> votes{};
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc)
          ++votes[static_cast<std::size_t>(fine.at(2 * r + dr, 2 * c + dc))];
      std::size_t best = 0;
      for (std::size_t k = 1; k < votes.size(); ++k) {
        if (votes[k] > votes[best] || (votes[k] == votes[best] && paint_rank(k) > paint_rank(best))) {
          best = k;
        }
      }
      out.at(r, c) = static_cast<SemanticClass>(best);
    }
  }
  return out;
}

SceneAttributes scene_for(std::uint64_t seed) {
  // Every fourth scene is forced onto a curve so arcs get real coverage.
  SampleRanges r;
  if (seed % 4 == 0) r.fixed_flags[B::kMainRoadCurves] = true;
  return sample(seed, r);
}

}  // namespace

TEST_CASE("single lane band matches the cell-center oracle") {
  const GridSpec spec;
  const auto grid = render(testing::single_lane_scene(3.5), spec);
  const auto h = class_histogram(grid);
  const std::size_t paved = count_of(h, SemanticClass::kRoad) + count_of(h, SemanticClass::kLaneBoundary);
  CHECK(paved == band_cell_oracle(spec, -1.75, 1.75));
  // Edge lines take the outermost 0.25 m on each side.
  CHECK(count_of(h, SemanticClass::kRoad) == band_cell_oracle(spec, -1.5 + 1e-12, 1.5 - 1e-12));
  CHECK(count_of(h, SemanticClass::kSidewalk) == 0);
  CHECK(count_of(h, SemanticClass::kCrosswalk) == 0);
  CHECK(count_of(h, SemanticClass::kUnknown) == 0);
  // Centered: the paved columns are symmetric about the grid center.
  for (int c = 0; c < spec.cols; ++c) {
    CHECK(is_paved(grid.at(100, c)) == is_paved(grid.at(100, spec.cols - 1 - c)));
  }
  // Roughly 3.5 / 0.234375 columns wide.
  int columns = 0;
  for (int c = 0; c < spec.cols; ++c) columns += is_paved(grid.at(0, c));
  CHECK(columns >= 14);
  CHECK(columns <= 15);
}

TEST_CASE("grid conventions") {
  const GridSpec spec;
  CHECK(spec.cell_depth() == 0.234375);
  CHECK(spec.cell_width() == 0.234375);
  const auto p = spec.cell_center(255, 0);
  CHECK(p.z == doctest::Approx(0.5 * 0.234375));
  CHECK(p.x == doctest::Approx(-63.5 * 0.234375));
  const auto q = spec.cell_center(0, 127);
  CHECK(q.z == doctest::Approx(59.8828125));
  CHECK(q.x == doctest::Approx(63.5 * 0.234375));
  for (int r : {0, 17, 128, 255}) {
    for (int c : {0, 5, 64, 127}) {
      CHECK(spec.cell_of(spec.cell_center(r, c)) == std::pair{r, c});
    }
  }
}

TEST_CASE("class histogram") {
  const SemanticGrid empty(256, 128);
  const auto h = class_histogram(empty);
  CHECK(count_of(h, SemanticClass::kBackground) == 32768);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto g = render(sample(s));
    const auto hs = class_histogram(g);
    std::size_t total = 0;
    for (auto n : hs) total += n;
    CHECK(total == 32768);
  }
}

TEST_CASE("render is deterministic and never emits Unknown") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto t = scene_for(s);
    const auto a = render(t);
    CHECK(a == render(t));
    CHECK(count_of(class_histogram(a), SemanticClass::kUnknown) == 0);
  }
}

TEST_CASE("mirror equivariance is exact") {
  int curved = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto t = scene_for(s);
    curved += t[B::kMainRoadCurves];
    CHECK(render(mirror(t)) == render(t).flipped_horizontally());
  }
  CHECK(curved >= 50);
}

TEST_CASE("absent primitives paint nothing") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    SampleRanges r;
    r.fixed_flags[B::kSidewalkLeftExists] = false;
    r.fixed_flags[B::kSidewalkRightExists] = false;
    r.fixed_flags[B::kCrosswalkNearExists] = false;
    r.fixed_flags[B::kCrosswalkFarExists] = false;
    r.fixed_flags[B::kCrosswalkOnLeftSideRoad] = false;
    r.fixed_flags[B::kCrosswalkOnRightSideRoad] = false;
    const auto h = class_histogram(render(sample(s, r)));
    CHECK(count_of(h, SemanticClass::kSidewalk) == 0);
    CHECK(count_of(h, SemanticClass::kCrosswalk) == 0);
  }
}

TEST_CASE("crosswalks and markings stay on the road") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto t = scene_for(s);
    // Same scene with the overpainting primitives removed: what is left paved
    // is the road surface.
    auto base = t;
    base[B::kCrosswalkNearExists] = base[B::kCrosswalkFarExists] = false;
    base[B::kCrosswalkOnLeftSideRoad] = base[B::kCrosswalkOnRightSideRoad] = false;
    base[B::kDelimiterExists] = false;
    const auto full = render(t);
    const auto road = render(canonicalized(base));
    bool contained = true;
    for (std::size_t i = 0; i < full.size(); ++i) {
      const auto c = full.labels()[i];
      if (c == SemanticClass::kCrosswalk || c == SemanticClass::kLaneBoundary) {
        contained &= is_paved(road.labels()[i]);
      }
    }
    CHECK(contained);
  }
}

TEST_CASE("double resolution agrees after majority downsampling") {
  const GridSpec coarse;
  GridSpec fine = coarse;
  fine.rows *= 2;
  fine.cols *= 2;
  double worst = 1.0;
  std::size_t same_total = 0;
  std::size_t cells_total = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto t = scene_for(s);
    const auto a = render(t, coarse);
    const auto b = majority_downsample(render(t, fine));
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a.labels()[i] == b.labels()[i];
    worst = std::min(worst, static_cast<double>(same) / a.size());
    same_total += same;
    cells_total += a.size();
  }
  const double pooled = static_cast<double>(same_total) / cells_total;
  MESSAGE("pooled agreement " << pooled << ", worst scene " << worst);
  CHECK(pooled >= 0.95);
}

TEST_CASE("zero side lanes give a one-lane road") {
  SampleRanges r;
  r.multiclass[M::kLanesLeft] = {0, 0};
  r.multiclass[M::kLanesRight] = {0, 0};
  r.fixed_flags[B::kMainRoadCurves] = false;
  r.fixed_flags[B::kEgoInIntersection] = false;
  r.fixed_flags[B::kLeftSideRoadExists] = false;
  r.fixed_flags[B::kRightSideRoadExists] = false;
  r.fixed_flags[B::kMainRoadEndsAtT] = false;
  const GridSpec spec;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto t = sample(s, r);
    const double lw = t[C::kLaneWidth];
    const double center = -t[C::kEgoLateralOffset];
    const auto g = render(t, spec);
    std::size_t paved = 0;
    for (int row = 0; row < spec.rows; ++row)
      for (int c = 0; c < spec.cols; ++c) paved += is_paved(g.at(row, c));
    CHECK(paved == band_cell_oracle(spec, center - lw / 2.0, center + lw / 2.0));
  }
}

TEST_CASE("lane markings and delimiter") {
  auto t = testing::single_lane_scene(3.5);
  t[M::kLanesLeft] = 1;
  t[M::kLanesRight] = 1;
  const GridSpec spec;
  auto g = render(t, spec);
  // Dividers at x = +-1.75; the column centered at 1.641 lies within 0.125 of it.
  const int divider_col = 64 + 7;  // center (7.5) * 0.234375 = 1.758
  CHECK(g.at(128, divider_col) == SemanticClass::kLaneBoundary);
  CHECK(g.at(128, 64) == SemanticClass::kRoad);

  t[B::kDelimiterExists] = true;
  g = render(t, spec);
  // Delimiter lines at +-0.25 around the center: columns centered at +-0.117
  // stay road, +-0.352 are within 0.125 of the line only on one side.
  int marked = 0;
  for (int c = 60; c < 68; ++c) marked += g.at(128, c) == SemanticClass::kLaneBoundary;
  CHECK(marked > 0);
  CHECK(render(mirror(t), spec) == g.flipped_horizontally());

  t[B::kOneWay] = true;  // delimiter inactive on one-way roads
  CHECK(render(t, spec) == render(canonicalized(t), spec));
}

TEST_CASE("crosswalk band location") {
  auto t = testing::single_lane_scene(3.5);
  t[B::kCrosswalkNearExists] = true;
  t[C::kCrosswalkNearDistance] = 20.0;
  const GridSpec spec;
  const auto g = render(t, spec);
  for (int r = 0; r < spec.rows; ++r) {
    const double z = spec.cell_center(r, 64).z;
    const bool inside = std::abs(z - 20.0) <= 1.5;
    CHECK((g.at(r, 64) == SemanticClass::kCrosswalk) == inside);
  }
}

TEST_CASE("sidewalks flank the road") {
  auto t = testing::single_lane_scene(3.5);
  t[B::kSidewalkRightExists] = true;
  t[C::kSidewalkWidth] = 2.0;
  const GridSpec spec;
  const auto g = render(t, spec);
  for (int c = 0; c < spec.cols; ++c) {
    const double x = spec.cell_center(50, c).x;
    CHECK((g.at(50, c) == SemanticClass::kSidewalk) == (x > 1.75 && x <= 3.75));
  }
}

TEST_CASE("intersection band and T junction") {
  const GridSpec spec;
  auto t = testing::single_lane_scene(3.5);
  t[B::kEgoInIntersection] = true;
  auto g = render(t, spec);
  for (int c = 0; c < spec.cols; ++c) {
    CHECK(is_paved(g.at(spec.rows - 1, c)));
    CHECK_FALSE(is_paved(g.at(spec.rows - 40, 0)));  // z ~ 9.3 m, far lateral
  }

  t = testing::single_lane_scene(3.5);
  t[B::kLeftSideRoadExists] = true;
  t[C::kLeftSideRoadDistance] = 30.0;
  t[C::kLeftSideRoadWidth] = 8.0;
  t[B::kMainRoadEndsAtT] = true;
  g = render(t, spec);
  auto at = [&](double x, double z) {
    const auto [r, c] = spec.cell_of({x, z});
    return g.at(r, c);
  };
  CHECK(is_paved(at(0.1, 10.0)));
  CHECK(is_paved(at(0.1, 29.0)));     // inside the side road
  CHECK(is_paved(at(-10.0, 30.0)));   // side road extends left
  CHECK_FALSE(is_paved(at(8.0, 30.0)));  // but not across to the right
  CHECK_FALSE(is_paved(at(0.1, 40.0)));  // main road ends
}

TEST_CASE("curved road bends toward its side") {
  const GridSpec spec;
  auto t = testing::single_lane_scene(3.5);
  t[B::kMainRoadCurves] = true;
  t[C::kCurveRadius] = 40.0;
  t[B::kCurveDirectionLeft] = true;
  const auto g = render(t, spec);
  auto at = [&](double x, double z) {
    const auto [r, c] = spec.cell_of({x, z});
    return g.at(r, c);
  };
  // Centerline of a left curve: x = -(R - sqrt(R^2 - z^2)).
  const double z = 25.0;
  const double x = -(40.0 - std::sqrt(40.0 * 40.0 - z * z));
  CHECK(is_paved(at(x, z)));
  CHECK_FALSE(is_paved(at(-x, z)));
  CHECK(is_paved(at(0.0, 0.5)));
}

TEST_CASE("invalid scenes are rejected") {
  auto t = testing::single_lane_scene();
  t[C::kLaneWidth] = -1.0;
  CHECK_THROWS_AS(render(t), ValidationError);
  GridSpec bad;
  bad.rows = 0;
  CHECK_THROWS_AS(render(testing::single_lane_scene(), bad), DataError);
}
