#include "roadlayout/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <utility>

#include "roadlayout/scene_json.hpp"

namespace roadlayout {

using B = BinaryAttribute;
using M = MulticlassAttribute;
using C = ContinuousAttribute;

ParseError::ParseError(std::string message, std::size_t line, std::size_t column)
    : DataError([&] {
        if (line == 0) return message;
        std::ostringstream os;
        os << "line " << line;
        if (column != 0) os << ", column " << column;
        os << ": " << message;
        return os.str();
      }()),
      detail_(std::move(message)),
      line_(line),
      column_(column) {}

namespace {

constexpr std::array<std::string_view, kNumBinary> kBinaryNames = {
    "one_way",
    "left_side_road_exists",
    "right_side_road_exists",
    "main_road_ends_at_T",
    "crosswalk_near_exists",
    "crosswalk_far_exists",
    "crosswalk_on_left_side_road",
    "crosswalk_on_right_side_road",
    "sidewalk_left_exists",
    "sidewalk_right_exists",
    "delimiter_exists",
    "main_road_curves",
    "curve_direction_left",
    "ego_in_intersection",
};

constexpr std::array<std::string_view, kNumMulticlass> kMulticlassNames = {
    "lanes_left",
    "lanes_right",
};

constexpr std::array<std::string_view, kNumContinuous> kContinuousNames = {
    "lane_width",
    "left_side_road_distance",
    "right_side_road_distance",
    "left_side_road_width",
    "right_side_road_width",
    "crosswalk_near_distance",
    "crosswalk_far_distance",
    "sidewalk_width",
    "curve_radius",
    "ego_lateral_offset",
};

constexpr std::array<Interval, kNumContinuous> kContinuousRanges = {{
    {2.5, 5.0},     // lane_width
    {0.0, 60.0},    // left_side_road_distance
    {0.0, 60.0},    // right_side_road_distance
    {3.0, 12.0},    // left_side_road_width
    {3.0, 12.0},    // right_side_road_width
    {0.0, 60.0},    // crosswalk_near_distance
    {0.0, 60.0},    // crosswalk_far_distance
    {1.0, 4.0},     // sidewalk_width
    {20.0, 1000.0}, // curve_radius
    {-2.5, 2.5},    // ego_lateral_offset
}};

// Left/right attribute pairs exchanged by mirror().
constexpr std::array<std::pair<B, B>, 3> kBinaryPairs = {{
    {B::kLeftSideRoadExists, B::kRightSideRoadExists},
    {B::kCrosswalkOnLeftSideRoad, B::kCrosswalkOnRightSideRoad},
    {B::kSidewalkLeftExists, B::kSidewalkRightExists},
}};
constexpr std::array<std::pair<C, C>, 2> kContinuousPairs = {{
    {C::kLeftSideRoadDistance, C::kRightSideRoadDistance},
    {C::kLeftSideRoadWidth, C::kRightSideRoadWidth},
}};

template <typename E, std::size_t N>
std::array<E, N> enumerate() {
  std::array<E, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = static_cast<E>(i);
  return out;
}

std::size_t idx(auto e) { return static_cast<std::size_t>(e); }

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string_view name_of(BinaryAttribute a) { return kBinaryNames.at(idx(a)); }
std::string_view name_of(MulticlassAttribute a) { return kMulticlassNames.at(idx(a)); }
std::string_view name_of(ContinuousAttribute a) { return kContinuousNames.at(idx(a)); }

const std::array<BinaryAttribute, kNumBinary>& all_binary() {
  static const auto all = enumerate<B, kNumBinary>();
  return all;
}
const std::array<MulticlassAttribute, kNumMulticlass>& all_multiclass() {
  static const auto all = enumerate<M, kNumMulticlass>();
  return all;
}
const std::array<ContinuousAttribute, kNumContinuous>& all_continuous() {
  static const auto all = enumerate<C, kNumContinuous>();
  return all;
}

Interval schema_range(ContinuousAttribute a) { return kContinuousRanges.at(idx(a)); }

std::optional<Gate> gate_of(BinaryAttribute a) {
  switch (a) {
    case B::kCrosswalkOnLeftSideRoad: return Gate{B::kLeftSideRoadExists};
    case B::kCrosswalkOnRightSideRoad: return Gate{B::kRightSideRoadExists};
    case B::kCurveDirectionLeft: return Gate{B::kMainRoadCurves};
    case B::kDelimiterExists: return Gate{B::kOneWay, false};
    default: return std::nullopt;
  }
}

std::optional<Gate> gate_of(MulticlassAttribute) { return std::nullopt; }

std::optional<Gate> gate_of(ContinuousAttribute a) {
  switch (a) {
    case C::kLeftSideRoadDistance:
    case C::kLeftSideRoadWidth: return Gate{B::kLeftSideRoadExists};
    case C::kRightSideRoadDistance:
    case C::kRightSideRoadWidth: return Gate{B::kRightSideRoadExists};
    case C::kCrosswalkNearDistance: return Gate{B::kCrosswalkNearExists};
    case C::kCrosswalkFarDistance: return Gate{B::kCrosswalkFarExists};
    case C::kCurveRadius: return Gate{B::kMainRoadCurves};
    default: return std::nullopt;
  }
}

std::size_t AttributeMask::active_count() const {
  auto n = std::count(active_binary.begin(), active_binary.end(), true) +
           std::count(active_multiclass.begin(), active_multiclass.end(), true) +
           std::count(active_continuous.begin(), active_continuous.end(), true);
  return static_cast<std::size_t>(n);
}

AttributeMask AttributeMask::all_active() {
  AttributeMask m;
  m.active_binary.fill(true);
  m.active_multiclass.fill(true);
  m.active_continuous.fill(true);
  return m;
}

AttributeMask AttributeMask::none_active() { return AttributeMask{}; }

ValidationError::ValidationError(ValidationReport report)
    : DataError([&] {
        std::string msg = "invalid scene attributes:";
        for (const auto& v : report.violations) msg += " " + v.field + " (" + v.message + ");";
        return msg;
      }()),
      report_(std::move(report)) {}

AttributeMask active_mask(const SceneAttributes& theta) {
  AttributeMask mask;
  auto is_active = [&](const std::optional<Gate>& g) {
    return !g || theta[g->parent] == g->active_when;
  };
  for (auto a : all_binary()) mask.active_binary[idx(a)] = is_active(gate_of(a));
  for (auto a : all_multiclass()) mask.active_multiclass[idx(a)] = is_active(gate_of(a));
  for (auto a : all_continuous()) mask.active_continuous[idx(a)] = is_active(gate_of(a));
  return mask;
}

ValidationReport validate(const SceneAttributes& theta) {
  ValidationReport report;
  auto add = [&](std::string_view field, std::string message) {
    report.violations.push_back({std::string(field), std::move(message)});
  };
  const AttributeMask mask = active_mask(theta);

  for (auto a : all_multiclass()) {
    const int n = theta[a];
    if (n < 0 || n > kMaxSideLanes) {
      add(name_of(a), "lane count " + std::to_string(n) + " outside [0, " +
                          std::to_string(kMaxSideLanes) + "]");
    }
  }
  for (auto a : all_continuous()) {
    if (!mask[a]) continue;
    const double v = theta[a];
    if (!std::isfinite(v)) {
      add(name_of(a), "value is not finite");
      continue;
    }
    if (a == C::kEgoLateralOffset) {
      const double half = theta[C::kLaneWidth] / 2.0;
      if (!(std::abs(v) <= half)) {
        add(name_of(a), "|" + format_number(v) + "| exceeds lane_width / 2 = " +
                            format_number(half));
      }
      continue;
    }
    const Interval r = schema_range(a);
    if (!r.contains(v)) {
      add(name_of(a), format_number(v) + " outside [" + format_number(r.lo) + ", " +
                          format_number(r.hi) + "]");
    }
  }
  if (theta[B::kCrosswalkNearExists] && theta[B::kCrosswalkFarExists] &&
      !(theta[C::kCrosswalkFarDistance] > theta[C::kCrosswalkNearDistance])) {
    add(name_of(C::kCrosswalkFarDistance),
        "must be greater than crosswalk_near_distance when both crosswalks exist");
  }
  if (theta[B::kMainRoadEndsAtT] && !theta[B::kLeftSideRoadExists] &&
      !theta[B::kRightSideRoadExists]) {
    add(name_of(B::kMainRoadEndsAtT), "requires a left or right side road");
  }

  std::sort(report.violations.begin(), report.violations.end(),
            [](const Violation& a, const Violation& b) {
              return std::tie(a.field, a.message) < std::tie(b.field, b.message);
            });
  return report;
}

void require_valid(const SceneAttributes& theta) {
  auto report = validate(theta);
  if (!report.ok()) throw ValidationError(std::move(report));
}

SceneAttributes mirror(const SceneAttributes& theta) {
  SceneAttributes out = theta;
  for (auto [l, r] : kBinaryPairs) std::swap(out[l], out[r]);
  for (auto [l, r] : kContinuousPairs) std::swap(out[l], out[r]);
  std::swap(out[M::kLanesLeft], out[M::kLanesRight]);
  if (theta[B::kMainRoadCurves]) out[B::kCurveDirectionLeft] = !theta[B::kCurveDirectionLeft];
  out[C::kEgoLateralOffset] = -theta[C::kEgoLateralOffset];
  return out;
}

SceneAttributes canonicalized(const SceneAttributes& theta) {
  SceneAttributes out = theta;
  const AttributeMask mask = active_mask(theta);
  for (auto a : all_binary())
    if (!mask[a]) out[a] = false;
  for (auto a : all_continuous())
    if (!mask[a]) out[a] = 0.0;
  return out;
}

namespace {

Interval continuous_draw_range(const SampleRanges& ranges, C a) {
  const Interval schema = schema_range(a);
  auto it = ranges.continuous.find(a);
  if (it == ranges.continuous.end()) return schema;
  const Interval r = it->second;
  if (!(r.lo <= r.hi)) {
    throw DataError("inconsistent range override for " + std::string(name_of(a)) + ": lo " +
                    format_number(r.lo) + " > hi " + format_number(r.hi));
  }
  if (r.lo < schema.lo || r.hi > schema.hi) {
    throw DataError("range override for " + std::string(name_of(a)) + " leaves [" +
                    format_number(schema.lo) + ", " + format_number(schema.hi) + "]");
  }
  return r;
}

std::pair<int, int> multiclass_draw_range(const SampleRanges& ranges, M a) {
  auto it = ranges.multiclass.find(a);
  if (it == ranges.multiclass.end()) return {0, 3};
  auto [lo, hi] = it->second;
  if (lo > hi) {
    throw DataError("inconsistent range override for " + std::string(name_of(a)) + ": lo " +
                    std::to_string(lo) + " > hi " + std::to_string(hi));
  }
  if (lo < 0 || hi > kMaxSideLanes) {
    throw DataError("range override for " + std::string(name_of(a)) + " leaves [0, " +
                    std::to_string(kMaxSideLanes) + "]");
  }
  return {lo, hi};
}

}  // namespace

SceneAttributes sample(std::uint64_t seed, const SampleRanges& ranges) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](Interval r) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };
  SceneAttributes theta;

  auto flag = [&](B a, double p, bool parent_ok = true) {
    auto it = ranges.fixed_flags.find(a);
    const bool drawn = std::bernoulli_distribution(p)(rng);
    if (it != ranges.fixed_flags.end()) {
      if (it->second && !parent_ok) {
        throw DataError("fixed flag " + std::string(name_of(a)) +
                        "=true conflicts with its gating parent");
      }
      theta[a] = it->second;
    } else {
      theta[a] = parent_ok && drawn;
    }
  };

  flag(B::kOneWay, 0.3);
  flag(B::kLeftSideRoadExists, 0.35);
  flag(B::kRightSideRoadExists, 0.35);
  flag(B::kMainRoadEndsAtT, 0.3,
       theta[B::kLeftSideRoadExists] || theta[B::kRightSideRoadExists]);
  flag(B::kCrosswalkNearExists, 0.3);
  flag(B::kCrosswalkFarExists, 0.25);
  flag(B::kCrosswalkOnLeftSideRoad, 0.3, theta[B::kLeftSideRoadExists]);
  flag(B::kCrosswalkOnRightSideRoad, 0.3, theta[B::kRightSideRoadExists]);
  flag(B::kSidewalkLeftExists, 0.6);
  flag(B::kSidewalkRightExists, 0.6);
  flag(B::kDelimiterExists, 0.3, !theta[B::kOneWay]);
  flag(B::kMainRoadCurves, 0.25);
  flag(B::kCurveDirectionLeft, 0.5, theta[B::kMainRoadCurves]);
  flag(B::kEgoInIntersection, 0.1);

  for (auto a : all_multiclass()) {
    auto [lo, hi] = multiclass_draw_range(ranges, a);
    theta[a] = std::uniform_int_distribution<int>(lo, hi)(rng);
  }

  const double lane_width = uniform(continuous_draw_range(ranges, C::kLaneWidth));
  theta[C::kLaneWidth] = lane_width;
  {
    Interval r = continuous_draw_range(ranges, C::kEgoLateralOffset);
    r.lo = std::max(r.lo, -lane_width / 2.0);
    r.hi = std::min(r.hi, lane_width / 2.0);
    if (r.lo > r.hi) {
      throw DataError("ego_lateral_offset override is incompatible with lane_width " +
                      format_number(lane_width));
    }
    theta[C::kEgoLateralOffset] = uniform(r);
  }
  for (auto a : {C::kLeftSideRoadDistance, C::kRightSideRoadDistance, C::kLeftSideRoadWidth,
                 C::kRightSideRoadWidth, C::kSidewalkWidth, C::kCurveRadius}) {
    theta[a] = uniform(continuous_draw_range(ranges, a));
  }

  const Interval near_range = continuous_draw_range(ranges, C::kCrosswalkNearDistance);
  const Interval far_range = continuous_draw_range(ranges, C::kCrosswalkFarDistance);
  if (theta[B::kCrosswalkNearExists] && theta[B::kCrosswalkFarExists]) {
    // far must exceed near: draw near below far's upper bound, then far above near.
    Interval near_r = near_range;
    near_r.hi = std::min(near_r.hi, std::nextafter(far_range.hi, -1.0));
    if (near_r.lo > near_r.hi) {
      throw DataError("crosswalk distance overrides leave no room for far > near");
    }
    const double near = uniform(near_r);
    Interval far_r = far_range;
    far_r.lo = std::max(far_r.lo, std::nextafter(near, far_range.hi));
    theta[C::kCrosswalkNearDistance] = near;
    theta[C::kCrosswalkFarDistance] = uniform(far_r);
  } else {
    theta[C::kCrosswalkNearDistance] = uniform(near_range);
    theta[C::kCrosswalkFarDistance] = uniform(far_range);
  }

  theta = canonicalized(theta);
  require_valid(theta);
  return theta;
}

nlohmann::json attributes_to_json(const SceneAttributes& theta) {
  const SceneAttributes canon = canonicalized(theta);
  nlohmann::json binary = nlohmann::json::object();
  for (auto a : all_binary()) binary[std::string(name_of(a))] = theta[a];
  nlohmann::json multiclass = nlohmann::json::object();
  for (auto a : all_multiclass()) multiclass[std::string(name_of(a))] = theta[a];
  nlohmann::json continuous = nlohmann::json::object();
  for (auto a : all_continuous()) continuous[std::string(name_of(a))] = canon[a];
  return nlohmann::json{{"schema_version", kSchemaVersion},
                        {"binary", std::move(binary)},
                        {"multiclass", std::move(multiclass)},
                        {"continuous", std::move(continuous)}};
}

namespace {

[[noreturn]] void fail(std::string_view context, const std::string& msg) {
  if (context.empty()) throw ParseError(msg);
  throw ParseError(std::string(context) + ": " + msg);
}

const nlohmann::json& require_object(const nlohmann::json& j, std::string_view key,
                                     std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) fail(context, "missing field '" + std::string(key) + "'");
  if (!it->is_object()) fail(context, "field '" + std::string(key) + "' must be an object");
  return *it;
}

template <typename Attr, std::size_t N>
void reject_unknown_keys(const nlohmann::json& group, const std::array<Attr, N>& attrs,
                         std::string_view group_name, std::string_view context) {
  for (const auto& item : group.items()) {
    const bool known = std::any_of(attrs.begin(), attrs.end(),
                                   [&](Attr a) { return name_of(a) == item.key(); });
    if (!known) {
      fail(context, "unknown field '" + std::string(group_name) + "." + item.key() + "'");
    }
  }
}

}  // namespace

SceneAttributes attributes_from_json(const nlohmann::json& j, std::string_view context) {
  if (!j.is_object()) fail(context, "annotation must be a JSON object");
  auto version = j.find("schema_version");
  if (version == j.end()) fail(context, "missing field 'schema_version'");
  if (!version->is_number_integer()) fail(context, "field 'schema_version' must be an integer");
  if (version->get<long long>() != kSchemaVersion) {
    fail(context, "unsupported schema_version " + std::to_string(version->get<long long>()));
  }
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    if (k != "schema_version" && k != "binary" && k != "multiclass" && k != "continuous") {
      fail(context, "unknown field '" + k + "'");
    }
  }

  SceneAttributes theta;
  const auto& binary = require_object(j, "binary", context);
  reject_unknown_keys(binary, all_binary(), "binary", context);
  for (auto a : all_binary()) {
    const std::string key(name_of(a));
    auto it = binary.find(key);
    if (it == binary.end()) fail(context, "missing field 'binary." + key + "'");
    if (!it->is_boolean()) fail(context, "field 'binary." + key + "' must be a boolean");
    theta[a] = it->get<bool>();
  }
  const auto& multiclass = require_object(j, "multiclass", context);
  reject_unknown_keys(multiclass, all_multiclass(), "multiclass", context);
  for (auto a : all_multiclass()) {
    const std::string key(name_of(a));
    auto it = multiclass.find(key);
    if (it == multiclass.end()) fail(context, "missing field 'multiclass." + key + "'");
    if (!it->is_number_integer()) {
      fail(context, "field 'multiclass." + key + "' must be an integer");
    }
    const auto n = it->get<long long>();
    if (n < -1000 || n > 1000) fail(context, "field 'multiclass." + key + "' is out of range");
    theta[a] = static_cast<int>(n);
  }
  const auto& continuous = require_object(j, "continuous", context);
  reject_unknown_keys(continuous, all_continuous(), "continuous", context);
  for (auto a : all_continuous()) {
    const std::string key(name_of(a));
    auto it = continuous.find(key);
    if (it == continuous.end()) fail(context, "missing field 'continuous." + key + "'");
    if (!it->is_number()) fail(context, "field 'continuous." + key + "' must be a number");
    theta[a] = it->get<double>();
  }
  return theta;
}

std::string to_json(const SceneAttributes& theta) { return attributes_to_json(theta).dump(); }

SceneAttributes from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return attributes_from_json(j);
}

nlohmann::json schema_json() {
  auto gate_json = [](const std::optional<Gate>& g) -> nlohmann::json {
    if (!g) return nullptr;
    return {{"parent", std::string(name_of(g->parent))}, {"active_when", g->active_when}};
  };
  nlohmann::json binary = nlohmann::json::array();
  for (auto a : all_binary()) {
    binary.push_back({{"name", std::string(name_of(a))}, {"gate", gate_json(gate_of(a))}});
  }
  nlohmann::json multiclass = nlohmann::json::array();
  for (auto a : all_multiclass()) {
    multiclass.push_back({{"name", std::string(name_of(a))},
                          {"min", 0},
                          {"max", kMaxSideLanes},
                          {"gate", gate_json(gate_of(a))}});
  }
  nlohmann::json continuous = nlohmann::json::array();
  for (auto a : all_continuous()) {
    const Interval r = schema_range(a);
    nlohmann::json entry = {{"name", std::string(name_of(a))},
                            {"min", r.lo},
                            {"max", r.hi},
                            {"unit", "m"},
                            {"gate", gate_json(gate_of(a))}};
    if (a == C::kEgoLateralOffset) entry["max_abs_fraction_of"] = {{"lane_width", 0.5}};
    continuous.push_back(std::move(entry));
  }
  return {{"schema_version", kSchemaVersion},
          {"binary", std::move(binary)},
          {"multiclass", std::move(multiclass)},
          {"continuous", std::move(continuous)},
          {"constraints",
           nlohmann::json::array(
               {"crosswalk_far_distance > crosswalk_near_distance when both crosswalks exist",
                "main_road_ends_at_T requires a left or right side road"})}};
}

}  // namespace roadlayout
