#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "roadlayout/errors.hpp"

namespace roadlayout {

inline constexpr std::size_t kNumBinary = 14;
inline constexpr std::size_t kNumMulticlass = 2;
inline constexpr std::size_t kNumContinuous = 10;
inline constexpr int kMaxSideLanes = 5;
inline constexpr int kNumLaneCountClasses = kMaxSideLanes + 1;
inline constexpr int kSchemaVersion = 1;

enum class BinaryAttribute : std::size_t {
  kOneWay,
  kLeftSideRoadExists,
  kRightSideRoadExists,
  kMainRoadEndsAtT,
  kCrosswalkNearExists,
  kCrosswalkFarExists,
  kCrosswalkOnLeftSideRoad,
  kCrosswalkOnRightSideRoad,
  kSidewalkLeftExists,
  kSidewalkRightExists,
  kDelimiterExists,
  kMainRoadCurves,
  kCurveDirectionLeft,
  kEgoInIntersection,
};

enum class MulticlassAttribute : std::size_t {
  kLanesLeft,
  kLanesRight,
};

enum class ContinuousAttribute : std::size_t {
  kLaneWidth,
  kLeftSideRoadDistance,
  kRightSideRoadDistance,
  kLeftSideRoadWidth,
  kRightSideRoadWidth,
  kCrosswalkNearDistance,
  kCrosswalkFarDistance,
  kSidewalkWidth,
  kCurveRadius,
  kEgoLateralOffset,
};

std::string_view name_of(BinaryAttribute a);
std::string_view name_of(MulticlassAttribute a);
std::string_view name_of(ContinuousAttribute a);

const std::array<BinaryAttribute, kNumBinary>& all_binary();
const std::array<MulticlassAttribute, kNumMulticlass>& all_multiclass();
const std::array<ContinuousAttribute, kNumContinuous>& all_continuous();

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Fixed value ranges of the continuous attributes. ego_lateral_offset is
// additionally bounded by lane_width / 2 at validation time.
Interval schema_range(ContinuousAttribute a);

// Parent flag that gates an attribute. `active_when` is the parent value that
// makes the child meaningful (delimiter_exists is active when one_way is false).
struct Gate {
  BinaryAttribute parent;
  bool active_when = true;
};

std::optional<Gate> gate_of(BinaryAttribute a);
std::optional<Gate> gate_of(MulticlassAttribute a);
std::optional<Gate> gate_of(ContinuousAttribute a);

// The parametric top-view layout: 14 binary, 2 multi-class and 10 continuous
// attributes. Continuous values are meters except where noted.
struct SceneAttributes {
  std::array<bool, kNumBinary> binary{};
  std::array<int, kNumMulticlass> multiclass{};
  std::array<double, kNumContinuous> continuous{};

  bool& operator[](BinaryAttribute a) { return binary[static_cast<std::size_t>(a)]; }
  bool operator[](BinaryAttribute a) const { return binary[static_cast<std::size_t>(a)]; }
  int& operator[](MulticlassAttribute a) { return multiclass[static_cast<std::size_t>(a)]; }
  int operator[](MulticlassAttribute a) const {
    return multiclass[static_cast<std::size_t>(a)];
  }
  double& operator[](ContinuousAttribute a) {
    return continuous[static_cast<std::size_t>(a)];
  }
  double operator[](ContinuousAttribute a) const {
    return continuous[static_cast<std::size_t>(a)];
  }

  friend bool operator==(const SceneAttributes&, const SceneAttributes&) = default;
};

struct AttributeMask {
  std::array<bool, kNumBinary> active_binary{};
  std::array<bool, kNumMulticlass> active_multiclass{};
  std::array<bool, kNumContinuous> active_continuous{};

  bool operator[](BinaryAttribute a) const {
    return active_binary[static_cast<std::size_t>(a)];
  }
  bool operator[](MulticlassAttribute a) const {
    return active_multiclass[static_cast<std::size_t>(a)];
  }
  bool operator[](ContinuousAttribute a) const {
    return active_continuous[static_cast<std::size_t>(a)];
  }
  std::size_t active_count() const;

  static AttributeMask all_active();
  static AttributeMask none_active();

  friend bool operator==(const AttributeMask&, const AttributeMask&) = default;
};

struct Violation {
  std::string field;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

class ValidationError : public DataError {
 public:
  explicit ValidationError(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

// Violations sorted by field name, then message.
ValidationReport validate(const SceneAttributes& theta);

// Throws ValidationError when theta does not validate.
void require_valid(const SceneAttributes& theta);

// Gating follows the flags only; never looks at continuous or lane values.
AttributeMask active_mask(const SceneAttributes& theta);

// Left/right swap. Involution.
SceneAttributes mirror(const SceneAttributes& theta);

// Copy with inactive binary flags cleared and inactive continuous values
// zeroed. Rendering, targets and metrics are invariant under it.
SceneAttributes canonicalized(const SceneAttributes& theta);

// Optional overrides for sample(). Intervals must lie inside the schema.
struct SampleRanges {
  std::map<ContinuousAttribute, Interval> continuous;
  std::map<MulticlassAttribute, std::pair<int, int>> multiclass;
  std::map<BinaryAttribute, bool> fixed_flags;
};

// Deterministic in (seed, ranges). The result validates and is canonical.
SceneAttributes sample(std::uint64_t seed, const SampleRanges& ranges = {});

// Annotation JSON, schema_version 1, keys in alphabetical order.
std::string to_json(const SceneAttributes& theta);
SceneAttributes from_json(std::string_view text);

}  // namespace roadlayout
