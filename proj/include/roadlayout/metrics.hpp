#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>

#include "json.hpp"
#include "roadlayout/grid.hpp"
#include "roadlayout/scene_model.hpp"

namespace roadlayout {

struct AttributeMetrics {
  double accu_bi = 0.0;
  double accu_mc = 0.0;
  double f1 = 0.0;
  double mse = 0.0;  // squared error in units of each attribute's schema range
};

// Per-attribute rates over the samples where the attribute is active, averaged
// over attributes that have at least one active sample. F1 skips attributes
// with no positive in either prediction or ground truth and counts 0 when
// precision + recall = 0. Throws DataError on length mismatch or empty input.
AttributeMetrics attribute_metrics(std::span<const SceneAttributes> preds,
                                   std::span<const SceneAttributes> gts,
                                   std::span<const AttributeMask> masks);

// Rows index the ground-truth class, columns the predicted class; both include
// Unknown. Merging is associative.
class ConfusionMatrix {
 public:
  void add(const SemanticGrid& pred, const SemanticGrid& gt);
  void merge(const ConfusionMatrix& other);
  std::size_t count(SemanticClass gt, SemanticClass pred) const {
    return counts_[static_cast<std::size_t>(gt)][static_cast<std::size_t>(pred)];
  }

 private:
  std::array<std::array<std::size_t, kNumClassesWithUnknown>, kNumClassesWithUnknown> counts_{};
};

struct ClassScore {
  double iou = 0.0;
  std::optional<double> accuracy;  // recall; absent when the class never occurs in gt
};

// Classes absent from both predictions and ground truth are omitted. Cells
// whose gt is Unknown are ignored.
using SegmentationScores = std::map<SemanticClass, ClassScore>;

SegmentationScores segmentation_scores(const ConfusionMatrix& cm);
SegmentationScores segmentation_metrics(std::span<const SemanticGrid> preds,
                                        std::span<const SemanticGrid> gts);

// Mean IoU over the four layout classes present in this gt. Empty when gt has
// none of them.
std::optional<double> per_image_iou(const SemanticGrid& pred, const SemanticGrid& gt);

inline constexpr int kMaxObjectBin = 8;

struct OcclusionTable {
  std::array<std::optional<double>, kMaxObjectBin + 1> bin_mean{};
  std::array<std::size_t, kMaxObjectBin + 1> bin_images{};
  std::optional<double> average;
};

// Counts above kMaxObjectBin land in the last bin.
OcclusionTable occlusion_binned_iou(std::span<const double> per_image_iou,
                                    std::span<const int> object_counts);

struct EvalReport {
  AttributeMetrics attributes;
  SegmentationScores per_class;
  std::optional<OcclusionTable> occlusion;
  std::size_t frames = 0;
};

nlohmann::json report_to_json(const EvalReport& report);

}  // namespace roadlayout
