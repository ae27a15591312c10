#include "roadlayout/metrics.hpp"

#include <algorithm>
#include <string>

namespace roadlayout {

namespace {

struct BinaryCounts {
  std::size_t active = 0;
  std::size_t correct = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

double ratio(std::size_t num, std::size_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

AttributeMetrics attribute_metrics(std::span<const SceneAttributes> preds,
                                   std::span<const SceneAttributes> gts,
                                   std::span<const AttributeMask> masks) {
  if (preds.size() != gts.size() || gts.size() != masks.size()) {
    throw DataError("attribute metrics need equal-length inputs (" + std::to_string(preds.size()) +
                    " predictions, " + std::to_string(gts.size()) + " ground truths, " +
                    std::to_string(masks.size()) + " masks)");
  }
  if (gts.empty()) throw DataError("attribute metrics need at least one sample");

  std::array<BinaryCounts, kNumBinary> binary{};
  std::array<BinaryCounts, kNumMulticlass> multi{};
  double squared_error = 0.0;
  std::size_t regression_entries = 0;

  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (auto a : all_binary()) {
      if (!masks[i][a]) continue;
      auto& c = binary[static_cast<std::size_t>(a)];
      const bool p = preds[i][a];
      const bool g = gts[i][a];
      ++c.active;
      c.correct += p == g;
      c.tp += p && g;
      c.fp += p && !g;
      c.fn += !p && g;
    }
    for (auto a : all_multiclass()) {
      if (!masks[i][a]) continue;
      auto& c = multi[static_cast<std::size_t>(a)];
      ++c.active;
      c.correct += preds[i][a] == gts[i][a];
    }
    for (auto a : all_continuous()) {
      if (!masks[i][a]) continue;
      const double e = (preds[i][a] - gts[i][a]) / schema_range(a).width();
      squared_error += e * e;
      ++regression_entries;
    }
  }

  AttributeMetrics m;
  auto mean_accuracy = [](const auto& counts) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : counts) {
      if (c.active == 0) continue;
      sum += ratio(c.correct, c.active);
      ++n;
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
  };
  m.accu_bi = mean_accuracy(binary);
  m.accu_mc = mean_accuracy(multi);

  double f1_sum = 0.0;
  std::size_t f1_defined = 0;
  for (const auto& c : binary) {
    if (c.tp + c.fp + c.fn == 0) continue;
    ++f1_defined;
    if (c.tp == 0) continue;  // precision + recall = 0
    const double precision = ratio(c.tp, c.tp + c.fp);
    const double recall = ratio(c.tp, c.tp + c.fn);
    f1_sum += 2.0 * (precision * recall) / (precision + recall);
  }
  m.f1 = f1_defined > 0 ? f1_sum / static_cast<double>(f1_defined) : 0.0;
  m.mse = regression_entries > 0 ? squared_error / static_cast<double>(regression_entries) : 0.0;
  return m;
}

void ConfusionMatrix::add(const SemanticGrid& pred, const SemanticGrid& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw DataError("prediction is " + std::to_string(pred.rows()) + "x" +
                    std::to_string(pred.cols()) + ", ground truth is " +
                    std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
  }
  const auto p = pred.labels();
  const auto g = gt.labels();
  for (std::size_t i = 0; i < g.size(); ++i) {
    ++counts_[static_cast<std::size_t>(g[i])][static_cast<std::size_t>(p[i])];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  for (std::size_t r = 0; r < kNumClassesWithUnknown; ++r)
    for (std::size_t c = 0; c < kNumClassesWithUnknown; ++c) counts_[r][c] += other.counts_[r][c];
}

SegmentationScores segmentation_scores(const ConfusionMatrix& cm) {
  SegmentationScores out;
  for (std::size_t k = 0; k < kNumLabelClasses; ++k) {
    const auto cls = static_cast<SemanticClass>(k);
    const std::size_t tp = cm.count(cls, cls);
    std::size_t gt_total = 0;
    std::size_t pred_total = 0;
    for (std::size_t j = 0; j < kNumClassesWithUnknown; ++j) {
      const auto other = static_cast<SemanticClass>(j);
      gt_total += cm.count(cls, other);
      // Predictions on Unknown gt cells are not scored.
      if (other != SemanticClass::kUnknown) pred_total += cm.count(other, cls);
    }
    const std::size_t uni = gt_total + pred_total - tp;
    if (uni == 0) continue;
    ClassScore s;
    s.iou = ratio(tp, uni);
    if (gt_total > 0) s.accuracy = ratio(tp, gt_total);
    out.emplace(cls, s);
  }
  return out;
}

SegmentationScores segmentation_metrics(std::span<const SemanticGrid> preds,
                                        std::span<const SemanticGrid> gts) {
  if (preds.size() != gts.size()) {
    throw DataError("segmentation metrics need as many predictions as ground truths");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < gts.size(); ++i) cm.add(preds[i], gts[i]);
  return segmentation_scores(cm);
}

std::optional<double> per_image_iou(const SemanticGrid& pred, const SemanticGrid& gt) {
  ConfusionMatrix cm;
  cm.add(pred, gt);
  const auto scores = segmentation_scores(cm);
  double sum = 0.0;
  int n = 0;
  for (SemanticClass cls : kLayoutClasses) {
    auto it = scores.find(cls);
    if (it == scores.end() || !it->second.accuracy) continue;  // not present in gt
    sum += it->second.iou;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

OcclusionTable occlusion_binned_iou(std::span<const double> per_image_iou,
                                    std::span<const int> object_counts) {
  if (per_image_iou.size() != object_counts.size()) {
    throw DataError("occlusion table needs one object count per image (" +
                    std::to_string(per_image_iou.size()) + " IoUs, " +
                    std::to_string(object_counts.size()) + " counts)");
  }
  std::array<double, kMaxObjectBin + 1> sums{};
  OcclusionTable table;
  double total = 0.0;
  for (std::size_t i = 0; i < per_image_iou.size(); ++i) {
    if (object_counts[i] < 0) {
      throw DataError("negative object count at image " + std::to_string(i));
    }
    const auto bin = static_cast<std::size_t>(std::min(object_counts[i], kMaxObjectBin));
    sums[bin] += per_image_iou[i];
    ++table.bin_images[bin];
    total += per_image_iou[i];
  }
  for (std::size_t b = 0; b <= kMaxObjectBin; ++b) {
    if (table.bin_images[b] > 0) table.bin_mean[b] = sums[b] / static_cast<double>(table.bin_images[b]);
  }
  if (!per_image_iou.empty()) table.average = total / static_cast<double>(per_image_iou.size());
  return table;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["frames"] = report.frames;
  j["accu_bi"] = report.attributes.accu_bi;
  j["accu_mc"] = report.attributes.accu_mc;
  j["f1"] = report.attributes.f1;
  j["mse"] = report.attributes.mse;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, score] : report.per_class) {
    per_class[std::string(name_of(cls))] = {
        {"iou", score.iou},
        {"accuracy", score.accuracy ? nlohmann::json(*score.accuracy) : nlohmann::json(nullptr)}};
  }
  j["per_class"] = std::move(per_class);
  if (report.occlusion) {
    nlohmann::json bins = nlohmann::json::object();
    for (int b = 0; b <= kMaxObjectBin; ++b) {
      const auto& mean = report.occlusion->bin_mean[static_cast<std::size_t>(b)];
      if (!mean) continue;
      bins[std::to_string(b)] = {{"mean_iou", *mean},
                                 {"images", report.occlusion->bin_images[static_cast<std::size_t>(b)]}};
    }
    j["occlusion_table"] = {
        {"bins", std::move(bins)},
        {"average", report.occlusion->average ? nlohmann::json(*report.occlusion->average)
                                              : nlohmann::json(nullptr)}};
  }
  return j;
}

}  // namespace roadlayout
