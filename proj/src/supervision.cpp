#include "roadlayout/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace roadlayout {

namespace {

double clamp_probability(double p) { return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor); }

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw DataError("prediction shape mismatch: " + what);
}

void require_normalized(const std::vector<double>& dist, const std::string& what) {
  const double sum = std::accumulate(dist.begin(), dist.end(), 0.0);
  if (!(std::abs(sum - 1.0) <= 1e-6)) {
    throw DataError(what + " is not normalized (sums to " + std::to_string(sum) + ")");
  }
}

}  // namespace

SoftBinDistribution soft_bin_encode(double value, double lo, double hi, double sigma_bins) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw DataError("soft-bin range requires finite lo < hi");
  }
  if (!(sigma_bins >= 0.0) || !std::isfinite(sigma_bins)) {
    throw DataError("sigma_bins must be finite and non-negative");
  }
  if (std::isnan(value)) throw DataError("cannot encode NaN");
  SoftBinDistribution dist;
  dist.lo = lo;
  dist.hi = hi;
  const double x = std::clamp(value, lo, hi);

  if (sigma_bins == 0.0) {
    const double pos = static_cast<double>(kNumBins) * (x - lo) / (hi - lo);
    const auto bin = std::min(static_cast<std::size_t>(std::floor(pos)), kNumBins - 1);
    dist.probs[bin] = 1.0;
    return dist;
  }

  const double sigma = sigma_bins * dist.bin_width();
  double total = 0.0;
  for (std::size_t k = 0; k < kNumBins; ++k) {
    const double d = dist.bin_center(k) - x;
    dist.probs[k] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += dist.probs[k];
  }
  if (!(total > 0.0)) {
    // Underflow for extremely narrow kernels: fall back to the nearest bin.
    return soft_bin_encode(value, lo, hi, 0.0);
  }
  for (double& p : dist.probs) p /= total;
  return dist;
}

double soft_bin_decode(const SoftBinDistribution& dist) {
  const double sum = std::accumulate(dist.probs.begin(), dist.probs.end(), 0.0);
  if (!(std::abs(sum - 1.0) <= 1e-6)) {
    throw DataError("soft-bin distribution is not normalized (sums to " +
                    std::to_string(sum) + ")");
  }
  double expectation = 0.0;
  for (std::size_t k = 0; k < kNumBins; ++k) expectation += dist.probs[k] * dist.bin_center(k);
  return expectation;
}

AttributeTargets encode_targets(const SceneAttributes& theta, double sigma_bins) {
  require_valid(theta);
  AttributeTargets t;
  t.mask = active_mask(theta);
  for (auto a : all_binary()) t.binary[static_cast<std::size_t>(a)] = theta[a] ? 1 : 0;
  for (auto a : all_multiclass()) t.multiclass[static_cast<std::size_t>(a)] = theta[a];
  for (auto a : all_continuous()) {
    const Interval r = schema_range(a);
    t.regression[static_cast<std::size_t>(a)] = soft_bin_encode(theta[a], r.lo, r.hi, sigma_bins);
  }
  return t;
}

AttributePrediction prediction_from_targets(const AttributeTargets& targets) {
  AttributePrediction p;
  p.binary.assign(targets.binary.begin(), targets.binary.end());
  for (int cls : targets.multiclass) {
    std::vector<double> dist(kNumLaneCountClasses, 0.0);
    dist.at(static_cast<std::size_t>(cls)) = 1.0;
    p.multiclass.push_back(std::move(dist));
  }
  for (const auto& reg : targets.regression) p.regression.emplace_back(reg.probs.begin(), reg.probs.end());
  return p;
}

TppTerms tpp_terms(const AttributePrediction& pred, const AttributeTargets& target) {
  require_shape(pred.binary.size() == kNumBinary, "expected " + std::to_string(kNumBinary) +
                                                      " binary probabilities");
  require_shape(pred.multiclass.size() == kNumMulticlass,
                "expected " + std::to_string(kNumMulticlass) + " multi-class distributions");
  require_shape(pred.regression.size() == kNumContinuous,
                "expected " + std::to_string(kNumContinuous) + " regression distributions");
  for (const auto& d : pred.multiclass) {
    require_shape(d.size() == static_cast<std::size_t>(kNumLaneCountClasses),
                  "multi-class distributions need " + std::to_string(kNumLaneCountClasses) +
                      " entries");
  }
  for (const auto& d : pred.regression) {
    require_shape(d.size() == kNumBins,
                  "regression distributions need " + std::to_string(kNumBins) + " bins");
  }

  TppTerms terms;
  std::size_t n_binary = 0;
  for (auto a : all_binary()) {
    if (!target.mask[a]) continue;
    const auto i = static_cast<std::size_t>(a);
    const double p = pred.binary[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DataError("binary probability for " + std::string(name_of(a)) + " outside [0, 1]");
    }
    const double q = clamp_probability(p);
    terms.bce += target.binary[i] ? -std::log(q) : -std::log(1.0 - q);
    ++n_binary;
  }
  if (n_binary > 0) terms.bce /= static_cast<double>(n_binary);

  std::size_t n_multi = 0;
  for (auto a : all_multiclass()) {
    if (!target.mask[a]) continue;
    const auto i = static_cast<std::size_t>(a);
    require_normalized(pred.multiclass[i], std::string(name_of(a)) + " prediction");
    const auto cls = static_cast<std::size_t>(target.multiclass[i]);
    terms.ce += -std::log(clamp_probability(pred.multiclass[i].at(cls)));
    ++n_multi;
  }
  if (n_multi > 0) terms.ce /= static_cast<double>(n_multi);

  std::size_t n_elements = 0;
  for (auto a : all_continuous()) {
    if (!target.mask[a]) continue;
    const auto i = static_cast<std::size_t>(a);
    require_normalized(pred.regression[i], std::string(name_of(a)) + " prediction");
    const auto& t = target.regression[i].probs;
    for (std::size_t k = 0; k < kNumBins; ++k) terms.l1 += std::abs(pred.regression[i][k] - t[k]);
    n_elements += kNumBins;
  }
  if (n_elements > 0) terms.l1 /= static_cast<double>(n_elements);
  return terms;
}

double tpp_loss(const AttributePrediction& pred, const AttributeTargets& target) {
  return tpp_terms(pred, target).total();
}

ClassProbabilityGrid ClassProbabilityGrid::one_hot(const SemanticGrid& grid) {
  ClassProbabilityGrid out{grid.rows(), grid.cols(), {}};
  out.probs.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto cls = static_cast<std::size_t>(grid.labels()[i]);
    if (cls < kNumLabelClasses) out.probs[i][cls] = 1.0;
  }
  return out;
}

ClassProbabilityGrid ClassProbabilityGrid::uniform(int rows, int cols) {
  ClassProbabilityGrid out{rows, cols, {}};
  std::array<double, kNumLabelClasses> flat{};
  flat.fill(1.0 / static_cast<double>(kNumLabelClasses));
  out.probs.assign(static_cast<std::size_t>(rows) * cols, flat);
  return out;
}

double grid_ce_loss(const ClassProbabilityGrid& pred, const SemanticGrid& gt) {
  if (pred.rows != gt.rows() || pred.cols != gt.cols() || pred.probs.size() != gt.size()) {
    throw DataError("prediction is " + std::to_string(pred.rows) + "x" +
                    std::to_string(pred.cols) + ", ground truth is " + std::to_string(gt.rows()) +
                    "x" + std::to_string(gt.cols()));
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto cls = static_cast<std::size_t>(gt.labels()[i]);
    if (cls >= kNumLabelClasses) continue;
    total += -std::log(std::clamp(pred.probs[i][cls], kProbabilityFloor, 1.0));
    ++counted;
  }
  if (counted == 0) throw DataError("ground truth has no supervised cells (all Unknown)");
  return total / static_cast<double>(counted);
}

LossBreakdown full_loss(double tpp, double ts, double ps, const LossWeights& weights) {
  for (double v : {tpp, ts, ps, weights.lambda, weights.gamma, weights.beta}) {
    if (!std::isfinite(v)) throw DataError("loss terms and weights must be finite");
  }
  if (weights.lambda < 0.0 || weights.gamma < 0.0 || weights.beta < 0.0) {
    throw DataError("loss weights must be non-negative");
  }
  LossBreakdown out;
  out.tpp = tpp;
  out.ts = ts;
  out.ps = ps;
  out.weights = weights;
  out.total = weights.lambda * tpp + weights.gamma * ts + weights.beta * ps;
  return out;
}

}  // namespace roadlayout
