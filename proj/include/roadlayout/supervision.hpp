#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "roadlayout/grid.hpp"
#include "roadlayout/scene_model.hpp"

namespace roadlayout {

inline constexpr std::size_t kNumBins = 100;
inline constexpr double kDefaultSigmaBins = 1.5;
inline constexpr double kProbabilityFloor = 1e-7;

// A continuous attribute discretized into kNumBins equal bins over [lo, hi].
struct SoftBinDistribution {
  std::array<double, kNumBins> probs{};
  double lo = 0.0;
  double hi = 1.0;

  double bin_width() const { return (hi - lo) / static_cast<double>(kNumBins); }
  double bin_center(std::size_t k) const {
    return lo + (static_cast<double>(k) + 0.5) * bin_width();
  }
};

// Gaussian-smoothed one-hot target centered at `value` (clamped into
// [lo, hi]); sigma is given in bin widths. sigma_bins == 0 yields a one-hot
// at the bin containing the value. Throws DataError when lo >= hi.
SoftBinDistribution soft_bin_encode(double value, double lo, double hi,
                                    double sigma_bins = kDefaultSigmaBins);

// Expectation over bin centers. Throws DataError if the mass is off by more
// than 1e-6.
double soft_bin_decode(const SoftBinDistribution& dist);

struct AttributeTargets {
  std::array<int, kNumBinary> binary{};
  std::array<int, kNumMulticlass> multiclass{};
  std::array<SoftBinDistribution, kNumContinuous> regression{};
  AttributeMask mask;
};

AttributeTargets encode_targets(const SceneAttributes& theta,
                                double sigma_bins = kDefaultSigmaBins);

// Model output for the parametric head. Runtime-shaped because it arrives
// from an external trainer; tpp_loss checks the shapes.
struct AttributePrediction {
  std::vector<double> binary;                   // kNumBinary probabilities
  std::vector<std::vector<double>> multiclass;  // kNumMulticlass x kNumLaneCountClasses
  std::vector<std::vector<double>> regression;  // kNumContinuous x kNumBins
};

// What a perfect model would emit for these targets.
AttributePrediction prediction_from_targets(const AttributeTargets& targets);

struct TppTerms {
  double bce = 0.0;  // mean over active binary attributes
  double ce = 0.0;   // mean over active multi-class attributes
  double l1 = 0.0;   // mean |p - t| over all bins of active continuous attributes
  double total() const { return bce + ce + l1; }
};

TppTerms tpp_terms(const AttributePrediction& pred, const AttributeTargets& target);
double tpp_loss(const AttributePrediction& pred, const AttributeTargets& target);

// Per-cell class probabilities in label order (Unknown excluded).
struct ClassProbabilityGrid {
  int rows = 0;
  int cols = 0;
  std::vector<std::array<double, kNumLabelClasses>> probs;

  static ClassProbabilityGrid one_hot(const SemanticGrid& grid);
  static ClassProbabilityGrid uniform(int rows, int cols);
  std::array<double, kNumLabelClasses>& at(int row, int col) {
    return probs[static_cast<std::size_t>(row) * cols + col];
  }
  const std::array<double, kNumLabelClasses>& at(int row, int col) const {
    return probs[static_cast<std::size_t>(row) * cols + col];
  }
};

// Mean cross-entropy over gt cells that are not Unknown. Serves both the
// top-view and the perspective semantics losses.
double grid_ce_loss(const ClassProbabilityGrid& pred, const SemanticGrid& gt);

struct LossWeights {
  double lambda = 1.0;  // parametric
  double gamma = 1.0;   // top-view semantics
  double beta = 1.0;    // perspective semantics
};

struct LossBreakdown {
  double tpp = 0.0;
  double ts = 0.0;
  double ps = 0.0;
  double total = 0.0;
  LossWeights weights;
};

LossBreakdown full_loss(double tpp, double ts, double ps, const LossWeights& weights = {});

}  // namespace roadlayout
