#pragma once

#include <span>
#include <string>
#include <vector>

#include "ldk/imaging.hpp"

namespace ldk {

// Per-pixel predictive distribution N(mean, var_total) with
// var_total = var_aleatoric + var_epistemic.
struct PredictiveDepth {
  DepthMap mean;
  ScalarField var_aleatoric;
  ScalarField var_epistemic;
  ScalarField var_total;

  void validate() const;
};

struct EnsembleMember {
  DepthMap mean;
  ScalarField var_aleatoric;
};

struct EnsembleOutputs {
  std::vector<EnsembleMember> members;
};

// Moment matching of the member mixture: sample mean, population variance of
// the member means (epistemic) and mean member variance (aleatoric). A pixel
// is valid when every member is valid there.
PredictiveDepth fuse_ensemble(const EnsembleOutputs& outputs);

enum class IntervalModel { gaussian, laplace };

struct CalibrationCurve {
  std::vector<double> levels;
  std::vector<double> coverage;
  double auce_signed = 0.0;  // integral of (p - coverage); > 0 means overconfident
  double auce_abs = 0.0;     // integral of |p - coverage|
  std::size_t pixels = 0;
};

// 100 uniform levels at the bin midpoints (k - 0.5) / 100.
std::vector<double> default_calibration_levels();

// Coverage of the central intervals mean +- q(p) sigma. The curve is
// integrated over [0, 1] by the trapezoid rule, holding the coverage constant
// beyond the first and last level.
CalibrationCurve auce(std::span<const double> residuals, std::span<const double> sigma,
                      std::span<const double> levels,
                      IntervalModel model = IntervalModel::gaussian);

// Field form: residual gt - mean and sigma = sqrt(var_total) over jointly
// valid pixels. Empty levels selects the default grid.
CalibrationCurve auce(const PredictiveDepth& pred, const DepthMap& gt,
                      std::span<const double> levels = {},
                      IntervalModel model = IntervalModel::gaussian);

struct SparsificationCurve {
  std::vector<double> fractions;
  std::vector<double> by_uncertainty;  // normalized RMSE of retained pixels
  std::vector<double> by_error;        // oracle ordering
  double ause = 0.0;
};

// 0.00, 0.01, ..., 0.99.
std::vector<double> default_sparsification_fractions();

// Removes the ceil(f n) highest-ranked pixels for each fraction f; ties keep
// the lower index first. Empty fractions selects the default grid.
SparsificationCurve ause(std::span<const double> uncertainty, std::span<const double> errors,
                         std::span<const double> fractions = {});

SparsificationCurve ause(const PredictiveDepth& pred, const DepthMap& gt,
                         std::span<const double> fractions = {});

std::string calibration_csv(const CalibrationCurve& curve);
std::string sparsification_csv(const SparsificationCurve& curve);

}  // namespace ldk
