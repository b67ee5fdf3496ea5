#include "ldk/uncertainty.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "ldk/errors.hpp"

namespace ldk {
namespace {

double interval_half_width(double p, IntervalModel model) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  switch (model) {
    case IntervalModel::gaussian:
      // phi^-1((p + 1) / 2)
      return std::sqrt(2.0) * boost::math::erf_inv(p);
    case IntervalModel::laplace:
      // Laplace with unit standard deviation has scale 1/sqrt(2).
      return -std::log1p(-p) / std::sqrt(2.0);
  }
  return 0.0;
}

// Trapezoid integral over [0, 1] of a curve sampled at increasing x, held
// constant outside the sampled range.
double integrate_unit(std::span<const double> x, std::span<const double> y) {
  double area = 0.0;
  area += x.front() * y.front();
  for (std::size_t k = 1; k < x.size(); ++k) area += 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
  area += (1.0 - x.back()) * y.back();
  return area;
}

void check_levels(std::span<const double> levels) {
  if (levels.empty()) throw DomainError("auce: empty level grid");
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (!(levels[k] >= 0.0 && levels[k] <= 1.0)) throw DomainError("auce: level outside [0, 1]");
    if (k > 0 && !(levels[k] > levels[k - 1])) throw DomainError("auce: levels must increase");
  }
}

double rmse_of_tail(const std::vector<double>& suffix, std::size_t removed, std::size_t n) {
  return std::sqrt(std::max(suffix[removed], 0.0) / static_cast<double>(n - removed));
}

}  // namespace

void PredictiveDepth::validate() const {
  if (!mean.same_shape(var_aleatoric) || !mean.same_shape(var_epistemic) ||
      !mean.same_shape(var_total)) {
    throw DomainError("predictive depth: dimension mismatch");
  }
  mean.validate();
  for (std::size_t i = 0; i < mean.pixel_count(); ++i) {
    if (!mean.valid(i)) continue;
    const double a = var_aleatoric.at(i), e = var_epistemic.at(i), t = var_total.at(i);
    if (!(a >= 0.0 && e >= 0.0 && t >= 0.0) || !std::isfinite(t)) {
      throw DomainError("predictive depth: variances must be finite and >= 0");
    }
    if (std::abs(t - (a + e)) > 1e-9 * std::max(1.0, t)) {
      throw DomainError("predictive depth: total variance is not aleatoric + epistemic");
    }
  }
}

PredictiveDepth fuse_ensemble(const EnsembleOutputs& outputs) {
  if (outputs.members.empty()) throw DomainError("fuse_ensemble: empty ensemble");
  const auto& first = outputs.members.front().mean;
  for (const auto& m : outputs.members) {
    if (!m.mean.same_shape(first) || !m.var_aleatoric.same_shape(first)) {
      throw DomainError("fuse_ensemble: member dimension mismatch");
    }
  }
  const int w = first.width(), h = first.height();
  const double count = static_cast<double>(outputs.members.size());
  PredictiveDepth out{DepthMap(w, h), ScalarField(w, h), ScalarField(w, h), ScalarField(w, h)};
  std::vector<double> means(outputs.members.size()), vars(outputs.members.size());
  for (std::size_t i = 0; i < first.pixel_count(); ++i) {
    bool valid = true;
    for (std::size_t k = 0; k < outputs.members.size(); ++k) {
      const auto& m = outputs.members[k];
      valid = valid && m.mean.valid(i);
      means[k] = m.mean.at(i);
      vars[k] = m.var_aleatoric.at(i);
    }
    if (!valid) continue;
    // Sorted summation makes the result independent of member order.
    std::sort(means.begin(), means.end());
    std::sort(vars.begin(), vars.end());
    double sum = 0.0, sum_var = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) {
      sum += means[k];
      sum_var += vars[k];
    }
    const double mean = sum / count;
    double spread = 0.0;
    for (double m : means) spread += (mean - m) * (mean - m);
    out.mean.set(i, mean);
    out.var_epistemic.at(i) = spread / count;
    out.var_aleatoric.at(i) = sum_var / count;
    out.var_total.at(i) = out.var_epistemic.at(i) + out.var_aleatoric.at(i);
  }
  return out;
}

std::vector<double> default_calibration_levels() {
  std::vector<double> levels(100);
  for (int k = 0; k < 100; ++k) levels[k] = (k + 0.5) / 100.0;
  return levels;
}

CalibrationCurve auce(std::span<const double> residuals, std::span<const double> sigma,
                      std::span<const double> levels, IntervalModel model) {
  if (residuals.size() != sigma.size()) throw DomainError("auce: size mismatch");
  if (residuals.empty()) throw DomainError("auce: no valid pixels");
  check_levels(levels);

  std::vector<double> z(residuals.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw DomainError("auce: sigma must be > 0");
    z[i] = std::abs(residuals[i]) / sigma[i];
  }
  std::sort(z.begin(), z.end());

  CalibrationCurve curve;
  curve.levels.assign(levels.begin(), levels.end());
  curve.pixels = z.size();
  std::vector<double> gap(levels.size()), abs_gap(levels.size());
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double q = interval_half_width(levels[k], model);
    const auto covered = std::upper_bound(z.begin(), z.end(), q) - z.begin();
    curve.coverage.push_back(static_cast<double>(covered) / static_cast<double>(z.size()));
    gap[k] = levels[k] - curve.coverage[k];
    abs_gap[k] = std::abs(gap[k]);
  }
  curve.auce_signed = integrate_unit(levels, gap);
  curve.auce_abs = integrate_unit(levels, abs_gap);
  return curve;
}

CalibrationCurve auce(const PredictiveDepth& pred, const DepthMap& gt,
                      std::span<const double> levels, IntervalModel model) {
  if (!pred.mean.same_shape(gt)) throw DomainError("auce: dimension mismatch");
  std::vector<double> residuals, sigma;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!gt.valid(i) || !pred.mean.valid(i)) continue;
    residuals.push_back(gt.at(i) - pred.mean.at(i));
    sigma.push_back(std::sqrt(pred.var_total.at(i)));
  }
  const std::vector<double> grid = default_calibration_levels();
  return auce(residuals, sigma, levels.empty() ? std::span<const double>(grid) : levels, model);
}

std::vector<double> default_sparsification_fractions() {
  std::vector<double> f(100);
  for (int k = 0; k < 100; ++k) f[k] = k / 100.0;
  return f;
}

SparsificationCurve ause(std::span<const double> uncertainty, std::span<const double> errors,
                         std::span<const double> fractions) {
  if (uncertainty.size() != errors.size()) throw DomainError("ause: size mismatch");
  const std::size_t n = errors.size();
  if (n < 2) throw DomainError("ause: at least two pixels required");
  const std::vector<double> default_grid = default_sparsification_fractions();
  if (fractions.empty()) fractions = default_grid;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    if (!(fractions[k] >= 0.0 && fractions[k] < 1.0)) {
      throw DomainError("ause: fractions must lie in [0, 1)");
    }
    if (k > 0 && !(fractions[k] > fractions[k - 1])) {
      throw DomainError("ause: fractions must increase");
    }
  }

  // Sum of squared errors of the pixels that remain after removing the first
  // k entries of a removal order.
  auto tail_sums = [&](std::span<const double> key) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    std::vector<double> suffix(n + 1, 0.0);
    for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + errors[order[k]] * errors[order[k]];
    return suffix;
  };
  std::vector<double> abs_errors(n);
  for (std::size_t i = 0; i < n; ++i) abs_errors[i] = std::abs(errors[i]);
  const std::vector<double> by_unc = tail_sums(uncertainty);
  const std::vector<double> by_err = tail_sums(abs_errors);

  SparsificationCurve curve;
  curve.fractions.assign(fractions.begin(), fractions.end());
  const double base = rmse_of_tail(by_err, 0, n);
  std::vector<double> diff;
  for (double f : fractions) {
    const std::size_t removed =
        std::min(n - 1, static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-12)));
    if (base > 0.0) {
      curve.by_uncertainty.push_back(rmse_of_tail(by_unc, removed, n) / base);
      curve.by_error.push_back(rmse_of_tail(by_err, removed, n) / base);
    } else {
      curve.by_uncertainty.push_back(0.0);
      curve.by_error.push_back(0.0);
    }
    diff.push_back(curve.by_uncertainty.back() - curve.by_error.back());
  }
  for (std::size_t k = 1; k < diff.size(); ++k) {
    curve.ause += 0.5 * (fractions[k] - fractions[k - 1]) * (diff[k] + diff[k - 1]);
  }
  return curve;
}

SparsificationCurve ause(const PredictiveDepth& pred, const DepthMap& gt,
                         std::span<const double> fractions) {
  if (!pred.mean.same_shape(gt)) throw DomainError("ause: dimension mismatch");
  std::vector<double> sigma, errors;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!gt.valid(i) || !pred.mean.valid(i)) continue;
    sigma.push_back(std::sqrt(pred.var_total.at(i)));
    errors.push_back(gt.at(i) - pred.mean.at(i));
  }
  return ause(sigma, errors, fractions);
}

std::string calibration_csv(const CalibrationCurve& curve) {
  std::ostringstream out;
  out << std::setprecision(17) << "level,coverage\n";
  for (std::size_t k = 0; k < curve.levels.size(); ++k) {
    out << curve.levels[k] << ',' << curve.coverage[k] << '\n';
  }
  return out.str();
}

std::string sparsification_csv(const SparsificationCurve& curve) {
  std::ostringstream out;
  out << std::setprecision(17) << "fraction,by_uncertainty,by_error\n";
  for (std::size_t k = 0; k < curve.fractions.size(); ++k) {
    out << curve.fractions[k] << ',' << curve.by_uncertainty[k] << ',' << curve.by_error[k] << '\n';
  }
  return out.str();
}

}  // namespace ldk
