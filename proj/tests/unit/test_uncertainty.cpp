#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ldk/errors.hpp"
#include "ldk/uncertainty.hpp"

using namespace ldk;

namespace {

EnsembleOutputs random_ensemble(std::mt19937_64& rng, int members, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EnsembleOutputs out;
  for (int m = 0; m < members; ++m) {
    EnsembleMember member{DepthMap(w, h), ScalarField(w, h)};
    for (std::size_t i = 0; i < member.mean.pixel_count(); ++i) {
      member.mean.set(i, 0.5 + 4.0 * u(rng));
      member.var_aleatoric.at(i) = 0.3 * u(rng);
    }
    out.members.push_back(std::move(member));
  }
  return out;
}

// Fused moments of one pixel in extended precision, two-pass.
struct Moments3 {
  double mean, epistemic, aleatoric;
};

Moments3 oracle(const EnsembleOutputs& e, std::size_t i) {
  long double sum = 0.0L, var = 0.0L;
  for (const auto& m : e.members) {
    sum += m.mean.at(i);
    var += m.var_aleatoric.at(i);
  }
  const long double n = static_cast<long double>(e.members.size());
  const long double mean = sum / n;
  long double spread = 0.0L;
  for (const auto& m : e.members) spread += (m.mean.at(i) - mean) * (m.mean.at(i) - mean);
  return {static_cast<double>(mean), static_cast<double>(spread / n), static_cast<double>(var / n)};
}

PredictiveDepth fields_from(const std::vector<double>& mean, const std::vector<double>& sigma) {
  const int n = static_cast<int>(mean.size());
  PredictiveDepth p{DepthMap(n, 1), ScalarField(n, 1), ScalarField(n, 1), ScalarField(n, 1)};
  for (int i = 0; i < n; ++i) {
    p.mean.set(i, mean[i]);
    p.var_aleatoric.at(i) = sigma[i] * sigma[i];
    p.var_total.at(i) = sigma[i] * sigma[i];
  }
  return p;
}

}  // namespace

TEST(Fusion, TwoMemberExample) {
  EnsembleOutputs e;
  e.members.push_back({DepthMap(1, 1, 1.0), ScalarField(1, 1, 0.5)});
  e.members.push_back({DepthMap(1, 1, 3.0), ScalarField(1, 1, 1.5)});
  const PredictiveDepth p = fuse_ensemble(e);
  EXPECT_EQ(p.mean.at(0), 2.0);
  EXPECT_EQ(p.var_epistemic.at(0), 1.0);
  EXPECT_EQ(p.var_aleatoric.at(0), 1.0);
  EXPECT_EQ(p.var_total.at(0), 2.0);
  EXPECT_NO_THROW(p.validate());
}

TEST(Fusion, SingleMemberHasNoEpistemicVariance) {
  std::mt19937_64 rng(1);
  const EnsembleOutputs e = random_ensemble(rng, 1, 5, 4);
  const PredictiveDepth p = fuse_ensemble(e);
  for (std::size_t i = 0; i < p.mean.pixel_count(); ++i) {
    EXPECT_EQ(p.mean.at(i), e.members[0].mean.at(i));
    EXPECT_EQ(p.var_epistemic.at(i), 0.0);
    EXPECT_EQ(p.var_total.at(i), e.members[0].var_aleatoric.at(i));
  }
  EXPECT_THROW(fuse_ensemble(EnsembleOutputs{}), DomainError);
}

TEST(Fusion, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const EnsembleOutputs e = random_ensemble(rng, 50, 9, 7);
    const PredictiveDepth p = fuse_ensemble(e);
    for (std::size_t i = 0; i < p.mean.pixel_count(); ++i) {
      const Moments3 o = oracle(e, i);
      EXPECT_NEAR(p.mean.at(i), o.mean, 1e-12);
      EXPECT_NEAR(p.var_epistemic.at(i), o.epistemic, 1e-12);
      EXPECT_NEAR(p.var_aleatoric.at(i), o.aleatoric, 1e-12);
      EXPECT_NEAR(p.var_total.at(i), o.epistemic + o.aleatoric, 1e-12);
    }
  }
}

TEST(Fusion, PermutationInvariantExactly) {
  std::mt19937_64 rng(3);
  EnsembleOutputs e = random_ensemble(rng, 13, 6, 6);
  const PredictiveDepth a = fuse_ensemble(e);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(e.members.begin(), e.members.end(), rng);
    const PredictiveDepth b = fuse_ensemble(e);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.var_epistemic, b.var_epistemic);
    EXPECT_EQ(a.var_aleatoric, b.var_aleatoric);
    EXPECT_EQ(a.var_total, b.var_total);
  }
}

TEST(Fusion, AffineScaling) {
  std::mt19937_64 rng(4);
  const EnsembleOutputs e = random_ensemble(rng, 7, 5, 5);
  const PredictiveDepth base = fuse_ensemble(e);
  for (double k : {0.5, 2.0, 4.0, 0.3, 1.7}) {
    EnsembleOutputs scaled = e;
    for (auto& m : scaled.members) {
      for (std::size_t i = 0; i < m.mean.pixel_count(); ++i) {
        m.mean.set(i, k * m.mean.at(i));
        m.var_aleatoric.at(i) *= k * k;
      }
    }
    const PredictiveDepth p = fuse_ensemble(scaled);
    // Power-of-two factors are exact in binary floating point.
    const bool exact = k == 0.5 || k == 2.0 || k == 4.0;
    for (std::size_t i = 0; i < p.mean.pixel_count(); ++i) {
      if (exact) {
        EXPECT_EQ(p.mean.at(i), k * base.mean.at(i));
        EXPECT_EQ(p.var_epistemic.at(i), k * k * base.var_epistemic.at(i));
        EXPECT_EQ(p.var_aleatoric.at(i), k * k * base.var_aleatoric.at(i));
      } else {
        EXPECT_NEAR(p.mean.at(i) / (k * base.mean.at(i)), 1.0, 1e-12);
        EXPECT_NEAR(p.var_epistemic.at(i), k * k * base.var_epistemic.at(i),
                    1e-12 * std::max(1.0, p.var_epistemic.at(i)));
        EXPECT_NEAR(p.var_aleatoric.at(i) / (k * k * base.var_aleatoric.at(i)), 1.0, 1e-12);
      }
    }
  }
}

TEST(Fusion, InvalidWhereAnyMemberIsInvalid) {
  EnsembleOutputs e;
  e.members.push_back({DepthMap(2, 1, 1.0), ScalarField(2, 1, 0.1)});
  e.members.push_back({DepthMap(2, 1, 2.0), ScalarField(2, 1, 0.1)});
  e.members[1].mean.invalidate(1);
  const PredictiveDepth p = fuse_ensemble(e);
  EXPECT_TRUE(p.mean.valid(0));
  EXPECT_FALSE(p.mean.valid(1));
  e.members.push_back({DepthMap(3, 1, 1.0), ScalarField(3, 1)});
  EXPECT_THROW(fuse_ensemble(e), DomainError);
}

TEST(PredictiveDepth, ValidationChecksTheVarianceSum) {
  PredictiveDepth p = fields_from({1.0, 2.0}, {0.1, 0.2});
  EXPECT_NO_THROW(p.validate());
  p.var_total.at(1) += 1e-3;
  EXPECT_THROW(p.validate(), DomainError);
  p = fields_from({1.0, 2.0}, {0.1, 0.2});
  p.var_epistemic.at(0) = -0.5;
  p.var_total.at(0) = p.var_aleatoric.at(0) - 0.5;
  EXPECT_THROW(p.validate(), DomainError);
}

TEST(Auce, WellSpecifiedGaussianIsCalibrated) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.05, 2.0);
  const std::size_t n = 1000000;
  std::vector<double> residual(n), sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    sigma[i] = u(rng);
    residual[i] = sigma[i] * z(rng);
  }
  const auto levels = default_calibration_levels();
  const CalibrationCurve c = auce(residual, sigma, levels);
  EXPECT_LT(c.auce_abs, 0.01);
  EXPECT_GE(c.auce_abs, std::abs(c.auce_signed));
  EXPECT_EQ(c.pixels, n);
  for (std::size_t k = 1; k < c.coverage.size(); ++k) EXPECT_GE(c.coverage[k], c.coverage[k - 1]);
}

TEST(Auce, LaplaceModelMatchesLaplaceResiduals) {
  std::mt19937_64 rng(6);
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution sign(0.5);
  const std::size_t n = 400000;
  std::vector<double> residual(n), sigma(n, 0.7);
  // Laplace with standard deviation sigma has scale sigma / sqrt(2).
  for (std::size_t i = 0; i < n; ++i) {
    residual[i] = (sign(rng) ? 1.0 : -1.0) * e(rng) * 0.7 / std::sqrt(2.0);
  }
  const auto levels = default_calibration_levels();
  EXPECT_LT(auce(residual, sigma, levels, IntervalModel::laplace).auce_abs, 0.01);
  EXPECT_GT(auce(residual, sigma, levels, IntervalModel::gaussian).auce_abs, 0.02);
}

TEST(Auce, LimitingCases) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  const std::size_t n = 1000;
  std::vector<double> residual(n), huge(n, 1e300), tiny(n, 1e-300);
  // Residuals bounded away from zero.
  for (double& r : residual) {
    const double v = z(rng);
    r = v + (v >= 0 ? 0.1 : -0.1);
  }
  const auto levels = default_calibration_levels();
  const CalibrationCurve under = auce(residual, huge, levels);
  for (double c : under.coverage) EXPECT_EQ(c, 1.0);
  EXPECT_NEAR(under.auce_signed, -0.5, 1e-3);
  const CalibrationCurve over = auce(residual, tiny, levels);
  for (double c : over.coverage) EXPECT_EQ(c, 0.0);
  EXPECT_NEAR(over.auce_signed, 0.5, 1e-3);
  EXPECT_NEAR(over.auce_abs, 0.5, 1e-3);
}

TEST(Auce, Errors) {
  const std::vector<double> r{0.1, 0.2}, s{1.0, 0.0}, levels{0.5};
  EXPECT_THROW(auce(r, s, levels), DomainError);
  EXPECT_THROW(auce(std::vector<double>{}, std::vector<double>{}, levels), DomainError);
  const std::vector<double> ok{1.0, 1.0}, bad_levels{0.5, 0.4};
  EXPECT_THROW(auce(r, ok, bad_levels), DomainError);
  DepthMap gt(2, 1);
  EXPECT_THROW(auce(fields_from({1.0, 2.0}, {0.1, 0.2}), gt), DomainError);
}

TEST(Auce, FieldFormUsesTotalVariance) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  const int n = 20000;
  std::vector<double> mean(n), sigma(n);
  DepthMap gt(n, 1);
  for (int i = 0; i < n; ++i) {
    mean[i] = 2.0;
    sigma[i] = 0.1;
    gt.set(i, 2.0 + 0.1 * z(rng));
  }
  PredictiveDepth p = fields_from(mean, sigma);
  const CalibrationCurve c = auce(p, gt);
  std::vector<double> residual(n);
  for (int i = 0; i < n; ++i) residual[i] = gt.at(i) - 2.0;
  const auto levels = default_calibration_levels();
  EXPECT_EQ(c.coverage, auce(residual, sigma, levels).coverage);
}

TEST(Ause, PerfectOrderingIsZero) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  std::vector<double> errors(5000), unc(5000);
  for (std::size_t i = 0; i < errors.size(); ++i) {
    errors[i] = z(rng);
    unc[i] = std::abs(errors[i]);
  }
  const SparsificationCurve c = ause(unc, errors);
  EXPECT_EQ(c.ause, 0.0);
  EXPECT_EQ(c.by_uncertainty, c.by_error);
  EXPECT_EQ(c.fractions.size(), 100u);
  EXPECT_EQ(c.by_error.front(), 1.0);
}

TEST(Ause, InvertedOrderingIsTheWorstPermutation) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<double> fractions{0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875};
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> errors(8);
    for (double& e : errors) e = u(rng);
    std::vector<double> inverted(8);
    for (std::size_t i = 0; i < 8; ++i) inverted[i] = -std::abs(errors[i]);
    const double worst = ause(inverted, errors, fractions).ause;
    std::vector<double> rank(8);
    std::iota(rank.begin(), rank.end(), 0.0);
    double best_seen = -1.0;
    do {
      best_seen = std::max(best_seen, ause(rank, errors, fractions).ause);
    } while (std::next_permutation(rank.begin(), rank.end()));
    EXPECT_NEAR(worst, best_seen, 1e-15);
  }
}

TEST(Ause, ConstantUncertaintyIsPositive) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  std::vector<double> errors(2000), unc(2000, 1.0);
  for (double& e : errors) e = z(rng);
  const SparsificationCurve c = ause(unc, errors);
  EXPECT_GT(c.ause, 0.1);
  for (std::size_t k = 0; k < c.fractions.size(); ++k) {
    EXPECT_LE(c.by_error[k], c.by_uncertainty[k] + 1e-15);
  }
}

TEST(Ause, InvariantToMonotoneTransforms) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  std::vector<double> errors(3000), unc(3000), transformed(3000);
  for (std::size_t i = 0; i < errors.size(); ++i) {
    errors[i] = z(rng);
    unc[i] = std::abs(errors[i] + 0.5 * z(rng));
    transformed[i] = std::exp(3.0 * unc[i]) - 7.0;
  }
  EXPECT_EQ(ause(unc, errors).ause, ause(transformed, errors).ause);
}

TEST(Ause, DegenerateInputs) {
  const std::vector<double> errors(10, 0.3), unc{5, 1, 2, 3, 4, 9, 8, 7, 6, 0};
  EXPECT_EQ(ause(unc, errors).ause, 0.0);
  const std::vector<double> zeros(10, 0.0);
  EXPECT_EQ(ause(unc, zeros).ause, 0.0);
  EXPECT_THROW(ause(std::vector<double>{1.0}, std::vector<double>{1.0}), DomainError);
  EXPECT_THROW(ause(unc, std::vector<double>{1.0, 2.0}), DomainError);
}

TEST(Csv, Headers) {
  const std::vector<double> r{0.1, -0.2, 0.3}, s{1.0, 1.0, 1.0}, levels{0.25, 0.75};
  const std::string cal = calibration_csv(auce(r, s, levels));
  EXPECT_EQ(cal.substr(0, cal.find('\n')), "level,coverage");
  EXPECT_EQ(std::count(cal.begin(), cal.end(), '\n'), 3);
  const std::string sp = sparsification_csv(ause(s, r));
  EXPECT_EQ(sp.substr(0, sp.find('\n')), "fraction,by_uncertainty,by_error");
  EXPECT_EQ(std::count(sp.begin(), sp.end(), '\n'), 101);
}
