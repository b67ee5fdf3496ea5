#include "ldk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "ldk/errors.hpp"
#include "ldk/parallel.hpp"

namespace ldk {
namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
  return pairwise_sum(v) / static_cast<double>(v.size());
}

}  // namespace

double median_scale(const DepthMap& pred, const DepthMap& ref) {
  if (!pred.same_shape(ref)) throw DomainError("median_scale: dimension mismatch");
  std::vector<double> p, r;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
    if (!pred.valid(i) || !ref.valid(i)) continue;
    p.push_back(pred.at(i));
    r.push_back(ref.at(i));
  }
  if (p.empty()) throw DomainError("median_scale: no jointly valid pixels");
  const double mp = median_of(std::move(p));
  const double mr = median_of(std::move(r));
  if (!(mp > 0.0) || !(mr > 0.0)) throw DomainError("median_scale: medians must be positive");
  return mr / mp;
}

DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, const MetricsOptions& options) {
  if (!pred.same_shape(gt)) throw DomainError("depth_metrics: dimension mismatch");
  DepthMetrics m;
  m.scale = options.align ? median_scale(pred, gt) : 1.0;

  std::vector<double> rel, sq, se, sle, ae, d1, d2, d3;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!pred.valid(i) || !gt.valid(i)) continue;
    const double p = pred.at(i) * m.scale;
    const double g = gt.at(i);
    if (!(p > 0.0) || !(g > 0.0)) throw DomainError("depth_metrics: depths must be positive");
    const double err = g - p;
    const double denom = options.denominator == RelativeTo::ground_truth ? g : p;
    rel.push_back(std::abs(err) / denom);
    sq.push_back(err * err / denom);
    se.push_back(err * err);
    const double log_err = std::log(g) - std::log(p);
    sle.push_back(log_err * log_err);
    ae.push_back(std::abs(err));
    const double ratio = std::max(g / p, p / g);
    d1.push_back(ratio < 1.25 ? 1.0 : 0.0);
    d2.push_back(ratio < 1.25 * 1.25 ? 1.0 : 0.0);
    d3.push_back(ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0);
  }
  if (rel.empty()) throw DomainError("depth_metrics: no jointly valid pixels");
  m.count = rel.size();
  m.abs_rel = mean_of(rel);
  m.sq_rel = mean_of(sq);
  m.rmse = std::sqrt(mean_of(se));
  m.rmse_log = std::sqrt(mean_of(sle));
  m.mae = mean_of(ae);
  m.medae = median_of(ae);
  m.delta1 = mean_of(d1);
  m.delta2 = mean_of(d2);
  m.delta3 = mean_of(d3);
  return m;
}

double normal_mae(const NormalMap& pred, const NormalMap& gt) {
  if (!pred.same_shape(gt)) throw DomainError("normal_mae: dimension mismatch");
  std::vector<double> angles;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!pred.valid(i) || !gt.valid(i)) continue;
    const double c = std::clamp(pred.normal(i).dot(gt.normal(i)), -1.0, 1.0);
    angles.push_back(std::acos(c) * 180.0 / std::numbers::pi);
  }
  if (angles.empty()) throw DomainError("normal_mae: no jointly valid pixels");
  return mean_of(angles);
}

double image_mae(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DomainError("image_mae: dimension mismatch");
  if (a.pixel_count() == 0) throw DomainError("image_mae: empty image");
  std::vector<double> diff(a.data().size());
  for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = std::abs(a.data()[k] - b.data()[k]);
  return mean_of(diff);
}

std::string metrics_to_json(const DepthMetrics& m) {
  nlohmann::ordered_json j;
  j["abs_rel"] = m.abs_rel;
  j["sq_rel"] = m.sq_rel;
  j["rmse"] = m.rmse;
  j["rmse_log"] = m.rmse_log;
  j["mae"] = m.mae;
  j["medae"] = m.medae;
  j["delta1"] = m.delta1;
  j["delta2"] = m.delta2;
  j["delta3"] = m.delta3;
  j["count"] = m.count;
  j["scale"] = m.scale;
  return j.dump(2);
}

std::string metrics_csv_header() {
  return "abs_rel,sq_rel,rmse,rmse_log,mae,medae,delta1,delta2,delta3,count,scale";
}

std::string metrics_csv_row(const DepthMetrics& m) {
  std::ostringstream out;
  out << std::setprecision(17) << m.abs_rel << ',' << m.sq_rel << ',' << m.rmse << ','
      << m.rmse_log << ',' << m.mae << ',' << m.medae << ',' << m.delta1 << ',' << m.delta2 << ','
      << m.delta3 << ',' << m.count << ',' << m.scale;
  return out.str();
}

}  // namespace ldk
