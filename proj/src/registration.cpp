#include "ldk/registration.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "ldk/errors.hpp"
#include "ldk/parallel.hpp"

namespace ldk {

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(points_.size());
  build(0, static_cast<int>(points_.size()), 0);
}

int KdTree::build(int first, int last, int depth) {
  if (first >= last) return -1;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (int k = first; k < last; ++k) {
    lo = lo.cwiseMin(points_[order_[k]]);
    hi = hi.cwiseMax(points_[order_[k]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = first + (last - first) / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + last,
                   [&](int a, int b) {
                     if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
                     return a < b;
                   });
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back({order_[mid], axis, -1, -1});
  const int left = build(first, mid, depth + 1);
  const int right = build(mid + 1, last, depth + 1);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

void KdTree::search(int node, const Vec3& q, int& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  const double d2 = (p - q).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && (best < 0 || n.point < best))) {
    best = n.point;
    best_d2 = d2;
  }
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff <= 0.0 ? n.left : n.right;
  const int far = diff <= 0.0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

int KdTree::nearest(const Vec3& query, double max_dist) const {
  int best = -1;
  double best_d2 = max_dist * max_dist;
  search(nodes_.empty() ? -1 : 0, query, best, best_d2);
  return best;
}

void IcpConfig::validate() const {
  if (!(percentile > 0.0 && percentile <= 1.0)) throw DomainError("icp: percentile must lie in (0, 1]");
  if (max_iterations < 1) throw DomainError("icp: max_iterations must be >= 1");
  if (!(convergence_tol > 0.0) || !(max_pair_dist > 0.0)) {
    throw DomainError("icp: tolerances must be > 0");
  }
}

PointCloud filter_by_uncertainty(const PointCloud& cloud, double percentile) {
  if (!(percentile > 0.0 && percentile <= 1.0)) {
    throw DomainError("filter_by_uncertainty: percentile must lie in (0, 1]");
  }
  if (!cloud.has_sigma()) throw DomainError("filter_by_uncertainty: cloud has no sigma");
  cloud.validate();
  const std::size_t n = cloud.size();
  const auto keep = static_cast<std::size_t>(std::floor(percentile * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cloud.sigma[a] < cloud.sigma[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  PointCloud out;
  for (std::size_t i : order) {
    out.points.push_back(cloud.points[i]);
    if (cloud.has_colors()) out.colors.push_back(cloud.colors[i]);
    out.sigma.push_back(cloud.sigma[i]);
  }
  return out;
}

PoseSE3 fit_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size() || src.size() < 3) {
    throw RegistrationError("fit_rigid: need at least three pairs");
  }
  const double n = static_cast<double>(src.size());
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= n;
  cd /= n;
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0]) {
    throw RegistrationError("fit_rigid: degenerate correspondence covariance");
  }
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  PoseSE3 pose;
  pose.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  pose.translation = cd - pose.rotation * cs;
  return pose;
}

IcpResult icp_point_to_point(const PointCloud& source, const PointCloud& target,
                             const PoseSE3& init, const IcpConfig& config) {
  config.validate();
  init.validate();
  source.validate();
  target.validate();
  const PointCloud src = config.percentile < 1.0 ? filter_by_uncertainty(source, config.percentile)
                                                  : source;
  if (src.size() < 3 || target.size() < 3) throw RegistrationError("icp: clouds need >= 3 points");
  const KdTree tree(target.points);

  IcpResult result;
  result.pose = init;
  result.retained_fraction = static_cast<double>(src.size()) / static_cast<double>(source.size());
  double best_rms = std::numeric_limits<double>::infinity();
  PoseSE3 best_pose = init;
  PoseSE3 pose = init;
  std::vector<int> match(src.size());
  std::vector<Vec3> moved(src.size());

  for (int it = 1; it <= config.max_iterations; ++it) {
    parallel_for(0, src.size(), [&](std::size_t i) {
      moved[i] = pose.apply(src.points[i]);
      match[i] = tree.nearest(moved[i], config.max_pair_dist);
    });
    std::vector<Vec3> a, b;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (match[i] < 0) continue;
      a.push_back(moved[i]);
      b.push_back(target.points[static_cast<std::size_t>(match[i])]);
    }
    if (a.size() < 3) throw RegistrationError("icp: fewer than three correspondences");

    bool exact = true;
    for (std::size_t k = 0; k < a.size() && exact; ++k) exact = a[k] == b[k];
    const PoseSE3 delta = exact ? PoseSE3::identity() : fit_rigid(a, b);
    pose = delta * pose;

    std::vector<double> shift(a.size()), sq(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      const Vec3 p = delta.apply(a[k]);
      shift[k] = (p - a[k]).norm();
      sq[k] = (p - b[k]).squaredNorm();
    }
    const double rms = std::sqrt(pairwise_sum(sq) / static_cast<double>(a.size()));
    const double mean_shift = pairwise_sum(shift) / static_cast<double>(a.size());
    if (rms < best_rms) {
      best_rms = rms;
      best_pose = pose;
    }
    result.iterations = it;
    if (mean_shift < config.convergence_tol) {
      result.converged = true;
      break;
    }
  }
  result.pose = best_pose;
  result.final_rms = best_rms;
  return result;
}

std::pair<double, double> pose_errors(const PoseSE3& estimated, const PoseSE3& gt) {
  const double t_err = (estimated.translation - gt.translation).norm();
  const Mat3 r = gt.rotation.transpose() * estimated.rotation;
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double angle = std::atan2(0.5 * axis.norm(), 0.5 * (r.trace() - 1.0));
  return {t_err, angle * 180.0 / std::numbers::pi};
}

std::string icp_result_to_json(const IcpResult& result) {
  nlohmann::ordered_json j;
  j["pose"] = nlohmann::ordered_json::parse(pose_to_json(result.pose));
  j["iterations"] = result.iterations;
  j["rms"] = result.final_rms;
  j["converged"] = result.converged;
  j["retained_fraction"] = result.retained_fraction;
  return j.dump(2);
}

}  // namespace ldk
