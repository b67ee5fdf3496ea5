#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ldk/geometry.hpp"

namespace ldk {

// Static 3-d tree for exact nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  // Index of the nearest point within max_dist, or -1. Equal distances
  // resolve to the lower index.
  int nearest(const Vec3& query, double max_dist) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(int first, int last, int depth);
  void search(int node, const Vec3& q, int& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

struct IcpConfig {
  double percentile = 1.0;
  int max_iterations = 50;
  double convergence_tol = 1e-9;  // meters, mean correspondence displacement
  double max_pair_dist = 0.5;     // meters

  void validate() const;
};

struct IcpResult {
  PoseSE3 pose;  // source -> target
  int iterations = 0;
  bool converged = false;
  double final_rms = 0.0;
  double retained_fraction = 1.0;
};

// Keeps the floor(percentile * n) points with the smallest sigma, in their
// original order. Equal sigmas keep the lower index.
PointCloud filter_by_uncertainty(const PointCloud& cloud, double percentile);

// Closed-form least-squares rigid transform mapping src[i] to dst[i]
// (SVD with reflection correction). Throws RegistrationError when the
// cross-covariance has rank below 2.
PoseSE3 fit_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

// Point-to-point ICP on the filtered source cloud; the target is used whole.
IcpResult icp_point_to_point(const PointCloud& source, const PointCloud& target,
                             const PoseSE3& init, const IcpConfig& config);

// (||t_est - t_gt||, geodesic angle of R_gt^T R_est in degrees).
std::pair<double, double> pose_errors(const PoseSE3& estimated, const PoseSE3& gt);

// {"pose": {"R": [...], "t": [...]}, "iterations": n, "rms": x, ...}
std::string icp_result_to_json(const IcpResult& result);

}  // namespace ldk
