#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ldk/imaging.hpp"
#include "ldk/rig.hpp"

namespace ldk {

// Rigid transform x -> R x + t.
struct PoseSE3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static PoseSE3 identity() { return {}; }
  static PoseSE3 from_axis_angle(const Vec3& axis, double angle, const Vec3& translation);

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  PoseSE3 inverse() const;
  // (a * b).apply(p) == a.apply(b.apply(p))
  PoseSE3 operator*(const PoseSE3& other) const;

  void validate() const;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;   // empty or one per point
  std::vector<double> sigma;  // empty or one per point (total std, meters)

  std::size_t size() const { return points.size(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_sigma() const { return !sigma.empty(); }
  void validate() const;
};

// Normal of each interior pixel from the six-neighbour triangle fan
// (N, NE, E, S, SW, W), area weighted and oriented toward the camera.
NormalMap normals_from_depth(const CameraModel& camera, const DepthMap& depth);

// Derivatives of one output normal with respect to the seven depths it reads:
// the center pixel followed by N, NE, E, S, SW, W.
struct NormalStencil {
  std::array<std::size_t, 7> pixels{};
  std::array<Vec3, 7> d_normal{};
};

struct NormalsWithJacobian {
  NormalMap normals;
  std::vector<NormalStencil> stencils;  // row-major; meaningful at valid normals only
};

NormalsWithJacobian normals_with_jacobian(const CameraModel& camera, const DepthMap& depth);

// One point d * r per valid depth pixel. Colors and sigma are copied through
// when given.
PointCloud backproject_cloud(const CameraModel& camera, const DepthMap& depth,
                             const Image* image = nullptr, const ScalarField* sigma_t = nullptr);

// project(R * (d * back_project(pixel)) + t) in the destination camera.
// Empty when the point falls behind the destination camera.
std::optional<Vec2> warp_pixel(const CameraModel& src_camera, const CameraModel& dst_camera,
                               const PoseSE3& pose, const Vec2& pixel, double depth);

// ASCII PLY with optional per-vertex color and `sigma` properties.
void write_ply(const std::string& path, const PointCloud& cloud);
PointCloud read_ply(const std::string& path);

// {"R": [9 floats row-major], "t": [3 floats]}
std::string pose_to_json(const PoseSE3& pose);
PoseSE3 parse_pose(const std::string& json_text);

}  // namespace ldk
