#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace ldk {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class CameraKind { pinhole, fisheye_equidistant };

// Intrinsic camera model. Pixel centers sit at integer coordinates; a
// continuous pixel position is in bounds when it lies within half a pixel of
// the image grid.
struct CameraModel {
  CameraKind kind = CameraKind::pinhole;
  int width = 0;
  int height = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  // Throws DomainError if an invariant is violated. For fisheye cameras this
  // includes every in-bounds pixel staying inside the forward hemisphere.
  void validate() const;
  bool contains(const Vec2& pixel) const;
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
};

// Unit-norm viewing ray through a pixel. Throws DomainError when the pixel is
// out of bounds.
Vec3 back_project(const CameraModel& camera, const Vec2& pixel);

// Pixel position of a camera-frame point. Throws ProjectionError for points
// with non-positive depth. The result may lie outside the image.
Vec2 project(const CameraModel& camera, const Vec3& point);

// Rays through every pixel center, row-major.
std::vector<Vec3> pixel_rays(const CameraModel& camera);

struct LightModel {
  Vec3 position = Vec3::Zero();  // camera frame, meters
  Vec3 axis = Vec3::UnitZ();     // unit principal direction
  double spread = 0.0;           // mu
  double max_radiance = 1.0;     // sigma_0

  void validate() const;
};

// exp(-mu (1 - cos psi)).
double radial_falloff(const LightModel& light, double psi);

// sigma_0 R(psi) / |x - x_l|^2. Throws DomainError at the light position.
double irradiance_at(const LightModel& light, const Vec3& x);

struct PhotometricRig {
  CameraModel camera;
  LightModel light;
  double gain = 1.0;
  double gamma = 1.0;

  void validate() const;
};

// JSON calibration files. Readers validate the result.
PhotometricRig parse_rig(const std::string& json_text);
std::string rig_to_json(const PhotometricRig& rig);
PhotometricRig read_rig(const std::string& path);
void write_rig(const std::string& path, const PhotometricRig& rig);

}  // namespace ldk
