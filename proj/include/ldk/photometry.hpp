#pragma once

#include <vector>

#include "ldk/imaging.hpp"
#include "ldk/rig.hpp"

namespace ldk {

// One evaluation of the rendering equation
//   I = (sigma_0 R(psi) cos(theta) rho g / |d r - x_l|^2)^(1/gamma)
// together with its partial derivatives. Derivatives are taken of the
// pre-clamp color and vanish where cos(theta) clamps at zero.
struct RenderedPixel {
  Vec3 color = Vec3::Zero();           // clamped into [0, 1]
  Vec3 color_preclamp = Vec3::Zero();  // after gamma, before clamping
  Vec3 linear = Vec3::Zero();          // before gamma
  Vec3 d_depth = Vec3::Zero();         // dI/dd per channel
  Eigen::Matrix<double, 3, 2> d_albedo = Eigen::Matrix<double, 3, 2>::Zero();  // dI/d(h, s)
  Mat3 d_normal = Mat3::Zero();        // dI/dn, row per channel
  double cos_incidence = 0.0;          // clamped at 0
  bool valid = false;
};

// Evaluates one pixel. Throws DomainError for non-positive depth or a
// surface point at the light position.
RenderedPixel render_pixel(const PhotometricRig& rig, const Vec2& pixel, double depth,
                           const Vec2& albedo_hs, const Vec3& normal);

// Same as render_pixel with a precomputed unit viewing ray.
RenderedPixel render_ray(const PhotometricRig& rig, const Vec3& ray, double depth,
                         const Vec2& albedo_hs, const Vec3& normal);

// Per-pixel rendering of whole fields, row-major. Pixels whose depth or
// normal is invalid are left invalid (black).
struct Rendering {
  int width = 0;
  int height = 0;
  std::vector<RenderedPixel> pixels;

  Image image() const;
};

Rendering render_fields(const PhotometricRig& rig, const DepthMap& depth, const AlbedoMap& albedo,
                        const NormalMap& normals);

// Clamped rendered image; throws DomainError on dimension mismatch.
Image render_image(const PhotometricRig& rig, const DepthMap& depth, const AlbedoMap& albedo,
                   const NormalMap& normals);

}  // namespace ldk
