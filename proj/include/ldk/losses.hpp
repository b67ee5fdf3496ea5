#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ldk/geometry.hpp"
#include "ldk/imaging.hpp"
#include "ldk/photometry.hpp"
#include "ldk/uncertainty.hpp"

namespace ldk {

struct LossConfig {
  double smoothness_weight = 0.1;   // lambda_s
  double specular_weight = 1.0;     // lambda_sp
  double specular_threshold = 0.98; // th
  double ssim_weight = 0.85;        // alpha of the multi-view residual

  void validate() const;
};

// Scalar objective with gradients with respect to every depth and albedo
// entry. total = photometric + lambda_s * smoothness + lambda_sp * specular.
struct LossReport {
  double total = 0.0;
  double photometric = 0.0;
  double smoothness = 0.0;
  double specular = 0.0;
  ScalarField grad_depth;
  Grid<2> grad_albedo;
  std::size_t photometric_pixels = 0;
  std::size_t specular_pixels = 0;
};

// 1 where the brightest observed channel exceeds the threshold.
std::vector<std::uint8_t> specular_mask(const Image& observed, double threshold);

struct PhotometricLoss {
  double value = 0.0;
  ScalarField grad_depth;         // normals held fixed
  Grid<2> grad_albedo;
  std::vector<Vec3> grad_normal;  // per pixel
  std::size_t pixels = 0;
};

// Mean over contributing pixels of the squared RGB distance between observed
// and pre-clamp rendered colors. Pixels with a non-zero entry in `excluded`
// do not contribute.
PhotometricLoss photometric_loss(const Image& observed, const Rendering& rendered,
                                 std::span<const std::uint8_t> excluded = {});

struct DepthLoss {
  double value = 0.0;
  ScalarField grad_depth;
};

// Edge-aware smoothness |dx d| exp(-|dx I|) + |dy d| exp(-|dy I|) with
// forward differences; each direction is averaged over its valid pairs and
// |dI| is the mean absolute difference over RGB.
DepthLoss smoothness_loss(const DepthMap& depth, const Image& image);

// Mirror direction s = l - 2 n (n . l).
Vec3 mirror_direction(const Vec3& to_light, const Vec3& normal);

struct SpecularLoss {
  double value = 0.0;
  ScalarField grad_depth;         // through the light direction only
  std::vector<Vec3> grad_normal;  // per pixel
  std::size_t pixels = 0;
};

// Sum over masked pixels of (s . r - 1)^2 with r the camera ray, divided by
// the number of pixels with a valid normal. Zero when the mirror direction
// of the light reaches the camera. Normals are taken as given.
SpecularLoss specular_loss(const PhotometricRig& rig, const Image& observed,
                           const NormalMap& normals, const DepthMap& depth, double threshold);

// Same loss with normals computed from depth; the gradient includes the
// normals' dependence on neighbouring depths.
DepthLoss specular_loss(const PhotometricRig& rig, const Image& observed, const DepthMap& depth,
                        double threshold);

// Accumulates a per-pixel normal gradient into depth through the fan stencils.
void chain_normal_gradient(const NormalsWithJacobian& normals, std::span<const Vec3> grad_normal,
                           ScalarField& grad_depth);

LossReport total_lightdepth_loss(const PhotometricRig& rig, const Image& observed,
                                 const DepthMap& depth, const AlbedoMap& albedo,
                                 const LossConfig& config);

// mean(|d - mean| / sigma + log sigma); throws DomainError for sigma <= 0.
double laplace_nll(std::span<const double> target, std::span<const double> mean,
                   std::span<const double> sigma);
double laplace_nll(const DepthMap& target, const DepthMap& mean, const ScalarField& sigma);

// Laplace likelihood of a student under an uncertain teacher:
// sigma_m = sqrt(teacher var_total + sigma_a^2).
double uncertain_teacher_nll(const PredictiveDepth& teacher, const DepthMap& student_mean,
                             const ScalarField& student_sigma_a);

// Per-pixel SSIM over a 3x3 window, averaged over RGB. Window pixels with a
// zero entry in `valid` are skipped.
ScalarField ssim_map(const Image& a, const Image& b, std::span<const std::uint8_t> valid = {});
double mean_ssim(const Image& a, const Image& b);

struct SourceView {
  Image image;
  CameraModel camera;
  PoseSE3 target_to_source;
};

struct ResidualField {
  ScalarField values;
  std::vector<std::uint8_t> valid;
};

// min over sources of (1 - alpha) |I - I_w|_1 + alpha / 2 (1 - SSIM), with
// the L1 term averaged over RGB and bilinear sampling of each source.
ResidualField multiview_residual(const Image& target, const CameraModel& target_camera,
                                 const DepthMap& depth, std::span<const SourceView> sources,
                                 double alpha);

}  // namespace ldk
