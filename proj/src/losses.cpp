#include "ldk/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ldk/errors.hpp"
#include "ldk/parallel.hpp"

namespace ldk {
namespace {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double mean_abs_diff(const Image& image, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) s += std::abs(image.at(a, c) - image.at(b, c));
  return s / 3.0;
}

bool bilinear(const Image& image, const Vec2& p, Vec3& out) {
  // Points within a rounding error of the border snap onto it.
  constexpr double tol = 1e-9;
  const double w = image.width() - 1, h = image.height() - 1;
  if (!(p.x() >= -tol && p.y() >= -tol && p.x() <= w + tol && p.y() <= h + tol)) return false;
  const double u = std::clamp(p.x(), 0.0, w), v = std::clamp(p.y(), 0.0, h);
  const int x0 = std::min(static_cast<int>(u), std::max(image.width() - 2, 0));
  const int y0 = std::min(static_cast<int>(v), std::max(image.height() - 2, 0));
  const int x1 = std::min(x0 + 1, image.width() - 1);
  const int y1 = std::min(y0 + 1, image.height() - 1);
  const double fx = u - x0, fy = v - y0;
  out = (1 - fx) * (1 - fy) * image.rgb(image.index(x0, y0)) +
        fx * (1 - fy) * image.rgb(image.index(x1, y0)) +
        (1 - fx) * fy * image.rgb(image.index(x0, y1)) + fx * fy * image.rgb(image.index(x1, y1));
  return true;
}

}  // namespace

void LossConfig::validate() const {
  if (!(smoothness_weight >= 0.0) || !(specular_weight >= 0.0)) {
    throw DomainError("loss config: weights must be >= 0");
  }
  if (!(specular_threshold > 0.0 && specular_threshold <= 1.0)) {
    throw DomainError("loss config: specular threshold must lie in (0, 1]");
  }
  if (!(ssim_weight >= 0.0 && ssim_weight <= 1.0)) {
    throw DomainError("loss config: SSIM weight must lie in [0, 1]");
  }
}

std::vector<std::uint8_t> specular_mask(const Image& observed, double threshold) {
  std::vector<std::uint8_t> mask(observed.pixel_count(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = observed.rgb(i).maxCoeff() > threshold;
  return mask;
}

PhotometricLoss photometric_loss(const Image& observed, const Rendering& rendered,
                                 std::span<const std::uint8_t> excluded) {
  if (observed.width() != rendered.width || observed.height() != rendered.height) {
    throw DomainError("photometric_loss: dimension mismatch");
  }
  if (!excluded.empty() && excluded.size() != observed.pixel_count()) {
    throw DomainError("photometric_loss: mask size mismatch");
  }
  const std::size_t n = observed.pixel_count();
  auto contributes = [&](std::size_t i) {
    return rendered.pixels[i].valid && (excluded.empty() || !excluded[i]);
  };
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += contributes(i);

  PhotometricLoss out;
  out.grad_depth = ScalarField(observed.width(), observed.height());
  out.grad_albedo = Grid<2>(observed.width(), observed.height());
  out.grad_normal.assign(n, Vec3::Zero());
  out.pixels = count;
  if (count == 0) return out;

  const double inv = 1.0 / static_cast<double>(count);
  std::vector<double> terms(n, 0.0);
  parallel_for(0, n, [&](std::size_t i) {
    if (!contributes(i)) return;
    const RenderedPixel& px = rendered.pixels[i];
    const Vec3 residual = observed.rgb(i) - px.color_preclamp;
    terms[i] = residual.squaredNorm();
    const Vec3 g = -2.0 * inv * residual;
    out.grad_depth.at(i) = g.dot(px.d_depth);
    const Vec2 ga = px.d_albedo.transpose() * g;
    out.grad_albedo.at(i, 0) = ga.x();
    out.grad_albedo.at(i, 1) = ga.y();
    out.grad_normal[i] = px.d_normal.transpose() * g;
  });
  out.value = pairwise_sum(terms) * inv;
  return out;
}

DepthLoss smoothness_loss(const DepthMap& depth, const Image& image) {
  if (!depth.same_shape(image)) throw DomainError("smoothness_loss: dimension mismatch");
  const int w = depth.width(), h = depth.height();
  DepthLoss out{0.0, ScalarField(w, h)};

  // Direction 0: (x, y) -> (x + 1, y); direction 1: (x, y) -> (x, y + 1).
  for (int dir = 0; dir < 2; ++dir) {
    const int dx = dir == 0 ? 1 : 0;
    const int dy = dir == 0 ? 0 : 1;
    std::vector<double> terms;
    std::vector<std::array<std::size_t, 2>> pairs;
    std::vector<double> weights;
    for (int y = 0; y + dy < h; ++y) {
      for (int x = 0; x + dx < w; ++x) {
        const std::size_t a = depth.index(x, y);
        const std::size_t b = depth.index(x + dx, y + dy);
        if (!depth.valid(a) || !depth.valid(b)) continue;
        const double weight = std::exp(-mean_abs_diff(image, a, b));
        terms.push_back(std::abs(depth.at(b) - depth.at(a)) * weight);
        pairs.push_back({a, b});
        weights.push_back(weight);
      }
    }
    if (terms.empty()) continue;
    const double inv = 1.0 / static_cast<double>(terms.size());
    out.value += pairwise_sum(terms) * inv;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [a, b] = pairs[k];
      const double g = sign(depth.at(b) - depth.at(a)) * weights[k] * inv;
      out.grad_depth.at(b) += g;
      out.grad_depth.at(a) -= g;
    }
  }
  return out;
}

Vec3 mirror_direction(const Vec3& to_light, const Vec3& normal) {
  return to_light - 2.0 * normal * normal.dot(to_light);
}

SpecularLoss specular_loss(const PhotometricRig& rig, const Image& observed,
                           const NormalMap& normals, const DepthMap& depth, double threshold) {
  if (!depth.matches(rig.camera) || !observed.matches(rig.camera) ||
      !normals.matches(rig.camera)) {
    throw DomainError("specular_loss: dimension mismatch");
  }
  const std::size_t n = depth.pixel_count();
  SpecularLoss out;
  out.grad_depth = ScalarField(depth.width(), depth.height());
  out.grad_normal.assign(n, Vec3::Zero());

  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) valid += depth.valid(i) && normals.valid(i);
  if (valid == 0) return out;
  const std::vector<std::uint8_t> mask = specular_mask(observed, threshold);
  const std::vector<Vec3> rays = pixel_rays(rig.camera);
  const double inv = 1.0 / static_cast<double>(valid);

  std::vector<double> terms(n, 0.0);
  parallel_for(0, n, [&](std::size_t i) {
    if (!mask[i] || !depth.valid(i) || !normals.valid(i)) return;
    const Vec3& r = rays[i];
    const Vec3 nrm = normals.normal(i);
    const Vec3 v = depth.at(i) * r - rig.light.position;
    const double dist = v.norm();
    if (!(dist > 0.0)) throw DomainError("specular_loss: surface point at the light position");
    const Vec3 l = -v / dist;
    // r points from the camera into the scene, so the direction toward the
    // camera is -r and a highlight satisfies s = r.
    const double e = mirror_direction(l, nrm).dot(r) - 1.0;
    terms[i] = e * e;
    const double g = 2.0 * e * inv;
    out.grad_normal[i] = -g * 2.0 * (nrm.dot(l) * r + nrm.dot(r) * l);
    const Vec3 d_e_d_l = r - 2.0 * nrm * nrm.dot(r);
    const Vec3 d_l_d_d = -(r - l * l.dot(r)) / dist;
    out.grad_depth.at(i) = g * d_e_d_l.dot(d_l_d_d);
  });
  out.pixels = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  out.value = pairwise_sum(terms) * inv;
  return out;
}

void chain_normal_gradient(const NormalsWithJacobian& normals, std::span<const Vec3> grad_normal,
                           ScalarField& grad_depth) {
  // Serial scatter keeps the accumulation order fixed.
  for (std::size_t i = 0; i < grad_normal.size(); ++i) {
    if (!normals.normals.valid(i) || grad_normal[i].isZero(0.0)) continue;
    const NormalStencil& st = normals.stencils[i];
    for (int k = 0; k < 7; ++k) grad_depth.at(st.pixels[k]) += grad_normal[i].dot(st.d_normal[k]);
  }
}

DepthLoss specular_loss(const PhotometricRig& rig, const Image& observed, const DepthMap& depth,
                        double threshold) {
  const NormalsWithJacobian normals = normals_with_jacobian(rig.camera, depth);
  SpecularLoss sp = specular_loss(rig, observed, normals.normals, depth, threshold);
  chain_normal_gradient(normals, sp.grad_normal, sp.grad_depth);
  return {sp.value, std::move(sp.grad_depth)};
}

LossReport total_lightdepth_loss(const PhotometricRig& rig, const Image& observed,
                                 const DepthMap& depth, const AlbedoMap& albedo,
                                 const LossConfig& config) {
  config.validate();
  if (!observed.matches(rig.camera) || !depth.matches(rig.camera) || !albedo.matches(rig.camera)) {
    throw DomainError("total_lightdepth_loss: dimension mismatch");
  }
  const NormalsWithJacobian normals = normals_with_jacobian(rig.camera, depth);
  const Rendering rendered = render_fields(rig, depth, albedo, normals.normals);
  const std::vector<std::uint8_t> mask = specular_mask(observed, config.specular_threshold);

  PhotometricLoss photo = photometric_loss(observed, rendered, mask);
  const DepthLoss smooth = smoothness_loss(depth, observed);
  SpecularLoss spec;
  if (config.specular_weight > 0.0) {
    spec = specular_loss(rig, observed, normals.normals, depth, config.specular_threshold);
  } else {
    spec.grad_depth = ScalarField(depth.width(), depth.height());
    spec.grad_normal.assign(depth.pixel_count(), Vec3::Zero());
  }

  LossReport report;
  report.photometric = photo.value;
  report.smoothness = smooth.value;
  report.specular = spec.value;
  report.total = photo.value + config.smoothness_weight * smooth.value +
                 config.specular_weight * spec.value;
  report.photometric_pixels = photo.pixels;
  report.specular_pixels = spec.pixels;
  report.grad_albedo = std::move(photo.grad_albedo);

  report.grad_depth = ScalarField(depth.width(), depth.height());
  std::vector<Vec3> grad_normal(depth.pixel_count());
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    report.grad_depth.at(i) = photo.grad_depth.at(i) +
                              config.smoothness_weight * smooth.grad_depth.at(i) +
                              config.specular_weight * spec.grad_depth.at(i);
    grad_normal[i] = photo.grad_normal[i] + config.specular_weight * spec.grad_normal[i];
  }
  chain_normal_gradient(normals, grad_normal, report.grad_depth);
  return report;
}

double laplace_nll(std::span<const double> target, std::span<const double> mean,
                   std::span<const double> sigma) {
  if (target.size() != mean.size() || target.size() != sigma.size()) {
    throw DomainError("laplace_nll: size mismatch");
  }
  if (target.empty()) throw DomainError("laplace_nll: no pixels");
  std::vector<double> terms(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw DomainError("laplace_nll: sigma must be > 0");
    terms[i] = std::abs(target[i] - mean[i]) / sigma[i] + std::log(sigma[i]);
  }
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

double laplace_nll(const DepthMap& target, const DepthMap& mean, const ScalarField& sigma) {
  if (!target.same_shape(mean) || !target.same_shape(sigma)) {
    throw DomainError("laplace_nll: dimension mismatch");
  }
  std::vector<double> t, m, s;
  for (std::size_t i = 0; i < target.pixel_count(); ++i) {
    if (!target.valid(i) || !mean.valid(i)) continue;
    t.push_back(target.at(i));
    m.push_back(mean.at(i));
    s.push_back(sigma.at(i));
  }
  return laplace_nll(t, m, s);
}

double uncertain_teacher_nll(const PredictiveDepth& teacher, const DepthMap& student_mean,
                             const ScalarField& student_sigma_a) {
  if (!teacher.mean.same_shape(student_mean) || !teacher.mean.same_shape(student_sigma_a)) {
    throw DomainError("uncertain_teacher_nll: dimension mismatch");
  }
  std::vector<double> t, m, s;
  for (std::size_t i = 0; i < student_mean.pixel_count(); ++i) {
    if (!teacher.mean.valid(i) || !student_mean.valid(i)) continue;
    const double var_t = teacher.var_total.at(i);
    const double sigma_a = student_sigma_a.at(i);
    if (!(var_t >= 0.0)) throw DomainError("uncertain_teacher_nll: teacher variance must be >= 0");
    if (!(sigma_a >= 0.0)) throw DomainError("uncertain_teacher_nll: student sigma must be >= 0");
    const double combined = var_t + sigma_a * sigma_a;
    if (!(combined > 0.0)) throw DomainError("uncertain_teacher_nll: both variances are zero");
    t.push_back(teacher.mean.at(i));
    m.push_back(student_mean.at(i));
    s.push_back(std::sqrt(combined));
  }
  return laplace_nll(t, m, s);
}

ScalarField ssim_map(const Image& a, const Image& b, std::span<const std::uint8_t> valid) {
  if (!a.same_shape(b)) throw DomainError("ssim: dimension mismatch");
  const int w = a.width(), h = a.height();
  ScalarField out(w, h);
  parallel_for(0, a.pixel_count(), [&](std::size_t i) {
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
      double n = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (!a.in_bounds(xx, yy)) continue;
          const std::size_t j = a.index(xx, yy);
          if (!valid.empty() && !valid[j]) continue;
          const double va = a.at(j, c), vb = b.at(j, c);
          n += 1;
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      }
      if (n == 0) continue;
      const double ma = sa / n, mb = sb / n;
      const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
      total += ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
               ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
    }
    out.at(i) = total / 3.0;
  });
  return out;
}

double mean_ssim(const Image& a, const Image& b) {
  const ScalarField map = ssim_map(a, b);
  return pairwise_sum(map.data()) / static_cast<double>(map.pixel_count());
}

ResidualField multiview_residual(const Image& target, const CameraModel& target_camera,
                                 const DepthMap& depth, std::span<const SourceView> sources,
                                 double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("multiview_residual: alpha outside [0, 1]");
  if (!target.matches(target_camera) || !depth.matches(target_camera)) {
    throw DomainError("multiview_residual: dimension mismatch");
  }
  const std::size_t n = target.pixel_count();
  ResidualField out{ScalarField(target.width(), target.height()), std::vector<std::uint8_t>(n, 0)};
  const int w = target.width();

  for (const SourceView& src : sources) {
    if (!src.image.matches(src.camera)) throw DomainError("multiview_residual: source mismatch");
    Image warped(target.width(), target.height());
    std::vector<std::uint8_t> warped_valid(n, 0);
    parallel_for(0, n, [&](std::size_t i) {
      if (!depth.valid(i)) return;
      const Vec2 pixel(static_cast<double>(i % w), static_cast<double>(i / w));
      const auto q = warp_pixel(target_camera, src.camera, src.target_to_source, pixel, depth.at(i));
      Vec3 color;
      if (q && bilinear(src.image, *q, color)) {
        warped.set_rgb(i, color);
        warped_valid[i] = 1;
      }
    });
    const ScalarField ssim = alpha > 0.0 ? ssim_map(target, warped, warped_valid) : ScalarField();
    for (std::size_t i = 0; i < n; ++i) {
      if (!warped_valid[i]) continue;
      const double l1 = (target.rgb(i) - warped.rgb(i)).cwiseAbs().sum() / 3.0;
      double r = (1.0 - alpha) * l1;
      if (alpha > 0.0) r += 0.5 * alpha * (1.0 - ssim.at(i));
      if (!out.valid[i] || r < out.values.at(i)) {
        out.values.at(i) = r;
        out.valid[i] = 1;
      }
    }
  }
  return out;
}

}  // namespace ldk
