#include "ldk/photometry.hpp"

#include <cmath>

#include "ldk/errors.hpp"
#include "ldk/parallel.hpp"

namespace ldk {

RenderedPixel render_ray(const PhotometricRig& rig, const Vec3& ray, double depth,
                         const Vec2& albedo_hs, const Vec3& normal) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw DomainError("render_pixel: depth must be positive");
  }
  const LightModel& light = rig.light;
  const Vec3 v = depth * ray - light.position;
  const double dist2 = v.squaredNorm();
  if (!(dist2 > 0.0)) throw DomainError("render_pixel: surface point at the light position");
  const double dist = std::sqrt(dist2);
  const Vec3 to_light = -v / dist;

  RenderedPixel out;
  out.valid = true;
  const double cos_theta = to_light.dot(normal);
  if (!(cos_theta > 0.0)) return out;  // back-facing: black, zero gradient
  out.cos_incidence = cos_theta;

  const double v_dot_r = v.dot(ray);
  const double cos_psi = light.axis.dot(v) / dist;
  const double falloff = std::exp(-light.spread * (1.0 - cos_psi));
  const double irradiance = light.max_radiance * falloff / dist2;

  const double d_cos_psi = light.axis.dot(ray) / dist - light.axis.dot(v) * v_dot_r / (dist2 * dist);
  const double d_irradiance = irradiance * (light.spread * d_cos_psi - 2.0 * v_dot_r / dist2);
  const double d_cos_theta = -ray.dot(normal) / dist + v.dot(normal) * v_dot_r / (dist2 * dist);

  const double h = albedo_hs.x();
  const double s = albedo_hs.y();
  const Vec3 rho = hsv_to_rgb(h, s, 1.0);
  const Eigen::Matrix<double, 3, 2> d_rho = hsv_to_rgb_jacobian(h, s);

  const double shading = irradiance * cos_theta * rig.gain;
  const double d_shading = (d_irradiance * cos_theta + irradiance * d_cos_theta) * rig.gain;
  const double inv_gamma = 1.0 / rig.gamma;

  for (int c = 0; c < 3; ++c) {
    const double lin = shading * rho[c];
    out.linear[c] = lin;
    if (!(lin > 0.0)) continue;
    const double value = std::pow(lin, inv_gamma);
    out.color_preclamp[c] = value;
    out.color[c] = std::min(value, 1.0);
    const double d_value_d_lin = value * inv_gamma / lin;
    out.d_depth[c] = d_value_d_lin * d_shading * rho[c];
    out.d_albedo.row(c) = d_value_d_lin * shading * d_rho.row(c);
    out.d_normal.row(c) = d_value_d_lin * irradiance * rig.gain * rho[c] * to_light.transpose();
  }
  return out;
}

RenderedPixel render_pixel(const PhotometricRig& rig, const Vec2& pixel, double depth,
                           const Vec2& albedo_hs, const Vec3& normal) {
  return render_ray(rig, back_project(rig.camera, pixel), depth, albedo_hs, normal);
}

Image Rendering::image() const {
  Image out(width, height);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (pixels[i].valid) out.set_rgb(i, pixels[i].color);
  }
  return out;
}

Rendering render_fields(const PhotometricRig& rig, const DepthMap& depth, const AlbedoMap& albedo,
                        const NormalMap& normals) {
  if (!depth.matches(rig.camera) || !albedo.matches(rig.camera) || !normals.matches(rig.camera)) {
    throw DomainError("render_image: field dimensions do not match the camera");
  }
  const std::vector<Vec3> rays = pixel_rays(rig.camera);
  Rendering out{depth.width(), depth.height(), std::vector<RenderedPixel>(depth.pixel_count())};
  parallel_for(0, out.pixels.size(), [&](std::size_t i) {
    if (!depth.valid(i) || !normals.valid(i)) return;
    out.pixels[i] = render_ray(rig, rays[i], depth.at(i), albedo.hs(i), normals.normal(i));
  });
  return out;
}

Image render_image(const PhotometricRig& rig, const DepthMap& depth, const AlbedoMap& albedo,
                   const NormalMap& normals) {
  return render_fields(rig, depth, albedo, normals).image();
}

}  // namespace ldk
