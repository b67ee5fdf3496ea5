#pragma once

// Scene fixtures shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <functional>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ldk/geometry.hpp"
#include "ldk/photometry.hpp"
#include "ldk/registration.hpp"
#include "ldk/simulator.hpp"

namespace ldk::fixtures {

// 64x64 pinhole rig with the light at the optical center.
inline PhotometricRig round_trip_rig() {
  PhotometricRig rig;
  rig.camera = {CameraKind::pinhole, 64, 64, 40.0, 40.0, 31.5, 31.5};
  rig.light.position = Vec3::Zero();
  rig.light.spread = 0.5;
  rig.gamma = 1.0;
  return rig;
}

struct RoundTripScene {
  PhotometricRig rig;
  SceneFrame frame;
};

// Scenes 0-4 look into ridged tubes at varying tilts, 5-9 at a textured
// sphere that fills the view. Exposure puts the brightest channel at 0.9.
inline RoundTripScene round_trip_scene(int s) {
  TriangleMesh mesh;
  PoseSE3 pose = PoseSE3::identity();
  if (s < 5) {
    TubeParams p;
    p.radius = 1.0;
    p.length = 5.0;
    p.bumps = s % 3;
    p.seed = static_cast<std::uint64_t>(11 + s);
    p.bump_depth = 0.12;
    mesh = make_tube_scene(p);
    pose = PoseSE3::from_axis_angle(Vec3(std::cos(s), std::sin(s), 0.0), 1.0 + 0.12 * s,
                                    Vec3(0.05 * s, -0.03 * s, 1.5 + 0.25 * s));
  } else {
    mesh = make_sphere_mesh(Vec3(0.2 * (s - 7), -0.1 * (s - 6), 1.0), 2.0, 4, Vec2(0.02, 0.5),
                            static_cast<std::uint64_t>(100 + s));
  }
  RoundTripScene out{round_trip_rig(), {}};
  const Bvh bvh(mesh);
  out.rig.light.max_radiance = exposure_for(out.rig, mesh, bvh, pose, 0.9);
  out.frame = raycast_frame(out.rig, mesh, bvh, pose);
  return out;
}

// Back-projected depth of a ridged tube seen down its axis, about
// 0.95 * size^2 points.
inline PointCloud registration_cloud(int size) {
  PhotometricRig rig;
  rig.camera = {CameraKind::pinhole, size, size, 0.6 * size, 0.6 * size, 0.5 * (size - 1),
                0.5 * (size - 1)};
  TubeParams p;
  p.radius = 1.0;
  p.length = 6.0;
  p.bumps = 3;
  p.seed = 2;
  const TriangleMesh mesh = make_tube_scene(p);
  const PoseSE3 pose = PoseSE3::from_axis_angle(Vec3(1, 0.3, 0), 0.3, Vec3(0.1, 0, 0.5));
  const SceneFrame frame = raycast_frame(rig, mesh, pose);
  return backproject_cloud(rig.camera, frame.depth);
}

inline PointCloud transformed(const PointCloud& cloud, const PoseSE3& pose) {
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = pose.apply(p);
  return out;
}

struct NoisyTailCase {
  PointCloud source;  // noisy, with per-point sigma
  PointCloud target;  // clean, moved by `truth`
  PoseSE3 truth;
};

// Isotropic Gaussian noise of 5 * median(sigma) goes into the 10% of source
// points with the largest sigma. With base_noise every other point also
// carries noise of its own sigma.
inline NoisyTailCase noisy_tail_case(std::uint64_t seed, bool base_noise = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const PointCloud clean = registration_cloud(45);

  NoisyTailCase c;
  const Vec3 axis(z(rng), z(rng), z(rng));
  const Vec3 shift = 0.05 * Vec3(z(rng), z(rng), z(rng)).normalized();
  c.truth = PoseSE3::from_axis_angle(axis, 5.0 * std::numbers::pi / 180.0, shift);
  c.target = transformed(clean, c.truth);

  c.source = clean;
  const std::size_t n = clean.size();
  c.source.sigma.resize(n);
  for (double& s : c.source.sigma) s = 0.002 + 0.004 * u(rng);
  std::vector<double> sorted = c.source.sigma;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2),
                   sorted.end());
  const double median = sorted[n / 2];
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n * 9 / 10),
                   sorted.end());
  const double tail_start = sorted[n * 9 / 10];
  for (std::size_t i = 0; i < n; ++i) {
    const double s = c.source.sigma[i];
    const double own = base_noise ? s : 0.0;
    const double std_dev = s >= tail_start ? std::hypot(own, 5.0 * median) : own;
    c.source.points[i] += std_dev * Vec3(z(rng), z(rng), z(rng));
  }
  return c;
}

struct LossScene {
  PhotometricRig rig;
  Image observed;
  DepthMap depth;
  AlbedoMap albedo;
};

// Smooth random depth, random albedo and an observed image with a few
// saturated pixels.
inline LossScene random_loss_scene(std::uint64_t seed, int size = 8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  LossScene s;
  s.rig.camera = {CameraKind::pinhole, size, size, 7, 7, 0.5 * (size - 1), 0.5 * (size - 1)};
  s.rig.light.position = Vec3(0.01, -0.02, 0.0);
  s.rig.light.spread = 0.3;
  s.rig.light.max_radiance = 3.0;
  s.rig.gamma = 1.0 + u(rng);
  s.observed = Image(size, size);
  s.depth = DepthMap(size, size);
  s.albedo = AlbedoMap(size, size);
  const double ax = 0.4 * (u(rng) - 0.5) / size, ay = 0.4 * (u(rng) - 0.5) / size;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t i = s.depth.index(x, y);
      s.depth.set(i, 1.5 + ax * x + ay * y + 0.05 * u(rng));
      s.albedo.set_hs(i, Vec2(0.05 + 0.12 * u(rng), 0.2 + 0.6 * u(rng)));
      s.observed.set_rgb(i, Vec3(u(rng), u(rng), u(rng)));
      if (u(rng) < 0.15) s.observed.at(i, static_cast<int>(3 * u(rng))) = 0.99;
    }
  }
  return s;
}

// Largest per-entry relative error between analytic and central-difference
// gradients; entries below `floor` (relative to the largest gradient entry)
// use the floor as denominator.
inline double gradient_error(const std::function<double(const DepthMap&)>& f,
                             const DepthMap& depth, const ScalarField& analytic,
                             double rel_step = 1e-6, double floor = 1e-3) {
  double scale = 0.0;
  std::vector<double> fd(depth.pixel_count(), 0.0);
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    if (!depth.valid(i)) continue;
    const double e = rel_step * depth.at(i);
    DepthMap hi = depth, lo = depth;
    hi.set(i, depth.at(i) + e);
    lo.set(i, depth.at(i) - e);
    fd[i] = (f(hi) - f(lo)) / (2 * e);
    scale = std::max(scale, std::abs(fd[i]));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double denom = std::max({std::abs(fd[i]), std::abs(analytic.at(i)), floor * scale, 1e-300});
    worst = std::max(worst, std::abs(analytic.at(i) - fd[i]) / denom);
  }
  return worst;
}

}  // namespace ldk::fixtures
