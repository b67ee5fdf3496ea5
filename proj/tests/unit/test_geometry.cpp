#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "ldk/errors.hpp"
#include "ldk/geometry.hpp"
#include "ldk/metrics.hpp"

using namespace ldk;

namespace {

CameraModel camera128() { return {CameraKind::pinhole, 128, 128, 110, 110, 63.5, 63.5}; }

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / std::numbers::pi;
}

// Ray length to the plane n . x = c.
DepthMap plane_depth(const CameraModel& cam, const Vec3& n, double c) {
  DepthMap depth(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 r = back_project(cam, Vec2(x, y));
      depth.set(depth.index(x, y), c / n.dot(r));
    }
  }
  return depth;
}

PoseSE3 random_pose(std::mt19937_64& rng, double max_angle, double max_t) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(-1, 1);
  return PoseSE3::from_axis_angle(Vec3(z(rng), z(rng), z(rng)).normalized(), max_angle * u(rng),
                                  max_t * Vec3(u(rng), u(rng), u(rng)));
}

}  // namespace

TEST(Normals, FrontoParallelPlane) {
  const CameraModel cam = camera128();
  const NormalMap n = normals_from_depth(cam, plane_depth(cam, Vec3(0, 0, 1), 2.0));
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) {
      const std::size_t i = n.index(x, y);
      const bool border = x == 0 || y == 0 || x == 127 || y == 127;
      ASSERT_EQ(n.valid(i), !border);
      if (!border) {
        EXPECT_NEAR((n.normal(i) - Vec3(0, 0, -1)).norm(), 0.0, 1e-6);
      }
    }
  }
}

TEST(Normals, SlantedPlane) {
  // z = z0 + a x, i.e. (-a, 0, 1) . p = z0. The camera-facing normal is
  // (a, 0, -1) normalized.
  const CameraModel cam = camera128();
  const double a = 0.4, z0 = 3.0;
  const NormalMap n = normals_from_depth(cam, plane_depth(cam, Vec3(-a, 0, 1), z0));
  const Vec3 truth = Vec3(a, 0, -1).normalized();
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < n.pixel_count(); ++i) {
    if (!n.valid(i)) continue;
    sum += angle_deg(n.normal(i), truth);
    ++count;
  }
  EXPECT_EQ(count, 126 * 126);
  EXPECT_LT(sum / count, 0.5);
  EXPECT_LT(sum / count, 1e-6);  // the fan is exact on planes
}

TEST(Normals, SphereWithinTwoDegrees) {
  const CameraModel cam = camera128();
  const Vec3 center(0.1, -0.05, 4.0);
  const double radius = 1.5;
  DepthMap depth(cam.width, cam.height);
  NormalMap truth(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 r = back_project(cam, Vec2(x, y));
      const double b = r.dot(center);
      const double disc = b * b - (center.squaredNorm() - radius * radius);
      if (disc <= 0) continue;
      const double t = b - std::sqrt(disc);
      const std::size_t i = depth.index(x, y);
      depth.set(i, t);
      truth.set(i, (t * r - center) / radius);
    }
  }
  const NormalMap n = normals_from_depth(cam, depth);
  EXPECT_GT(normal_mae(n, truth), 0.0);
  EXPECT_LT(normal_mae(n, truth), 2.0);
}

TEST(Normals, UnitAndCameraFacing) {
  const CameraModel cam{CameraKind::pinhole, 40, 30, 35, 35, 20, 15};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  DepthMap depth(40, 30);
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    if (u(rng) < 1.45) depth.set(i, 2.0 + 0.2 * u(rng));
  }
  const NormalMap n = normals_from_depth(cam, depth);
  const std::vector<Vec3> rays = pixel_rays(cam);
  int valid = 0;
  for (std::size_t i = 0; i < n.pixel_count(); ++i) {
    if (!n.valid(i)) continue;
    ++valid;
    EXPECT_NEAR(n.normal(i).norm(), 1.0, 1e-12);
    EXPECT_LT(n.normal(i).dot(rays[i]), 0.0);
  }
  EXPECT_GT(valid, 0);
}

TEST(Normals, InvalidNeighbourInvalidatesPixel) {
  const CameraModel cam{CameraKind::pinhole, 5, 5, 5, 5, 2, 2};
  DepthMap depth(5, 5, 1.0);
  depth.invalidate(depth.index(2, 1));  // N of the center
  const NormalMap n = normals_from_depth(cam, depth);
  EXPECT_FALSE(n.valid(n.index(2, 2)));
  EXPECT_TRUE(n.valid(n.index(3, 3)));  // (2, 1) is not in its fan
  // NW and SE are not part of the fan.
  DepthMap diag(5, 5, 1.0);
  diag.invalidate(diag.index(1, 1));
  EXPECT_TRUE(normals_from_depth(cam, diag).valid(n.index(2, 2)));
}

TEST(Normals, ImagesBelowThreeByThreeAreRejected) {
  const CameraModel cam{CameraKind::pinhole, 2, 2, 2, 2, 0.5, 0.5};
  EXPECT_THROW(normals_from_depth(cam, DepthMap(2, 2, 1.0)), DomainError);
  const CameraModel smallest{CameraKind::pinhole, 3, 3, 2, 2, 1, 1};
  const NormalMap n = normals_from_depth(smallest, DepthMap(3, 3, 1.0));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(n.valid(i), i == 4);
}

TEST(Normals, JacobianMatchesFiniteDifferences) {
  const CameraModel cam{CameraKind::pinhole, 9, 8, 8, 8, 4, 3.5};
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  DepthMap depth(9, 8);
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) depth.set(i, 2.0 + 0.3 * u(rng));
  const NormalsWithJacobian nj = normals_with_jacobian(cam, depth);
  EXPECT_EQ(nj.normals, normals_from_depth(cam, depth));
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    if (!nj.normals.valid(i)) continue;
    const NormalStencil& st = nj.stencils[i];
    EXPECT_EQ(st.pixels[0], i);
    for (int k = 0; k < 7; ++k) {
      const double e = 1e-6;
      DepthMap hi = depth, lo = depth;
      hi.set(st.pixels[k], depth.at(st.pixels[k]) + e);
      lo.set(st.pixels[k], depth.at(st.pixels[k]) - e);
      const Vec3 fd =
          (normals_from_depth(cam, hi).normal(i) - normals_from_depth(cam, lo).normal(i)) / (2 * e);
      EXPECT_NEAR((st.d_normal[k] - fd).norm(), 0.0, 1e-6 * std::max(1.0, fd.norm()));
    }
  }
}

TEST(Backproject, Examples) {
  const CameraModel cam{CameraKind::pinhole, 5, 5, 4, 4, 2, 2};
  DepthMap depth(5, 5);
  depth.set(depth.index(2, 2), 2.0);
  const PointCloud one = backproject_cloud(cam, depth);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NEAR((one.points[0] - Vec3(0, 0, 2)).norm(), 0.0, 1e-15);
  EXPECT_EQ(backproject_cloud(cam, DepthMap(5, 5)).size(), 0u);
}

TEST(Backproject, CopiesColorsAndSigmaAndReprojects) {
  const CameraModel cam{CameraKind::fisheye_equidistant, 16, 12, 10, 10, 7.5, 5.5};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  DepthMap depth(16, 12);
  Image image(16, 12);
  ScalarField sigma(16, 12);
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    image.set_rgb(i, Vec3(u(rng), u(rng), u(rng)));
    sigma.at(i) = u(rng);
    if (u(rng) < 0.6) {
      depth.set(i, 0.5 + u(rng));
      valid.push_back(i);
    }
  }
  const PointCloud cloud = backproject_cloud(cam, depth, &image, &sigma);
  ASSERT_EQ(cloud.size(), valid.size());
  for (std::size_t k = 0; k < valid.size(); ++k) {
    const std::size_t i = valid[k];
    EXPECT_EQ(cloud.colors[k], image.rgb(i));
    EXPECT_EQ(cloud.sigma[k], sigma.at(i));
    const Vec2 p = project(cam, cloud.points[k]);
    EXPECT_NEAR(p.x(), static_cast<double>(i % 16), 1e-9);
    EXPECT_NEAR(p.y(), static_cast<double>(i / 16), 1e-9);
  }
}

TEST(Warp, IdentityAndAxialTranslation) {
  const CameraModel cam{CameraKind::pinhole, 64, 48, 50, 50, 31.5, 23.5};
  for (double d : {0.1, 1.0, 30.0}) {
    const auto p = warp_pixel(cam, cam, PoseSE3::identity(), Vec2(10, 40), d);
    ASSERT_TRUE(p);
    EXPECT_NEAR((*p - Vec2(10, 40)).norm(), 0.0, 1e-9);
  }
  const PoseSE3 back{Mat3::Identity(), Vec3(0, 0, -1)};
  const auto c = warp_pixel(cam, cam, back, Vec2(31.5, 23.5), 2.0);
  ASSERT_TRUE(c);
  EXPECT_NEAR((*c - Vec2(31.5, 23.5)).norm(), 0.0, 1e-12);
  EXPECT_FALSE(warp_pixel(cam, cam, back, Vec2(31.5, 23.5), 0.5));
}

TEST(Warp, InverseRoundTrip) {
  const CameraModel cam{CameraKind::pinhole, 64, 48, 50, 50, 31.5, 23.5};
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ux(0, 63), uy(0, 47), ud(1, 5);
  int tested = 0;
  for (int k = 0; k < 2000 && tested < 1000; ++k) {
    const PoseSE3 pose = random_pose(rng, 0.2, 0.2);
    const Vec2 p(ux(rng), uy(rng));
    const double d = ud(rng);
    const auto q = warp_pixel(cam, cam, pose, p, d);
    if (!q) continue;
    const Vec3 x = pose.apply(d * back_project(cam, p));
    // Depth along the destination ray is the distance to x.
    const Vec2 q2 = project(cam, x);
    EXPECT_NEAR((q2 - *q).norm(), 0.0, 1e-12);
    const PoseSE3 inv = pose.inverse();
    const Vec3 back = inv.apply(x);
    const Vec2 p2 = project(cam, back);
    EXPECT_NEAR((p2 - p).norm(), 0.0, 1e-6);
    // The same through warp_pixel, when the destination pixel is in bounds.
    if (cam.contains(*q)) {
      const auto r = warp_pixel(cam, cam, inv, *q, x.norm());
      ASSERT_TRUE(r);
      EXPECT_NEAR((*r - p).norm(), 0.0, 1e-6);
      ++tested;
    }
  }
  EXPECT_GT(tested, 500);
}

TEST(Pose, GroupOperations) {
  std::mt19937_64 rng(9);
  const PoseSE3 a = random_pose(rng, 2.0, 3.0), b = random_pose(rng, 2.0, 3.0);
  const Vec3 p(0.3, -1.2, 2.2);
  EXPECT_NEAR(((a * b).apply(p) - a.apply(b.apply(p))).norm(), 0.0, 1e-12);
  EXPECT_NEAR(((a * a.inverse()).apply(p) - p).norm(), 0.0, 1e-12);
  EXPECT_NO_THROW((a * b).validate());
  PoseSE3 bad;
  bad.rotation(0, 0) = -1;
  EXPECT_THROW(bad.validate(), DomainError);
  const PoseSE3 c = parse_pose(pose_to_json(a));
  EXPECT_EQ(c.rotation, a.rotation);
  EXPECT_EQ(c.translation, a.translation);
}

TEST(Ply, RoundTripWithSigma) {
  PointCloud cloud;
  cloud.points = {Vec3(0.1, 0.2, 0.3), Vec3(-1, 2.5, 1e-3)};
  cloud.colors = {Vec3(1, 0, 0.5), Vec3(0, 1, 0)};
  cloud.sigma = {0.01, 0.25};
  const auto path = (std::filesystem::temp_directory_path() / "ldk_test_cloud.ply").string();
  write_ply(path, cloud);
  const PointCloud back = read_ply(path);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR((back.points[i] - cloud.points[i]).norm(), 0.0, 1e-12);
    EXPECT_NEAR((back.colors[i] - cloud.colors[i]).norm(), 0.0, 1.0 / 255.0);
    EXPECT_NEAR(back.sigma[i], cloud.sigma[i], 1e-12);
  }
  PointCloud bad = cloud;
  bad.sigma.pop_back();
  EXPECT_THROW(bad.validate(), DomainError);
}
