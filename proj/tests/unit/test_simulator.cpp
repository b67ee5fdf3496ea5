#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "ldk/errors.hpp"
#include "ldk/photometry.hpp"
#include "ldk/simulator.hpp"

using namespace ldk;
namespace fs = std::filesystem;

namespace {

PhotometricRig rig_for(int size, double focal) {
  PhotometricRig rig;
  rig.camera = {CameraKind::pinhole, size, size, focal, focal, 0.5 * (size - 1), 0.5 * (size - 1)};
  return rig;
}

// Largest per-channel gap between a frame and the re-rendering of its fields.
double rerender_gap(const PhotometricRig& rig, const SceneFrame& frame) {
  const Image again = render_image(rig, frame.depth, frame.albedo, frame.normals);
  double gap = 0.0;
  for (std::size_t i = 0; i < frame.image.pixel_count(); ++i) {
    if (!frame.depth.valid(i)) continue;
    gap = std::max(gap, (again.rgb(i) - frame.image.rgb(i)).cwiseAbs().maxCoeff());
  }
  return gap;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  return Vec3(z(rng), z(rng), z(rng)).normalized();
}

}  // namespace

TEST(Raycast, SphereCenterPixelDepth) {
  PhotometricRig rig = rig_for(33, 30);
  const TriangleMesh sphere = make_sphere_mesh(Vec3(0, 0, 2), 1.0, 3, Vec2(0.1, 0.5));
  const SceneFrame frame = raycast_frame(rig, sphere, PoseSE3::identity());
  const std::size_t center = frame.depth.index(16, 16);
  ASSERT_TRUE(frame.depth.valid(center));
  EXPECT_NEAR(frame.depth.at(center), 1.0, 1e-12);
  EXPECT_FALSE(frame.depth.valid(frame.depth.index(0, 0)));
}

TEST(Raycast, FacingWhitePlaneMatchesTheAxisCase) {
  PhotometricRig rig = rig_for(31, 25);
  rig.light.spread = 0.0;
  const TriangleMesh quad =
      make_quad(Vec3(-5, -5, 1), Vec3(5, -5, 1), Vec3(5, 5, 1), Vec3(-5, 5, 1), Vec2(0, 0));
  const SceneFrame frame = raycast_frame(rig, quad, PoseSE3::identity());
  const std::size_t center = frame.image.index(15, 15);
  EXPECT_NEAR(frame.image.at(center, 0), 1.0, 1e-12);
  EXPECT_NEAR(frame.image.at(center, 1), 1.0, 1e-12);
  EXPECT_NEAR(frame.image.at(center, 2), 1.0, 1e-12);
  EXPECT_NEAR((frame.normals.normal(center) - Vec3(0, 0, -1)).norm(), 0.0, 1e-12);
}

TEST(Raycast, PlaneDepthMatchesTheAnalyticIntersection) {
  PhotometricRig rig = rig_for(24, 20);
  // Plane n . x = c through the quad corners.
  const Vec3 a(-6, -6, 1.0), b(6, -6, 3.0), c(6, 6, 3.5), d(-6, 6, 1.5);
  const TriangleMesh quad = make_quad(a, b, c, d, Vec2(0.2, 0.3));
  ASSERT_NEAR((b - a).cross(c - a).normalized().dot(d - a), 0.0, 1e-12);
  const Vec3 n = (b - a).cross(c - a).normalized();
  const PoseSE3 pose = PoseSE3::from_axis_angle(Vec3(0, 1, 0), 0.1, Vec3(0.1, -0.2, 0.0));
  const SceneFrame frame = raycast_frame(rig, quad, pose);
  int checked = 0;
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 24; ++x) {
      const std::size_t i = frame.depth.index(x, y);
      ASSERT_TRUE(frame.depth.valid(i));
      const Vec3 origin = pose.translation;
      const Vec3 dir = pose.rotation * back_project(rig.camera, Vec2(x, y));
      const double t = n.dot(a - origin) / n.dot(dir);
      EXPECT_NEAR(frame.depth.at(i) / t, 1.0, 1e-9);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 24 * 24);
}

TEST(Raycast, RerenderingReproducesTheImage) {
  PhotometricRig rig = rig_for(48, 30);
  rig.light.spread = 0.5;
  rig.gamma = 1.8;
  for (int s = 0; s < 4; ++s) {
    TubeParams p;
    p.radius = 1.0;
    p.length = 5.0;
    p.bumps = s;
    p.seed = 20 + s;
    p.bump_depth = 0.15;
    const TriangleMesh mesh = make_tube_scene(p);
    const Bvh bvh(mesh);
    const PoseSE3 pose = PoseSE3::from_axis_angle(Vec3(std::cos(s), std::sin(s), 0), 0.4 + 0.3 * s,
                                                  Vec3(0.1, 0.0, 1.0 + 0.5 * s));
    rig.light.max_radiance = exposure_for(rig, mesh, bvh, pose, 0.9);
    const SceneFrame frame = raycast_frame(rig, mesh, bvh, pose);
    EXPECT_GT(frame.depth.valid_count(), 1000u);
    EXPECT_LT(rerender_gap(rig, frame), 1e-6) << "scene " << s;
  }
  const TriangleMesh sphere = make_sphere_mesh(Vec3(0.1, 0, 1), 2.0, 4, Vec2(0.02, 0.5), 9);
  const SceneFrame inside = raycast_frame(rig, sphere, PoseSE3::identity());
  EXPECT_EQ(inside.depth.valid_count(), inside.depth.pixel_count());
  EXPECT_LT(rerender_gap(rig, inside), 1e-6);
}

TEST(Raycast, FieldsAgreeWithTheHitFaces) {
  PhotometricRig rig = rig_for(20, 16);
  const TriangleMesh mesh = make_tube_scene(1.0, 4.0, 2, 3);
  const PoseSE3 pose = PoseSE3::from_axis_angle(Vec3(1, 0, 0), 0.8, Vec3(0, 0, 1.5));
  const SceneFrame frame = raycast_frame(rig, mesh, pose);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) {
      const std::size_t i = frame.depth.index(x, y);
      const Vec3 dir = pose.rotation * back_project(rig.camera, Vec2(x, y));
      const RayHit hit = intersect_brute_force(mesh, pose.translation, dir);
      ASSERT_EQ(frame.depth.valid(i), hit.hit());
      if (!hit.hit()) continue;
      EXPECT_EQ(frame.depth.at(i), hit.distance);
      const auto f = static_cast<std::size_t>(hit.face);
      EXPECT_EQ(frame.albedo.hs(i), mesh.face_albedo[f]);
      // Camera-frame normal, facing the camera.
      Vec3 n = pose.rotation.transpose() * mesh.face_normal(f);
      const Vec3 ray = back_project(rig.camera, Vec2(x, y));
      if (n.dot(ray) > 0.0) n = -n;
      EXPECT_NEAR((frame.normals.normal(i) - n).norm(), 0.0, 1e-12);
    }
  }
}

TEST(Raycast, AllMissFrameIsEmpty) {
  PhotometricRig rig = rig_for(8, 8);
  const TriangleMesh sphere = make_sphere_mesh(Vec3(0, 0, -5), 1.0, 1, Vec2(0, 0));
  const SceneFrame frame = raycast_frame(rig, sphere, PoseSE3::identity());
  EXPECT_EQ(frame.depth.valid_count(), 0u);
  for (double v : frame.image.data()) EXPECT_EQ(v, 0.0);
}

TEST(Bvh, MatchesBruteForceExactly) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  TubeParams p;
  p.bumps = 3;
  p.seed = 4;
  p.length = 6.0;
  p.segments = 64;
  const std::vector<TriangleMesh> meshes = {
      make_tube_scene(p), make_sphere_mesh(Vec3(0.3, 0, 1), 1.5, 4, Vec2(0.1, 0.5), 2),
      merge_meshes(make_sphere_mesh(Vec3(0, 0, 3), 1.0, 3, Vec2(0, 0)),
                   make_quad(Vec3(-2, -2, 3), Vec3(2, -2, 3), Vec3(2, 2, 3), Vec3(-2, 2, 3),
                             Vec2(0.5, 0.5)))};
  for (const TriangleMesh& mesh : meshes) {
    ASSERT_LE(mesh.faces.size(), 10000u);
    const Bvh bvh(mesh);
    int hits = 0;
    for (int k = 0; k < 4000; ++k) {
      const Vec3 origin(u(rng), u(rng), 3.0 * u(rng) + 1.5);
      const Vec3 dir = random_unit(rng);
      const RayHit a = bvh.intersect(origin, dir);
      const RayHit b = intersect_brute_force(mesh, origin, dir);
      ASSERT_EQ(a.face, b.face);
      if (b.hit()) {
        ASSERT_EQ(a.distance, b.distance);
        ++hits;
      }
    }
    EXPECT_GT(hits, 1000);
  }
}

TEST(Bvh, TiesResolveToTheLowerFace) {
  // Two copies of the same quad: every hit is a tie.
  const TriangleMesh quad =
      make_quad(Vec3(-1, -1, 2), Vec3(1, -1, 2), Vec3(1, 1, 2), Vec3(-1, 1, 2), Vec2(0, 0));
  const TriangleMesh twice = merge_meshes(quad, quad);
  const Bvh bvh(twice);
  const RayHit hit = bvh.intersect(Vec3(0.3, 0.2, 0), Vec3(0, 0, 1));
  EXPECT_EQ(hit.face, intersect_brute_force(twice, Vec3(0.3, 0.2, 0), Vec3(0, 0, 1)).face);
  EXPECT_LT(hit.face, 2);
  EXPECT_DOUBLE_EQ(hit.distance, 2.0);
}

TEST(Triangle, TwoSidedIntersection) {
  TriangleMesh tri;
  tri.vertices = {Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(0, 1, 1)};
  tri.faces = {{0, 1, 2}};
  tri.face_albedo = {Vec2(0, 0)};
  EXPECT_NEAR(intersect_triangle(tri, 0, Vec3(0.2, 0.2, 0), Vec3(0, 0, 1)), 1.0, 1e-15);
  EXPECT_NEAR(intersect_triangle(tri, 0, Vec3(0.2, 0.2, 2), Vec3(0, 0, -1)), 1.0, 1e-15);
  EXPECT_TRUE(std::isinf(intersect_triangle(tri, 0, Vec3(0.8, 0.8, 0), Vec3(0, 0, 1))));
  EXPECT_TRUE(std::isinf(intersect_triangle(tri, 0, Vec3(0.2, 0.2, 2), Vec3(0, 0, 1))));
}

TEST(Tube, CylinderDepthAlongTheAxisView) {
  TubeParams p;
  p.radius = 1.0;
  p.length = 20.0;
  p.segments = 720;
  const TriangleMesh mesh = make_tube_scene(p);
  const Bvh bvh(mesh);
  // Rays from the axis at angle a to it hit the wall at 1 / sin(a) up to the
  // polygon sag cos(pi / segments).
  for (double a : {0.2, 0.5, 0.9, 1.3}) {
    for (double phi : {0.0, 0.7, 2.0, 4.0}) {
      const Vec3 dir(std::sin(a) * std::cos(phi), std::sin(a) * std::sin(phi), std::cos(a));
      const RayHit hit = bvh.intersect(Vec3(0, 0, 0.5), dir);
      ASSERT_TRUE(hit.hit());
      const double expected = 1.0 / std::sin(a);
      EXPECT_LE(hit.distance, expected * (1.0 + 1e-12));
      EXPECT_GE(hit.distance, expected * std::cos(std::numbers::pi / p.segments) - 1e-12);
    }
  }
}

TEST(Tube, RidgesHaveTheRequestedPeriod) {
  for (int bumps : {1, 3, 5}) {
    TubeParams p;
    p.radius = 1.0;
    p.length = 10.0;
    p.bumps = bumps;
    p.bump_depth = 0.2;
    p.cap_end = false;
    const TriangleMesh mesh = make_tube_scene(p);
    const Bvh bvh(mesh);
    std::vector<double> radius;
    for (int k = 0; k < 1000; ++k) {
      const double z = 0.005 + 0.01 * k;
      radius.push_back(bvh.intersect(Vec3(0, 0, z), Vec3(1, 0, 0)).distance);
    }
    int minima = 0;
    for (std::size_t k = 1; k + 1 < radius.size(); ++k) {
      if (radius[k] < radius[k - 1] && radius[k] <= radius[k + 1] && radius[k] < 0.9) ++minima;
    }
    EXPECT_EQ(minima, bumps);
    EXPECT_NEAR(*std::min_element(radius.begin(), radius.end()), 0.8, 0.01);
  }
}

TEST(Tube, DeterministicInSeed) {
  const TriangleMesh a = make_tube_scene(1.0, 5.0, 2, 7);
  const TriangleMesh b = make_tube_scene(1.0, 5.0, 2, 7);
  const TriangleMesh c = make_tube_scene(1.0, 5.0, 2, 8);
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_EQ(a.faces, b.faces);
  EXPECT_EQ(a.face_albedo, b.face_albedo);
  EXPECT_NE(a.face_albedo, c.face_albedo);
  EXPECT_THROW(make_tube_scene(0.0, 5.0, 0, 0), DomainError);
  EXPECT_THROW(make_tube_scene(1.0, -1.0, 0, 0), DomainError);
}

TEST(Mesh, ValidationRejectsBrokenMeshes) {
  TriangleMesh m = make_quad(Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(1, 1, 1), Vec3(0, 1, 1), Vec2(0, 0));
  EXPECT_NO_THROW(m.validate());
  TriangleMesh bad = m;
  bad.faces[0][1] = 9;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = m;
  bad.vertices[1] = bad.vertices[0];
  EXPECT_THROW(bad.validate(), DomainError);
  bad = m;
  bad.vertices[2].x() = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(bad.validate(), DomainError);
  bad = m;
  bad.face_albedo[0] = Vec2(0.2, 1.5);
  EXPECT_THROW(bad.validate(), DomainError);
  bad = m;
  bad.face_albedo.pop_back();
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Mesh, ObjRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "ldk_test_simulator";
  fs::create_directories(dir);
  const TriangleMesh mesh = make_tube_scene(1.3, 4.0, 2, 5);
  write_obj((dir / "tube.obj").string(), (dir / "tube.albedo.json").string(), mesh);
  const TriangleMesh back =
      read_obj((dir / "tube.obj").string(), (dir / "tube.albedo.json").string());
  EXPECT_EQ(back.vertices, mesh.vertices);
  EXPECT_EQ(back.faces, mesh.faces);
  EXPECT_EQ(back.face_albedo, mesh.face_albedo);
  EXPECT_THROW(read_obj((dir / "missing.obj").string(), (dir / "tube.albedo.json").string()),
               IoError);
}

TEST(Exposure, PutsTheBrightestChannelAtTheTarget) {
  PhotometricRig rig = rig_for(32, 20);
  rig.light.spread = 0.5;
  rig.gamma = 2.2;
  const TriangleMesh mesh = make_tube_scene(1.0, 5.0, 1, 3);
  const Bvh bvh(mesh);
  const PoseSE3 pose = PoseSE3::from_axis_angle(Vec3(1, 0, 0), 1.1, Vec3(0, 0, 2));
  for (double target : {0.3, 0.9, 1.0}) {
    rig.light.max_radiance = exposure_for(rig, mesh, bvh, pose, target);
    const SceneFrame frame = raycast_frame(rig, mesh, bvh, pose);
    double peak = 0.0;
    for (std::size_t i = 0; i < frame.image.pixel_count(); ++i) {
      peak = std::max(peak, frame.image.rgb(i).maxCoeff());
    }
    EXPECT_NEAR(peak, target, 1e-12);
  }
  EXPECT_THROW(exposure_for(rig, mesh, bvh, pose, 0.0), DomainError);
  EXPECT_THROW(exposure_for(rig, mesh, bvh, pose, 1.5), DomainError);
  const TriangleMesh behind = make_sphere_mesh(Vec3(0, 0, -5), 1.0, 1, Vec2(0, 0));
  EXPECT_THROW(exposure_for(rig, behind, Bvh(behind), PoseSE3::identity(), 0.9), DomainError);
}
