#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "ldk/geometry.hpp"
#include "ldk/imaging.hpp"
#include "ldk/rig.hpp"

namespace ldk {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec2> face_albedo;  // (hue, saturation) per face

  // Indices in range, finite coordinates, no zero-area faces, albedo in range.
  void validate() const;
  Vec3 face_normal(std::size_t face) const;  // unit, winding order
};

struct RayHit {
  int face = -1;
  double distance = std::numeric_limits<double>::infinity();
  bool hit() const { return face >= 0; }
};

// Two-sided Moller-Trumbore test; returns the hit distance along `dir` or
// infinity.
double intersect_triangle(const TriangleMesh& mesh, std::size_t face, const Vec3& origin,
                          const Vec3& dir);

// Nearest hit over every face. Equal distances resolve to the lower face
// index.
RayHit intersect_brute_force(const TriangleMesh& mesh, const Vec3& origin, const Vec3& dir);

// Axis-aligned bounding volume hierarchy. Returns the same hit as
// intersect_brute_force, including tie-breaking.
class Bvh {
 public:
  explicit Bvh(const TriangleMesh& mesh);
  RayHit intersect(const Vec3& origin, const Vec3& dir) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1;   // child index, -1 for leaves
    int right = -1;
    int first = 0;   // leaf range into order_
    int count = 0;
  };
  int build(int first, int count, std::vector<Vec3>& centroids, int depth);

  const TriangleMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
};

// Ground-truth tuple. `pose` maps camera coordinates to scene coordinates.
struct SceneFrame {
  Image image;
  DepthMap depth;
  AlbedoMap albedo;
  NormalMap normals;
  PoseSE3 pose;
};

// Casts one ray per pixel, records the nearest hit (depth, face albedo,
// camera-facing face normal) and shades it with the rig's rendering
// equation. Misses stay invalid and black.
SceneFrame raycast_frame(const PhotometricRig& rig, const TriangleMesh& mesh, const Bvh& bvh,
                         const PoseSE3& pose);
SceneFrame raycast_frame(const PhotometricRig& rig, const TriangleMesh& mesh, const PoseSE3& pose);

// max_radiance that puts the brightest rendered channel at target_max.
double exposure_for(const PhotometricRig& rig, const TriangleMesh& mesh, const Bvh& bvh,
                    const PoseSE3& pose, double target_max);

struct TubeParams {
  double radius = 1.0;
  double length = 10.0;
  int bumps = 0;               // ridges along the length
  std::uint64_t seed = 0;
  int segments = 96;           // around the circumference
  int rings = 0;               // along the length, 0 picks a default
  double bump_depth = 0.25;    // ridge inset as a fraction of the radius
  bool cap_end = true;         // close the far end at z = length
};

// Tube along +z from z = 0 with radius radius * (1 - bump_depth sin^2(pi
// bumps z / length)) and smoothly varying reddish albedo. Deterministic in
// its parameters.
TriangleMesh make_tube_scene(const TubeParams& params);
TriangleMesh make_tube_scene(double radius, double length, int bumps, std::uint64_t seed);

// Subdivided icosahedron. Constant albedo unless `seed` is non-zero, in which
// case the albedo varies smoothly over the surface.
TriangleMesh make_sphere_mesh(const Vec3& center, double radius, int subdivisions,
                              const Vec2& albedo, std::uint64_t seed = 0);

// Two triangles spanning corners a, b, c, d in order.
TriangleMesh make_quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
                       const Vec2& albedo);

TriangleMesh merge_meshes(const TriangleMesh& a, const TriangleMesh& b);

// ASCII OBJ geometry plus a JSON sidecar {"face_albedo": [[h, s], ...]}.
void write_obj(const std::string& obj_path, const std::string& albedo_path,
               const TriangleMesh& mesh);
TriangleMesh read_obj(const std::string& obj_path, const std::string& albedo_path);

}  // namespace ldk
