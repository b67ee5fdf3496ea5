#include "ldk/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ldk/errors.hpp"
#include "ldk/parallel.hpp"
#include "ldk/photometry.hpp"

namespace ldk {
namespace {

constexpr double kMinHitDistance = 1e-9;
constexpr int kLeafSize = 4;

bool closer(double t, int face, const RayHit& best) {
  return t < best.distance || (t == best.distance && face < best.face);
}

// Slab test returning the entry distance, or infinity on a miss.
double box_entry(const Eigen::AlignedBox3d& box, const Vec3& origin, const Vec3& inv_dir) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    double lo = (box.min()[a] - origin[a]) * inv_dir[a];
    double hi = (box.max()[a] - origin[a]) * inv_dir[a];
    if (std::isnan(lo) || std::isnan(hi)) {
      // Ray parallel to and lying on a slab face.
      if (origin[a] < box.min()[a] || origin[a] > box.max()[a]) {
        return std::numeric_limits<double>::infinity();
      }
      continue;
    }
    if (lo > hi) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
  }
  return t0 <= t1 ? t0 : std::numeric_limits<double>::infinity();
}

// Pseudo-random smooth field parameters drawn from a seed.
struct AlbedoPattern {
  double hue = 0.01;
  double saturation = 0.45;
  std::array<double, 4> phase{};
  std::array<double, 2> freq{};

  explicit AlbedoPattern(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    hue = 0.97 + 0.06 * unit(rng);
    saturation = 0.35 + 0.2 * unit(rng);
    for (double& p : phase) p = 2.0 * std::numbers::pi * unit(rng);
    freq = {1.0 + 2.0 * unit(rng), 1.0 + 2.0 * unit(rng)};
  }

  // u, v are surface coordinates in [0, 1].
  Vec2 at(double u, double v) const {
    const double tau = 2.0 * std::numbers::pi;
    const double h = hue + 0.025 * std::sin(tau * freq[0] * u + phase[0]) +
                     0.015 * std::sin(tau * v + phase[1]);
    const double s = saturation + 0.12 * std::sin(tau * freq[1] * u + phase[2]) *
                                      std::cos(tau * v + phase[3]);
    return {wrap_hue(h), std::clamp(s, 0.0, 1.0)};
  }
};

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

void TriangleMesh::validate() const {
  if (faces.empty()) throw DomainError("mesh: no faces");
  if (face_albedo.size() != faces.size()) throw DomainError("mesh: albedo count mismatch");
  for (const Vec3& v : vertices) {
    if (!v.allFinite()) throw DomainError("mesh: non-finite vertex");
  }
  const int nv = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k : faces[f]) {
      if (k < 0 || k >= nv) throw DomainError("mesh: face index out of range");
    }
    const Vec3& a = vertices[faces[f][0]];
    const Vec3 cross = (vertices[faces[f][1]] - a).cross(vertices[faces[f][2]] - a);
    if (!(cross.norm() > 0.0)) throw DomainError("mesh: degenerate face");
    const Vec2& alb = face_albedo[f];
    if (!(alb.x() >= 0.0 && alb.x() < 1.0 && alb.y() >= 0.0 && alb.y() <= 1.0)) {
      throw DomainError("mesh: face albedo out of range");
    }
  }
}

Vec3 TriangleMesh::face_normal(std::size_t face) const {
  const Vec3& a = vertices[faces[face][0]];
  return (vertices[faces[face][1]] - a).cross(vertices[faces[face][2]] - a).normalized();
}

double intersect_triangle(const TriangleMesh& mesh, std::size_t face, const Vec3& origin,
                          const Vec3& dir) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const Vec3& a = mesh.vertices[mesh.faces[face][0]];
  const Vec3 e1 = mesh.vertices[mesh.faces[face][1]] - a;
  const Vec3 e2 = mesh.vertices[mesh.faces[face][2]] - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (det == 0.0) return inf;
  const double inv_det = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv_det;
  if (u < 0.0 || u > 1.0) return inf;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv_det;
  if (v < 0.0 || u + v > 1.0) return inf;
  const double t = e2.dot(q) * inv_det;
  return t > kMinHitDistance ? t : inf;
}

RayHit intersect_brute_force(const TriangleMesh& mesh, const Vec3& origin, const Vec3& dir) {
  RayHit best;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const double t = intersect_triangle(mesh, f, origin, dir);
    if (std::isfinite(t) && closer(t, static_cast<int>(f), best)) {
      best = {static_cast<int>(f), t};
    }
  }
  return best;
}

Bvh::Bvh(const TriangleMesh& mesh) : mesh_(&mesh) {
  mesh.validate();
  const int n = static_cast<int>(mesh.faces.size());
  order_.resize(n);
  std::vector<Vec3> centroids(n);
  for (int f = 0; f < n; ++f) {
    order_[f] = f;
    centroids[f] = (mesh.vertices[mesh.faces[f][0]] + mesh.vertices[mesh.faces[f][1]] +
                    mesh.vertices[mesh.faces[f][2]]) / 3.0;
  }
  nodes_.reserve(2 * n / kLeafSize + 1);
  build(0, n, centroids, 0);
}

int Bvh::build(int first, int count, std::vector<Vec3>& centroids, int depth) {
  Node node;
  node.box.setEmpty();
  Eigen::AlignedBox3d centroid_box;
  centroid_box.setEmpty();
  for (int k = first; k < first + count; ++k) {
    const auto& f = mesh_->faces[order_[k]];
    for (int v : f) node.box.extend(mesh_->vertices[v]);
    centroid_box.extend(centroids[order_[k]]);
  }
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (count <= kLeafSize || depth > 64) {
    nodes_[index].first = first;
    nodes_[index].count = count;
    return index;
  }
  int axis = 0;
  centroid_box.sizes().maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](int a, int b) {
                     if (centroids[a][axis] != centroids[b][axis]) {
                       return centroids[a][axis] < centroids[b][axis];
                     }
                     return a < b;
                   });
  const int left = build(first, mid - first, centroids, depth + 1);
  const int right = build(mid, first + count - mid, centroids, depth + 1);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

RayHit Bvh::intersect(const Vec3& origin, const Vec3& dir) const {
  RayHit best;
  if (nodes_.empty()) return best;
  const Vec3 inv_dir = dir.cwiseInverse();
  std::array<int, 128> stack{};
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    // Inclusive bound so equal-distance hits reach the index tie-break.
    if (box_entry(node.box, origin, inv_dir) > best.distance) continue;
    if (node.left < 0) {
      for (int k = node.first; k < node.first + node.count; ++k) {
        const int f = order_[k];
        const double t = intersect_triangle(*mesh_, static_cast<std::size_t>(f), origin, dir);
        if (std::isfinite(t) && closer(t, f, best)) best = {f, t};
      }
      continue;
    }
    stack[top++] = node.right;
    stack[top++] = node.left;
  }
  return best;
}

SceneFrame raycast_frame(const PhotometricRig& rig, const TriangleMesh& mesh, const Bvh& bvh,
                         const PoseSE3& pose) {
  rig.validate();
  pose.validate();
  const CameraModel& cam = rig.camera;
  SceneFrame frame{Image(cam.width, cam.height), DepthMap(cam.width, cam.height),
                   AlbedoMap(cam.width, cam.height), NormalMap(cam.width, cam.height), pose};
  const std::vector<Vec3> rays = pixel_rays(cam);
  parallel_for(0, rays.size(), [&](std::size_t i) {
    const Vec3 dir = pose.rotation * rays[i];
    const RayHit hit = bvh.intersect(pose.translation, dir);
    if (!hit.hit()) return;
    Vec3 normal = pose.rotation.transpose() * mesh.face_normal(static_cast<std::size_t>(hit.face));
    if (normal.dot(rays[i]) > 0.0) normal = -normal;
    const Vec2 albedo = mesh.face_albedo[static_cast<std::size_t>(hit.face)];
    frame.depth.set(i, hit.distance);
    frame.normals.set(i, normal);
    frame.albedo.set_hs(i, albedo);
    frame.image.set_rgb(i, render_ray(rig, rays[i], hit.distance, albedo, normal).color);
  });
  return frame;
}

SceneFrame raycast_frame(const PhotometricRig& rig, const TriangleMesh& mesh, const PoseSE3& pose) {
  const Bvh bvh(mesh);
  return raycast_frame(rig, mesh, bvh, pose);
}

double exposure_for(const PhotometricRig& rig, const TriangleMesh& mesh, const Bvh& bvh,
                    const PoseSE3& pose, double target_max) {
  if (!(target_max > 0.0 && target_max <= 1.0)) {
    throw DomainError("exposure_for: target must lie in (0, 1]");
  }
  // Dim enough that nothing clips, so the peak scales as radiance^(1/gamma).
  constexpr double probe = 1e-6;
  PhotometricRig dim = rig;
  dim.light.max_radiance = probe;
  const SceneFrame frame = raycast_frame(dim, mesh, bvh, pose);
  double peak = 0.0;
  for (std::size_t i = 0; i < frame.image.pixel_count(); ++i) {
    peak = std::max(peak, frame.image.rgb(i).maxCoeff());
  }
  if (!(peak > 0.0)) throw DomainError("exposure_for: nothing lit in view");
  return probe * std::pow(target_max / peak, rig.gamma);
}

TriangleMesh make_tube_scene(const TubeParams& p) {
  if (!(p.radius > 0.0) || !(p.length > 0.0)) {
    throw DomainError("make_tube_scene: radius and length must be positive");
  }
  if (p.bumps < 0 || p.segments < 3) throw DomainError("make_tube_scene: invalid resolution");
  if (!(p.bump_depth >= 0.0 && p.bump_depth < 1.0)) {
    throw DomainError("make_tube_scene: bump depth must lie in [0, 1)");
  }
  const int rings = p.rings > 0 ? p.rings : std::max(64, 24 * p.bumps);
  const AlbedoPattern pattern(p.seed);
  auto radius_at = [&](double z) {
    const double s = std::sin(std::numbers::pi * p.bumps * z / p.length);
    return p.radius * (1.0 - p.bump_depth * s * s);
  };

  TriangleMesh mesh;
  const int seg = p.segments;
  for (int i = 0; i <= rings; ++i) {
    const double z = p.length * i / rings;
    const double r = radius_at(z);
    for (int j = 0; j < seg; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / seg;
      mesh.vertices.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    }
  }
  auto vid = [&](int i, int j) { return i * seg + (j % seg); };
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < seg; ++j) {
      const Vec2 alb = pattern.at((i + 0.5) / rings, (j + 0.5) / seg);
      mesh.faces.push_back({vid(i, j), vid(i, j + 1), vid(i + 1, j + 1)});
      mesh.face_albedo.push_back(alb);
      mesh.faces.push_back({vid(i, j), vid(i + 1, j + 1), vid(i + 1, j)});
      mesh.face_albedo.push_back(alb);
    }
  }
  if (p.cap_end) {
    const int center = static_cast<int>(mesh.vertices.size());
    mesh.vertices.emplace_back(0.0, 0.0, p.length);
    for (int j = 0; j < seg; ++j) {
      mesh.faces.push_back({vid(rings, j), center, vid(rings, j + 1)});
      mesh.face_albedo.push_back(pattern.at(1.0, (j + 0.5) / seg));
    }
  }
  mesh.validate();
  return mesh;
}

TriangleMesh make_tube_scene(double radius, double length, int bumps, std::uint64_t seed) {
  TubeParams p;
  p.radius = radius;
  p.length = length;
  p.bumps = bumps;
  p.seed = seed;
  return make_tube_scene(p);
}

TriangleMesh make_sphere_mesh(const Vec3& center, double radius, int subdivisions,
                              const Vec2& albedo, std::uint64_t seed) {
  if (!(radius > 0.0) || subdivisions < 0) throw DomainError("make_sphere_mesh: invalid arguments");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[a] + verts[b]).normalized());
      const int id = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  TriangleMesh mesh;
  for (const Vec3& v : verts) mesh.vertices.push_back(center + radius * v);
  mesh.faces = faces;
  const AlbedoPattern pattern(seed);
  for (const auto& f : faces) {
    if (seed == 0) {
      mesh.face_albedo.push_back(albedo);
      continue;
    }
    const Vec3 c = (verts[f[0]] + verts[f[1]] + verts[f[2]]).normalized();
    const double u = std::atan2(c.y(), c.x()) / (2.0 * std::numbers::pi) + 0.5;
    const double v = std::acos(std::clamp(c.z(), -1.0, 1.0)) / std::numbers::pi;
    mesh.face_albedo.push_back(pattern.at(u, v));
  }
  mesh.validate();
  return mesh;
}

TriangleMesh make_quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
                       const Vec2& albedo) {
  TriangleMesh mesh;
  mesh.vertices = {a, b, c, d};
  mesh.faces = {{0, 1, 2}, {0, 2, 3}};
  mesh.face_albedo = {albedo, albedo};
  mesh.validate();
  return mesh;
}

TriangleMesh merge_meshes(const TriangleMesh& a, const TriangleMesh& b) {
  TriangleMesh out = a;
  const int offset = static_cast<int>(a.vertices.size());
  out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
  for (const auto& f : b.faces) out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  out.face_albedo.insert(out.face_albedo.end(), b.face_albedo.begin(), b.face_albedo.end());
  return out;
}

void write_obj(const std::string& obj_path, const std::string& albedo_path,
               const TriangleMesh& mesh) {
  mesh.validate();
  std::ostringstream obj;
  for (const Vec3& v : mesh.vertices) {
    obj << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' '
        << format_double(v.z()) << '\n';
  }
  for (const auto& f : mesh.faces) obj << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  write_file_atomic(obj_path, obj.str());

  nlohmann::json sidecar;
  sidecar["face_albedo"] = nlohmann::json::array();
  for (const Vec2& a : mesh.face_albedo) sidecar["face_albedo"].push_back({a.x(), a.y()});
  write_file_atomic(albedo_path, sidecar.dump() + "\n");
}

TriangleMesh read_obj(const std::string& obj_path, const std::string& albedo_path) {
  TriangleMesh mesh;
  std::istringstream in(read_file(obj_path));
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream tokens(line);
    std::string key;
    if (!(tokens >> key) || key[0] == '#') continue;
    if (key == "v") {
      Vec3 v;
      if (!(tokens >> v.x() >> v.y() >> v.z())) throw FormatError("obj: malformed vertex");
      mesh.vertices.push_back(v);
    } else if (key == "f") {
      std::array<int, 3> f{};
      for (int& idx : f) {
        std::string token;
        if (!(tokens >> token)) throw FormatError("obj: faces must be triangles");
        try {
          idx = std::stoi(token.substr(0, token.find('/'))) - 1;
        } catch (const std::exception&) {
          throw FormatError("obj: malformed face index");
        }
      }
      std::string extra;
      if (tokens >> extra) throw FormatError("obj: faces must be triangles");
      mesh.faces.push_back(f);
    }
  }
  try {
    const auto sidecar = nlohmann::json::parse(read_file(albedo_path));
    for (const auto& a : sidecar.at("face_albedo")) {
      mesh.face_albedo.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("albedo sidecar: ") + e.what());
  }
  try {
    mesh.validate();
  } catch (const DomainError& e) {
    throw FormatError(std::string("obj: ") + e.what());
  }
  return mesh;
}

}  // namespace ldk
