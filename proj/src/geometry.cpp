#include "ldk/geometry.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "ldk/errors.hpp"
#include "ldk/parallel.hpp"

namespace ldk {
namespace {

// Stencil offsets in fan order.
constexpr std::array<std::array<int, 2>, 6> kFan = {{{0, -1}, {1, -1}, {1, 0}, {0, 1}, {-1, 1}, {-1, 0}}};

struct FanResult {
  bool valid = false;
  Vec3 normal = Vec3::Zero();
  NormalStencil stencil;
};

FanResult fan_normal(const CameraModel& camera, const DepthMap& depth,
                     const std::vector<Vec3>& rays, int x, int y, bool with_jacobian) {
  FanResult out;
  if (x < 1 || y < 1 || x >= camera.width - 1 || y >= camera.height - 1) return out;
  std::array<std::size_t, 7> idx{};
  idx[0] = depth.index(x, y);
  for (int k = 0; k < 6; ++k) idx[k + 1] = depth.index(x + kFan[k][0], y + kFan[k][1]);
  std::array<Vec3, 7> p;
  for (int k = 0; k < 7; ++k) {
    if (!depth.valid(idx[k])) return out;
    p[k] = depth.at(idx[k]) * rays[idx[k]];
  }

  Vec3 sum = Vec3::Zero();
  for (int k = 0; k < 6; ++k) {
    const int a = k + 1;
    const int b = (k + 1) % 6 + 1;
    sum += (p[a] - p[0]).cross(p[b] - p[0]);
  }
  const double len = sum.norm();
  const double facing = sum.dot(rays[idx[0]]);
  if (!(len > 0.0) || facing == 0.0) return out;
  const double sign = facing > 0.0 ? -1.0 : 1.0;

  out.valid = true;
  out.normal = sign * sum / len;
  out.stencil.pixels = idx;
  if (with_jacobian) {
    // dn/dS = sign (I - s s^T) / |S|
    const Vec3 s_hat = sum / len;
    const Mat3 d_n_d_sum = sign * (Mat3::Identity() - s_hat * s_hat.transpose()) / len;
    std::array<Vec3, 7> d_sum;
    d_sum.fill(Vec3::Zero());
    for (int k = 0; k < 6; ++k) {
      const int a = k + 1;
      const int b = (k + 1) % 6 + 1;
      const Vec3 ea = p[a] - p[0];
      const Vec3 eb = p[b] - p[0];
      d_sum[a] += rays[idx[a]].cross(eb);
      d_sum[b] += ea.cross(rays[idx[b]]);
      d_sum[0] += rays[idx[0]].cross(ea - eb);
    }
    for (int k = 0; k < 7; ++k) out.stencil.d_normal[k] = d_n_d_sum * d_sum[k];
  }
  return out;
}

NormalsWithJacobian compute_normals(const CameraModel& camera, const DepthMap& depth,
                                    bool with_jacobian) {
  if (!depth.matches(camera)) throw DomainError("normals_from_depth: dimension mismatch");
  if (camera.width < 3 || camera.height < 3) {
    throw DomainError("normals_from_depth: image must be at least 3x3");
  }
  const std::vector<Vec3> rays = pixel_rays(camera);
  NormalsWithJacobian out{NormalMap(camera.width, camera.height), {}};
  std::vector<FanResult> fans(depth.pixel_count());
  parallel_for(0, fans.size(), [&](std::size_t i) {
    const int x = static_cast<int>(i % camera.width);
    const int y = static_cast<int>(i / camera.width);
    fans[i] = fan_normal(camera, depth, rays, x, y, with_jacobian);
  });
  if (with_jacobian) out.stencils.resize(fans.size());
  for (std::size_t i = 0; i < fans.size(); ++i) {
    if (!fans[i].valid) continue;
    out.normals.set(i, fans[i].normal);
    if (with_jacobian) out.stencils[i] = fans[i].stencil;
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

PoseSE3 PoseSE3::from_axis_angle(const Vec3& axis, double angle, const Vec3& translation) {
  PoseSE3 pose;
  pose.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  pose.translation = translation;
  return pose;
}

PoseSE3 PoseSE3::inverse() const {
  PoseSE3 inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

PoseSE3 PoseSE3::operator*(const PoseSE3& other) const {
  PoseSE3 out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

void PoseSE3::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw DomainError("pose: non-finite entries");
  }
  if (((rotation.transpose() * rotation) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw DomainError("pose: rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw DomainError("pose: rotation determinant is not +1");
  }
}

void PointCloud::validate() const {
  if (!colors.empty() && colors.size() != points.size()) {
    throw DomainError("point cloud: color count mismatch");
  }
  if (!sigma.empty() && sigma.size() != points.size()) {
    throw DomainError("point cloud: sigma count mismatch");
  }
  for (double s : sigma) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw DomainError("point cloud: sigma must be >= 0");
  }
}

NormalMap normals_from_depth(const CameraModel& camera, const DepthMap& depth) {
  return compute_normals(camera, depth, false).normals;
}

NormalsWithJacobian normals_with_jacobian(const CameraModel& camera, const DepthMap& depth) {
  return compute_normals(camera, depth, true);
}

PointCloud backproject_cloud(const CameraModel& camera, const DepthMap& depth, const Image* image,
                             const ScalarField* sigma_t) {
  if (!depth.matches(camera) || (image && !image->matches(camera)) ||
      (sigma_t && !sigma_t->matches(camera))) {
    throw DomainError("backproject_cloud: dimension mismatch");
  }
  const std::vector<Vec3> rays = pixel_rays(camera);
  PointCloud cloud;
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    if (!depth.valid(i)) continue;
    cloud.points.push_back(depth.at(i) * rays[i]);
    if (image) cloud.colors.push_back(image->rgb(i));
    if (sigma_t) cloud.sigma.push_back(sigma_t->at(i));
  }
  return cloud;
}

std::optional<Vec2> warp_pixel(const CameraModel& src_camera, const CameraModel& dst_camera,
                               const PoseSE3& pose, const Vec2& pixel, double depth) {
  if (!(depth > 0.0)) throw DomainError("warp_pixel: depth must be positive");
  const Vec3 q = pose.apply(depth * back_project(src_camera, pixel));
  if (!(q.z() > 0.0)) return std::nullopt;
  return project(dst_camera, q);
}

void write_ply(const std::string& path, const PointCloud& cloud) {
  cloud.validate();
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << '\n'
      << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_colors()) {
    out << "property double red\nproperty double green\nproperty double blue\n";
  }
  if (cloud.has_sigma()) out << "property double sigma\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z());
    if (cloud.has_colors()) {
      const Vec3& c = cloud.colors[i];
      out << ' ' << format_double(c.x()) << ' ' << format_double(c.y()) << ' '
          << format_double(c.z());
    }
    if (cloud.has_sigma()) out << ' ' << format_double(cloud.sigma[i]);
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

PointCloud read_ply(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw FormatError("ply: missing magic");
  std::size_t count = 0;
  std::vector<std::string> properties;
  bool header_done = false;
  while (std::getline(in, line)) {
    std::istringstream tokens(line);
    std::string key;
    tokens >> key;
    if (key == "format") {
      std::string fmt;
      tokens >> fmt;
      if (fmt != "ascii") throw FormatError("ply: only ascii is supported");
    } else if (key == "element") {
      std::string name;
      tokens >> name >> count;
      if (name != "vertex") throw FormatError("ply: unexpected element '" + name + "'");
    } else if (key == "property") {
      std::string type, name;
      tokens >> type >> name;
      properties.push_back(name);
    } else if (key == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw FormatError("ply: missing end_header");
  auto find = [&](const std::string& name) -> int {
    for (std::size_t k = 0; k < properties.size(); ++k) {
      if (properties[k] == name) return static_cast<int>(k);
    }
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError("ply: missing x/y/z properties");
  const int ir = find("red"), ig = find("green"), ib = find("blue");
  const int is = find("sigma");
  const bool colors = ir >= 0 && ig >= 0 && ib >= 0;

  PointCloud cloud;
  std::vector<double> row(properties.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (double& v : row) {
      if (!(in >> v)) throw FormatError("ply: truncated vertex data");
    }
    cloud.points.emplace_back(row[ix], row[iy], row[iz]);
    if (colors) cloud.colors.emplace_back(row[ir], row[ig], row[ib]);
    if (is >= 0) cloud.sigma.push_back(row[is]);
  }
  for (const Vec3& p : cloud.points) {
    if (!p.allFinite()) throw FormatError("ply: non-finite coordinate");
  }
  try {
    cloud.validate();
  } catch (const DomainError& e) {
    throw FormatError(std::string("ply: ") + e.what());
  }
  return cloud;
}

std::string pose_to_json(const PoseSE3& pose) {
  nlohmann::json j;
  std::vector<double> r;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) r.push_back(pose.rotation(row, col));
  }
  j["R"] = r;
  j["t"] = {pose.translation.x(), pose.translation.y(), pose.translation.z()};
  return j.dump();
}

PoseSE3 parse_pose(const std::string& json_text) {
  PoseSE3 pose;
  try {
    const auto j = nlohmann::json::parse(json_text);
    const auto& r = j.at("R");
    const auto& t = j.at("t");
    if (!r.is_array() || r.size() != 9 || !t.is_array() || t.size() != 3) {
      throw DomainError("pose: expected R[9] and t[3]");
    }
    for (int k = 0; k < 9; ++k) pose.rotation(k / 3, k % 3) = r.at(k).get<double>();
    for (int k = 0; k < 3; ++k) pose.translation[k] = t.at(k).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("pose: ") + e.what());
  }
  pose.validate();
  return pose;
}

}  // namespace ldk
