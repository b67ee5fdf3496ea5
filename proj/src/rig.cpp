#include "ldk/rig.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "ldk/errors.hpp"

namespace ldk {
namespace {

using nlohmann::json;

bool finite(double v) { return std::isfinite(v); }

Vec3 vec3_from_json(const json& j, const char* name) {
  if (!j.is_array() || j.size() != 3) {
    throw DomainError(std::string("rig: '") + name + "' must be a 3-element array");
  }
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

void CameraModel::validate() const {
  if (width <= 0 || height <= 0) throw DomainError("camera: image size must be positive");
  if (!(fx > 0.0) || !(fy > 0.0) || !finite(fx) || !finite(fy)) {
    throw DomainError("camera: focal lengths must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw DomainError("camera: principal point outside the image");
  }
  if (kind == CameraKind::fisheye_equidistant) {
    // Equidistant angle grows monotonically with the normalized radius, so the
    // farthest corner bounds every in-bounds pixel.
    double worst = 0.0;
    for (double u : {-0.5, width - 0.5}) {
      for (double v : {-0.5, height - 0.5}) {
        worst = std::max(worst, std::hypot((u - cx) / fx, (v - cy) / fy));
      }
    }
    if (worst >= std::numbers::pi / 2.0) {
      throw DomainError("camera: fisheye field of view reaches the rear hemisphere");
    }
  }
}

bool CameraModel::contains(const Vec2& pixel) const {
  return pixel.x() >= -0.5 && pixel.x() <= width - 0.5 && pixel.y() >= -0.5 &&
         pixel.y() <= height - 0.5;
}

Vec3 back_project(const CameraModel& camera, const Vec2& pixel) {
  if (!camera.contains(pixel)) throw DomainError("back_project: pixel out of bounds");
  const double mx = (pixel.x() - camera.cx) / camera.fx;
  const double my = (pixel.y() - camera.cy) / camera.fy;
  switch (camera.kind) {
    case CameraKind::pinhole:
      return Vec3(mx, my, 1.0).normalized();
    case CameraKind::fisheye_equidistant: {
      const double theta = std::hypot(mx, my);
      if (theta == 0.0) return Vec3::UnitZ();
      const double s = std::sin(theta) / theta;
      return {s * mx, s * my, std::cos(theta)};
    }
  }
  throw DomainError("back_project: unknown camera kind");
}

Vec2 project(const CameraModel& camera, const Vec3& point) {
  if (!(point.z() > 0.0)) throw ProjectionError("project: point behind the camera");
  switch (camera.kind) {
    case CameraKind::pinhole:
      return {camera.fx * point.x() / point.z() + camera.cx,
              camera.fy * point.y() / point.z() + camera.cy};
    case CameraKind::fisheye_equidistant: {
      const double rho = std::hypot(point.x(), point.y());
      if (rho == 0.0) return {camera.cx, camera.cy};
      const double theta = std::atan2(rho, point.z());
      return {camera.fx * theta * point.x() / rho + camera.cx,
              camera.fy * theta * point.y() / rho + camera.cy};
    }
  }
  throw DomainError("project: unknown camera kind");
}

std::vector<Vec3> pixel_rays(const CameraModel& camera) {
  std::vector<Vec3> rays;
  rays.reserve(camera.pixel_count());
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) rays.push_back(back_project(camera, Vec2(x, y)));
  }
  return rays;
}

void LightModel::validate() const {
  if (!position.allFinite()) throw DomainError("light: position must be finite");
  if (!axis.allFinite() || std::abs(axis.norm() - 1.0) > 1e-9) {
    throw DomainError("light: axis must be a unit vector");
  }
  if (!(spread >= 0.0) || !finite(spread)) throw DomainError("light: spread must be >= 0");
  if (!(max_radiance > 0.0) || !finite(max_radiance)) {
    throw DomainError("light: max radiance must be > 0");
  }
}

double radial_falloff(const LightModel& light, double psi) {
  return std::exp(-light.spread * (1.0 - std::cos(psi)));
}

double irradiance_at(const LightModel& light, const Vec3& x) {
  const Vec3 v = x - light.position;
  const double dist2 = v.squaredNorm();
  if (!(dist2 > 0.0)) throw DomainError("irradiance_at: point coincides with the light");
  const double cos_psi = light.axis.dot(v) / std::sqrt(dist2);
  return light.max_radiance * std::exp(-light.spread * (1.0 - cos_psi)) / dist2;
}

void PhotometricRig::validate() const {
  camera.validate();
  light.validate();
  if (!(gain > 0.0) || !finite(gain)) throw DomainError("rig: gain must be > 0");
  if (!(gamma > 0.0) || !finite(gamma)) throw DomainError("rig: gamma must be > 0");
}

PhotometricRig parse_rig(const std::string& json_text) {
  PhotometricRig rig;
  try {
    const json doc = json::parse(json_text);
    const json& cam = doc.at("camera");
    const std::string kind = cam.at("kind").get<std::string>();
    if (kind == "pinhole") {
      rig.camera.kind = CameraKind::pinhole;
    } else if (kind == "fisheye-equidistant" || kind == "fisheye_equidistant") {
      rig.camera.kind = CameraKind::fisheye_equidistant;
    } else {
      throw DomainError("rig: unknown camera kind '" + kind + "'");
    }
    rig.camera.width = cam.at("width").get<int>();
    rig.camera.height = cam.at("height").get<int>();
    rig.camera.fx = cam.at("fx").get<double>();
    rig.camera.fy = cam.at("fy").get<double>();
    rig.camera.cx = cam.at("cx").get<double>();
    rig.camera.cy = cam.at("cy").get<double>();

    const json& light = doc.at("light");
    rig.light.position = vec3_from_json(light.at("position"), "position");
    rig.light.axis = vec3_from_json(light.at("axis"), "axis");
    rig.light.spread = light.at("mu").get<double>();
    rig.light.max_radiance = light.value("sigma0", 1.0);
    rig.gain = doc.value("gain", 1.0);
    rig.gamma = doc.value("gamma", 1.0);
  } catch (const json::exception& e) {
    throw DomainError(std::string("rig: ") + e.what());
  }
  rig.validate();
  return rig;
}

std::string rig_to_json(const PhotometricRig& rig) {
  const auto& c = rig.camera;
  const auto& l = rig.light;
  json doc;
  doc["camera"] = {{"kind", c.kind == CameraKind::pinhole ? "pinhole" : "fisheye-equidistant"},
                   {"width", c.width},
                   {"height", c.height},
                   {"fx", c.fx},
                   {"fy", c.fy},
                   {"cx", c.cx},
                   {"cy", c.cy}};
  doc["light"] = {{"position", {l.position.x(), l.position.y(), l.position.z()}},
                  {"axis", {l.axis.x(), l.axis.y(), l.axis.z()}},
                  {"mu", l.spread},
                  {"sigma0", l.max_radiance}};
  doc["gain"] = rig.gain;
  doc["gamma"] = rig.gamma;
  return doc.dump(2);
}

PhotometricRig read_rig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rig file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_rig(buffer.str());
}

void write_rig(const std::string& path, const PhotometricRig& rig) {
  rig.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write rig file '" + path + "'");
  out << rig_to_json(rig) << '\n';
}

}  // namespace ldk
