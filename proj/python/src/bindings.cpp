#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ldk/cli.hpp"
#include "ldk/errors.hpp"
#include "ldk/geometry.hpp"
#include "ldk/imaging.hpp"
#include "ldk/metrics.hpp"
#include "ldk/optimizer.hpp"
#include "ldk/photometry.hpp"
#include "ldk/registration.hpp"
#include "ldk/rig.hpp"
#include "ldk/simulator.hpp"
#include "ldk/uncertainty.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace ldk;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

// Arrays are (height, width[, channels]); NaN marks invalid pixels in depth
// and normal fields.
void require_shape(const Array& a, py::ssize_t ndim, py::ssize_t channels, const char* what) {
  if (a.ndim() != ndim || (ndim == 3 && a.shape(2) != channels)) {
    std::ostringstream msg;
    msg << what << ": expected an array of shape (h, w" << (ndim == 3 ? ", " + std::to_string(channels) : "")
        << ")";
    throw DomainError(msg.str());
  }
}

template <int C>
void copy_in(const Array& a, Grid<C>& g) {
  const double* src = a.data();
  std::copy(src, src + g.data().size(), g.data().begin());
}

template <int C>
Array copy_out(const Grid<C>& g) {
  std::vector<py::ssize_t> shape = {g.height(), g.width()};
  if (C > 1) shape.push_back(C);
  Array out(shape);
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

DepthMap to_depth(const Array& a) {
  require_shape(a, 2, 1, "depth");
  DepthMap d(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  const double* src = a.data();
  for (std::size_t i = 0; i < d.pixel_count(); ++i) {
    if (std::isfinite(src[i])) d.set(i, src[i]);
  }
  return d;
}

Array from_depth(const DepthMap& d) {
  Array out = copy_out(d);
  double* dst = out.mutable_data();
  for (std::size_t i = 0; i < d.pixel_count(); ++i) {
    if (!d.valid(i)) dst[i] = nan;
  }
  return out;
}

NormalMap to_normals(const Array& a) {
  require_shape(a, 3, 3, "normals");
  NormalMap n(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  const double* src = a.data();
  for (std::size_t i = 0; i < n.pixel_count(); ++i) {
    const Vec3 v(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
    if (v.allFinite()) n.set(i, v);
  }
  return n;
}

Array from_normals(const NormalMap& n) {
  Array out = copy_out(n);
  double* dst = out.mutable_data();
  for (std::size_t i = 0; i < n.pixel_count(); ++i) {
    if (!n.valid(i)) dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = nan;
  }
  return out;
}

Image to_image(const Array& a) {
  require_shape(a, 3, 3, "image");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  copy_in(a, img);
  return img;
}

AlbedoMap to_albedo(const Array& a) {
  require_shape(a, 3, 2, "albedo");
  AlbedoMap alb(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  copy_in(a, alb);
  return alb;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

Array matrix(const Mat3& m) {
  Array out({3, 3});
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.mutable_at(r, c) = m(r, c);
  }
  return out;
}

Array vector3(const Vec3& v) {
  Array out(std::vector<py::ssize_t>{3});
  double* dst = out.mutable_data();
  for (int k = 0; k < 3; ++k) dst[k] = v[k];
  return out;
}

PoseSE3 to_pose(const Array& rotation, const Array& translation) {
  if (rotation.ndim() != 2 || rotation.shape(0) != 3 || rotation.shape(1) != 3 || translation.size() != 3) {
    throw DomainError("pose: expected a 3x3 rotation and a 3-vector translation");
  }
  PoseSE3 p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = rotation.at(r, c);
    p.translation[r] = translation.data()[r];
  }
  p.validate();
  return p;
}

std::vector<Vec3> to_points(const Array& a, const char* what) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw DomainError(std::string(what) + ": expected shape (n, 3)");
  std::vector<Vec3> pts(static_cast<std::size_t>(a.shape(0)));
  const double* src = a.data();
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = Vec3(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
  return pts;
}

py::dict frame_dict(const SceneFrame& f) {
  return py::dict("image"_a = copy_out(f.image), "depth"_a = from_depth(f.depth),
                  "albedo"_a = copy_out(f.albedo), "normals"_a = from_normals(f.normals));
}

py::dict refine_dict(const RefineResult& r) {
  return py::dict("depth"_a = from_depth(r.depth), "albedo"_a = copy_out(r.albedo),
                  "normals"_a = from_normals(r.normals), "rendered"_a = copy_out(r.rendered),
                  "loss_trace"_a = r.loss_trace);
}

// The returned dict carries the rig the frame was rendered with, which
// differs from the input when exposure rescales the light.
py::dict raycast(PhotometricRig rig, const TriangleMesh& mesh, const PoseSE3& pose, double exposure) {
  const Bvh bvh(mesh);
  if (exposure > 0.0) rig.light.max_radiance = exposure_for(rig, mesh, bvh, pose, exposure);
  py::dict out = frame_dict(raycast_frame(rig, mesh, bvh, pose));
  out["rig"] = py::cast(rig);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Photometric depth refinement, evaluation and registration";
  m.attr("__version__") = LDK_VERSION;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ProjectionError>(m, "ProjectionError", base.ptr());
  py::register_exception<RegistrationError>(m, "RegistrationError", base.ptr());
  py::register_exception<OptimizationError>(m, "OptimizationError", base.ptr());

  py::class_<PhotometricRig>(m, "Rig")
      .def(py::init([](int width, int height, double fx, double fy, double cx, double cy, bool fisheye,
                       std::array<double, 3> light_position, double spread, double max_radiance,
                       double gain, double gamma) {
             PhotometricRig rig;
             rig.camera = {fisheye ? CameraKind::fisheye_equidistant : CameraKind::pinhole,
                           width, height, fx, fy, cx, cy};
             rig.light.position = Vec3(light_position[0], light_position[1], light_position[2]);
             rig.light.spread = spread;
             rig.light.max_radiance = max_radiance;
             rig.gain = gain;
             rig.gamma = gamma;
             rig.validate();
             return rig;
           }),
           "width"_a, "height"_a, "fx"_a, "fy"_a, "cx"_a, "cy"_a, "fisheye"_a = false,
           "light_position"_a = std::array<double, 3>{0, 0, 0}, "spread"_a = 0.0,
           "max_radiance"_a = 1.0, "gain"_a = 1.0, "gamma"_a = 1.0)
      .def_static("from_json", &parse_rig, "text"_a)
      .def_static("read", &read_rig, "path"_a)
      .def("to_json", &rig_to_json)
      .def("write", [](const PhotometricRig& r, const std::string& path) { write_rig(path, r); }, "path"_a)
      .def_property_readonly("width", [](const PhotometricRig& r) { return r.camera.width; })
      .def_property_readonly("height", [](const PhotometricRig& r) { return r.camera.height; })
      .def_readwrite("gamma", &PhotometricRig::gamma)
      .def_readwrite("gain", &PhotometricRig::gain)
      .def_property(
          "max_radiance", [](const PhotometricRig& r) { return r.light.max_radiance; },
          [](PhotometricRig& r, double v) { r.light.max_radiance = v; });

  m.def(
      "render_image",
      [](const PhotometricRig& rig, const Array& depth, const Array& albedo, const Array& normals) {
        return copy_out(render_image(rig, to_depth(depth), to_albedo(albedo), to_normals(normals)));
      },
      "rig"_a, "depth"_a, "albedo"_a, "normals"_a,
      "Clamped rendering of depth (h, w), albedo (h, w, 2) and normals (h, w, 3).");

  m.def(
      "normals_from_depth",
      [](const PhotometricRig& rig, const Array& depth) {
        return from_normals(normals_from_depth(rig.camera, to_depth(depth)));
      },
      "rig"_a, "depth"_a);

  m.def(
      "raycast_tube",
      [](const PhotometricRig& rig, const Array& rotation, const Array& translation, double radius,
         double length, int bumps, std::uint64_t seed, double bump_depth, double exposure) {
        TubeParams p;
        p.radius = radius;
        p.length = length;
        p.bumps = bumps;
        p.seed = seed;
        p.bump_depth = bump_depth;
        return raycast(rig, make_tube_scene(p), to_pose(rotation, translation), exposure);
      },
      "rig"_a, "rotation"_a, "translation"_a, "radius"_a = 1.0, "length"_a = 10.0, "bumps"_a = 0,
      "seed"_a = 0, "bump_depth"_a = 0.25, "exposure"_a = 0.0,
      "Ground-truth frame of a ridged tube; exposure > 0 rescales the light to that peak.");

  m.def(
      "raycast_sphere",
      [](const PhotometricRig& rig, const Array& rotation, const Array& translation,
         std::array<double, 3> center, double radius, int subdivisions, std::uint64_t seed,
         double exposure) {
        const TriangleMesh mesh = make_sphere_mesh(Vec3(center[0], center[1], center[2]), radius,
                                                   subdivisions, Vec2(0.02, 0.5), seed);
        return raycast(rig, mesh, to_pose(rotation, translation), exposure);
      },
      "rig"_a, "rotation"_a, "translation"_a, "center"_a, "radius"_a, "subdivisions"_a = 4,
      "seed"_a = 0, "exposure"_a = 0.0);

  m.def(
      "refine",
      [](const PhotometricRig& rig, const Array& image, std::optional<Array> init_depth,
         std::optional<int> steps, std::optional<double> step_size, double smoothness,
         double specular_weight) {
        std::optional<DepthMap> init;
        if (init_depth) init = to_depth(*init_depth);
        RefineConfig rc = init ? RefineConfig{} : RefineConfig::from_scratch();
        if (init) rc.init = InitMode::provided;
        if (steps) rc.steps = *steps;
        if (step_size) rc.step_size = *step_size;
        LossConfig lc;
        lc.smoothness_weight = smoothness;
        lc.specular_weight = specular_weight;
        const Image observed = to_image(image);
        RefineResult r;
        {
          py::gil_scoped_release release;
          r = refine(rig, observed, init, std::nullopt, lc, rc);
        }
        return refine_dict(r);
      },
      "rig"_a, "image"_a, "init_depth"_a = py::none(), "steps"_a = py::none(),
      "step_size"_a = py::none(), "smoothness"_a = LossConfig{}.smoothness_weight,
      "specular_weight"_a = LossConfig{}.specular_weight,
      "Recovers depth, albedo and normals from one image. Without init_depth the solve starts "
      "from a flat surface.");

  m.def(
      "depth_metrics",
      [](const Array& pred, const Array& gt, bool align, const std::string& denominator) {
        if (denominator != "gt" && denominator != "pred") throw DomainError("denominator must be 'gt' or 'pred'");
        MetricsOptions opt;
        opt.align = align;
        opt.denominator = denominator == "pred" ? RelativeTo::prediction : RelativeTo::ground_truth;
        const DepthMetrics d = depth_metrics(to_depth(pred), to_depth(gt), opt);
        return py::dict("abs_rel"_a = d.abs_rel, "sq_rel"_a = d.sq_rel, "rmse"_a = d.rmse,
                        "rmse_log"_a = d.rmse_log, "mae"_a = d.mae, "medae"_a = d.medae,
                        "delta1"_a = d.delta1, "delta2"_a = d.delta2, "delta3"_a = d.delta3,
                        "count"_a = d.count, "scale"_a = d.scale);
      },
      "pred"_a, "gt"_a, "align"_a = true, "denominator"_a = "gt");

  m.def(
      "normal_mae",
      [](const Array& pred, const Array& gt) { return normal_mae(to_normals(pred), to_normals(gt)); },
      "pred"_a, "gt"_a, "Mean angular error in degrees.");

  m.def(
      "fuse_ensemble",
      [](const Array& means, const Array& variances) {
        if (means.ndim() != 3 || variances.ndim() != 3 || means.shape(0) != variances.shape(0) ||
            means.shape(1) != variances.shape(1) || means.shape(2) != variances.shape(2)) {
          throw DomainError("fuse_ensemble: expected matching (members, h, w) arrays");
        }
        const auto h = means.shape(1), w = means.shape(2);
        EnsembleOutputs e;
        for (py::ssize_t k = 0; k < means.shape(0); ++k) {
          EnsembleMember member{DepthMap(static_cast<int>(w), static_cast<int>(h)),
                                ScalarField(static_cast<int>(w), static_cast<int>(h))};
          for (py::ssize_t i = 0; i < h * w; ++i) {
            const double v = means.data()[k * h * w + i];
            if (std::isfinite(v)) member.mean.set(static_cast<std::size_t>(i), v);
            member.var_aleatoric.at(static_cast<std::size_t>(i)) = variances.data()[k * h * w + i];
          }
          e.members.push_back(std::move(member));
        }
        const PredictiveDepth p = fuse_ensemble(e);
        return py::dict("mean"_a = from_depth(p.mean), "var_aleatoric"_a = copy_out(p.var_aleatoric),
                        "var_epistemic"_a = copy_out(p.var_epistemic), "var_total"_a = copy_out(p.var_total));
      },
      "means"_a, "variances"_a);

  m.def(
      "auce",
      [](const Array& residuals, const Array& sigma, const std::string& model) {
        if (model != "gaussian" && model != "laplace") throw DomainError("model must be 'gaussian' or 'laplace'");
        const CalibrationCurve c =
            auce(to_vector(residuals), to_vector(sigma), default_calibration_levels(),
                 model == "laplace" ? IntervalModel::laplace : IntervalModel::gaussian);
        return py::dict("levels"_a = c.levels, "coverage"_a = c.coverage, "auce_signed"_a = c.auce_signed,
                        "auce_abs"_a = c.auce_abs);
      },
      "residuals"_a, "sigma"_a, "model"_a = "gaussian");

  m.def(
      "ause",
      [](const Array& uncertainty, const Array& errors) {
        const SparsificationCurve c = ause(to_vector(uncertainty), to_vector(errors));
        return py::dict("fractions"_a = c.fractions, "by_uncertainty"_a = c.by_uncertainty,
                        "by_error"_a = c.by_error, "ause"_a = c.ause);
      },
      "uncertainty"_a, "errors"_a);

  m.def(
      "icp",
      [](const Array& source, const Array& target, std::optional<Array> source_sigma, double percentile,
         int max_iterations, double tol, double max_pair_dist) {
        PointCloud src, dst;
        src.points = to_points(source, "source");
        dst.points = to_points(target, "target");
        if (source_sigma) src.sigma = to_vector(*source_sigma);
        IcpConfig cfg;
        cfg.percentile = percentile;
        cfg.max_iterations = max_iterations;
        cfg.convergence_tol = tol;
        cfg.max_pair_dist = max_pair_dist;
        const IcpResult r = icp_point_to_point(src, dst, PoseSE3::identity(), cfg);
        return py::dict("rotation"_a = matrix(r.pose.rotation), "translation"_a = vector3(r.pose.translation),
                        "iterations"_a = r.iterations, "converged"_a = r.converged, "rms"_a = r.final_rms,
                        "retained_fraction"_a = r.retained_fraction);
      },
      "source"_a, "target"_a, "source_sigma"_a = py::none(), "percentile"_a = 1.0,
      "max_iterations"_a = 50, "tol"_a = 1e-9, "max_pair_dist"_a = 0.5,
      "Point-to-point alignment of (n, 3) source onto target; returns the source-to-target pose.");

  m.def(
      "pose_errors",
      [](const Array& r_est, const Array& t_est, const Array& r_gt, const Array& t_gt) {
        return pose_errors(to_pose(r_est, t_est), to_pose(r_gt, t_gt));
      },
      "rotation"_a, "translation"_a, "gt_rotation"_a, "gt_translation"_a,
      "(translation error in meters, rotation error in degrees).");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      "args"_a, "Runs one `ldk` command in-process; returns (exit code, stdout, stderr).");
}
