#include "ldk/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ldk/errors.hpp"
#include "ldk/geometry.hpp"
#include "ldk/imaging.hpp"
#include "ldk/losses.hpp"
#include "ldk/metrics.hpp"
#include "ldk/optimizer.hpp"
#include "ldk/parallel.hpp"
#include "ldk/registration.hpp"
#include "ldk/rig.hpp"
#include "ldk/simulator.hpp"
#include "ldk/uncertainty.hpp"

#ifndef LDK_VERSION
#define LDK_VERSION "0.0.0"
#endif

namespace ldk {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public Error {
 public:
  using Error::Error;
};

// State shared by one command invocation.
struct Run {
  std::string command;
  std::vector<std::string> args;  // as recorded in the manifest
  std::uint64_t seed = 0;
  fs::path out;
  json inputs = json::object();
  std::vector<std::string> outputs;

  std::string path(const std::string& name) {
    outputs.push_back(name);
    return (out / name).string();
  }
  void input(const std::string& key, const std::string& value) {
    if (!value.empty()) inputs[key] = value;
  }
};

std::string frame_name(int k, const std::string& what) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "frame_%03d_%s", k, what.c_str());
  return buf;
}

std::string member_name(int k, const std::string& what) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "member_%03d_%s", k, what.c_str());
  return buf;
}

void write_manifest(Run& run) {
  json m;
  m["tool"] = "ldk";
  m["version"] = LDK_VERSION;
  m["command"] = run.command;
  m["args"] = run.args;
  m["seed"] = run.seed;
  m["inputs"] = run.inputs;
  m["outputs"] = run.outputs;
  write_file_atomic((run.out / "manifest.json").string(), m.dump(2) + "\n");
}

void prepare_out(const Run& run) {
  std::error_code ec;
  fs::create_directories(run.out, ec);
  if (ec) throw IoError("cannot create output directory '" + run.out.string() + "'");
}

std::vector<PoseSE3> read_poses(const std::string& path) {
  if (path.empty()) return {PoseSE3::identity()};
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DomainError(std::string("poses: ") + e.what());
  }
  std::vector<PoseSE3> poses;
  if (doc.is_array()) {
    for (const auto& p : doc) poses.push_back(parse_pose(p.dump()));
  } else {
    poses.push_back(parse_pose(doc.dump()));
  }
  if (poses.empty()) throw DomainError("poses: no pose given");
  return poses;
}

// --- render ---------------------------------------------------------------

struct RenderArgs {
  std::string rig, mesh, mesh_albedo, poses, scene = "tube";
  double radius = 1.0, length = 10.0, bump_depth = 0.25, exposure = 0.0;
  int bumps = 0, segments = 96, rings = 0, subdivisions = 4;
  bool png = false, save_mesh = false;
};

void cmd_render(Run& run, const RenderArgs& a) {
  run.input("rig", a.rig);
  run.input("mesh", a.mesh);
  run.input("mesh_albedo", a.mesh_albedo);
  run.input("poses", a.poses);
  PhotometricRig rig = read_rig(a.rig);
  TriangleMesh mesh;
  if (!a.mesh.empty()) {
    mesh = read_obj(a.mesh, a.mesh_albedo.empty() ? a.mesh + ".albedo.json" : a.mesh_albedo);
  } else if (a.scene == "tube") {
    TubeParams p;
    p.radius = a.radius;
    p.length = a.length;
    p.bumps = a.bumps;
    p.seed = run.seed;
    p.segments = a.segments;
    p.rings = a.rings;
    p.bump_depth = a.bump_depth;
    mesh = make_tube_scene(p);
  } else {
    mesh = make_sphere_mesh(Vec3::Zero(), a.radius, a.subdivisions, Vec2(0.02, 0.5), run.seed);
  }
  const std::vector<PoseSE3> poses = read_poses(a.poses);
  const Bvh bvh(mesh);
  if (a.exposure > 0.0) rig.light.max_radiance = exposure_for(rig, mesh, bvh, poses.front(), a.exposure);
  prepare_out(run);

  write_file_atomic(run.path("rig.json"), rig_to_json(rig) + "\n");
  if (a.save_mesh) write_obj(run.path("scene.obj"), run.path("scene.albedo.json"), mesh);
  json frames = json::array();
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const int id = static_cast<int>(k);
    const SceneFrame f = raycast_frame(rig, mesh, bvh, poses[k]);
    json entry;
    entry["image"] = frame_name(id, "image.ldk");
    entry["depth"] = frame_name(id, "depth.ldk");
    entry["albedo"] = frame_name(id, "albedo.ldk");
    entry["normals"] = frame_name(id, "normals.ldk");
    write_field(run.path(entry["image"]), f.image);
    write_field(run.path(entry["depth"]), f.depth);
    write_field(run.path(entry["albedo"]), f.albedo);
    write_field(run.path(entry["normals"]), f.normals);
    if (a.png) {
      entry["png"] = frame_name(id, "image.png");
      write_png(run.path(entry["png"]), f.image);
    }
    entry["pose"] = json::parse(pose_to_json(f.pose));
    frames.push_back(entry);
  }
  json doc;
  doc["rig"] = "rig.json";
  doc["frames"] = frames;
  write_file_atomic(run.path("frames.json"), doc.dump(2) + "\n");
}

// --- refine ---------------------------------------------------------------

struct RefineArgs {
  std::string rig, image, init_depth, init_albedo, init = "flat", param = "log-depth";
  int steps = 0, members = 0;
  double step_size = 0.0, albedo_step_size = -1.0, final_step_ratio = 0.0, flat_depth = 0.0;
  double smoothness = LossConfig{}.smoothness_weight;
  double specular_weight = LossConfig{}.specular_weight;
  double specular_threshold = LossConfig{}.specular_threshold;
  double perturbation = 0.1;
  bool png = false;
};

void write_refine_result(Run& run, const RefineResult& r, const std::string& prefix, bool png) {
  write_field(run.path(prefix + "depth.ldk"), r.depth);
  write_field(run.path(prefix + "albedo.ldk"), r.albedo);
  write_field(run.path(prefix + "normals.ldk"), r.normals);
  write_field(run.path(prefix + "rendered.ldk"), r.rendered);
  if (png) write_png(run.path(prefix + "rendered.png"), r.rendered);
  std::ostringstream csv;
  csv << std::setprecision(17) << "step,loss\n";
  for (std::size_t k = 0; k < r.loss_trace.size(); ++k) csv << k << ',' << r.loss_trace[k] << '\n';
  write_file_atomic(run.path(prefix + "loss_trace.csv"), csv.str());
}

void cmd_refine(Run& run, const RefineArgs& a) {
  run.input("rig", a.rig);
  run.input("image", a.image);
  run.input("init_depth", a.init_depth);
  run.input("init_albedo", a.init_albedo);
  const PhotometricRig rig = read_rig(a.rig);
  const Image observed = load_image(a.image);
  if (!observed.matches(rig.camera)) throw DomainError("refine: image does not match the rig camera");

  std::optional<DepthMap> init_depth;
  std::optional<AlbedoMap> init_albedo;
  if (!a.init_depth.empty()) init_depth = read_depth(a.init_depth);
  if (!a.init_albedo.empty()) init_albedo = read_albedo(a.init_albedo);
  if (a.init == "provided" && !init_depth) throw UsageError("--init provided requires --init-depth");

  RefineConfig rc = init_depth ? RefineConfig{} : RefineConfig::from_scratch();
  if (init_depth) rc.init = InitMode::provided;
  else if (a.init == "brightness") rc.init = InitMode::brightness;
  else rc.init = InitMode::flat;
  if (a.steps > 0) rc.steps = a.steps;
  if (a.step_size > 0.0) rc.step_size = a.step_size;
  if (a.albedo_step_size >= 0.0) rc.albedo_step_size = a.albedo_step_size;
  if (a.final_step_ratio > 0.0) rc.final_step_ratio = a.final_step_ratio;
  rc.flat_depth = a.flat_depth;
  rc.parameterization =
      a.param == "depth" ? DepthParameterization::depth : DepthParameterization::log_depth;

  LossConfig lc;
  lc.smoothness_weight = a.smoothness;
  lc.specular_weight = a.specular_weight;
  lc.specular_threshold = a.specular_threshold;

  if (a.members > 0) {
    if (init_depth) throw UsageError("--members starts from the configured init; drop --init-depth");
    const std::vector<RefineResult> results =
        ensemble_refine(rig, observed, a.members, run.seed, lc, rc, a.perturbation);
    prepare_out(run);
    for (int k = 0; k < a.members; ++k) {
      write_refine_result(run, results[static_cast<std::size_t>(k)], member_name(k, ""), false);
    }
    const PredictiveDepth fused = fuse_ensemble(to_ensemble(results));
    write_field(run.path("mean.ldk"), fused.mean);
    write_field(run.path("var_aleatoric.ldk"), fused.var_aleatoric);
    write_field(run.path("var_epistemic.ldk"), fused.var_epistemic);
    write_field(run.path("var_total.ldk"), fused.var_total);
    return;
  }
  const RefineResult result = refine(rig, observed, init_depth, init_albedo, lc, rc);
  prepare_out(run);
  write_refine_result(run, result, "", a.png);
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string pred_depth, gt_depth, pred_normals, gt_normals, pred_image, gt_image;
  std::string denominator = "gt";
  bool no_align = false;
};

void cmd_eval(Run& run, const EvalArgs& a, std::ostream& out) {
  const bool depth = !a.pred_depth.empty() || !a.gt_depth.empty();
  const bool normals = !a.pred_normals.empty() || !a.gt_normals.empty();
  const bool image = !a.pred_image.empty() || !a.gt_image.empty();
  if (!depth && !normals && !image) throw UsageError("eval: nothing to evaluate");
  if ((depth && (a.pred_depth.empty() || a.gt_depth.empty())) ||
      (normals && (a.pred_normals.empty() || a.gt_normals.empty())) ||
      (image && (a.pred_image.empty() || a.gt_image.empty()))) {
    throw UsageError("eval: prediction and ground truth must be given in pairs");
  }
  run.input("pred_depth", a.pred_depth);
  run.input("gt_depth", a.gt_depth);
  run.input("pred_normals", a.pred_normals);
  run.input("gt_normals", a.gt_normals);
  run.input("pred_image", a.pred_image);
  run.input("gt_image", a.gt_image);

  json result = json::object();
  std::string csv;
  if (depth) {
    MetricsOptions opt;
    opt.align = !a.no_align;
    opt.denominator = a.denominator == "pred" ? RelativeTo::prediction : RelativeTo::ground_truth;
    const DepthMetrics m = depth_metrics(read_depth(a.pred_depth), read_depth(a.gt_depth), opt);
    result = json::parse(metrics_to_json(m));
    csv = metrics_csv_header() + "\n" + metrics_csv_row(m) + "\n";
  }
  if (normals) result["normal_mae"] = normal_mae(read_normals(a.pred_normals), read_normals(a.gt_normals));
  if (image) {
    const Image p = load_image(a.pred_image);
    const Image g = load_image(a.gt_image);
    if (!p.same_shape(g)) throw DomainError("eval: image dimension mismatch");
    result["image_ssim"] = mean_ssim(p, g);
    result["image_mae"] = image_mae(p, g);
  }
  prepare_out(run);
  write_file_atomic(run.path("metrics.json"), result.dump(2) + "\n");
  if (!csv.empty()) write_file_atomic(run.path("metrics.csv"), csv);
  out << result.dump(2) << '\n';
}

// --- uncertainty ----------------------------------------------------------

struct UncertaintyArgs {
  std::vector<std::string> members, member_vars;
  std::string mean, var, gt, model = "gaussian";
};

void cmd_uncertainty(Run& run, const UncertaintyArgs& a, std::ostream& out) {
  PredictiveDepth pred;
  if (!a.members.empty()) {
    if (!a.mean.empty()) throw UsageError("uncertainty: use either --member or --mean");
    if (!a.member_vars.empty() && a.member_vars.size() != a.members.size()) {
      throw UsageError("uncertainty: --member-var must be given once per member");
    }
    EnsembleOutputs ens;
    for (std::size_t k = 0; k < a.members.size(); ++k) {
      run.input("member_" + std::to_string(k), a.members[k]);
      DepthMap mean = read_depth(a.members[k]);
      ScalarField var(mean.width(), mean.height());
      if (!a.member_vars.empty()) {
        run.input("member_var_" + std::to_string(k), a.member_vars[k]);
        var = read_scalar(a.member_vars[k]);
      }
      ens.members.push_back({std::move(mean), std::move(var)});
    }
    pred = fuse_ensemble(ens);
  } else {
    if (a.mean.empty() || a.var.empty()) throw UsageError("uncertainty: give --member or --mean with --var");
    run.input("mean", a.mean);
    run.input("var", a.var);
    pred.mean = read_depth(a.mean);
    pred.var_total = read_scalar(a.var);
    if (!pred.var_total.same_shape(pred.mean)) throw DomainError("uncertainty: dimension mismatch");
    pred.var_aleatoric = pred.var_total;
    pred.var_epistemic = ScalarField(pred.mean.width(), pred.mean.height());
  }
  pred.validate();
  prepare_out(run);
  write_field(run.path("mean.ldk"), pred.mean);
  write_field(run.path("var_aleatoric.ldk"), pred.var_aleatoric);
  write_field(run.path("var_epistemic.ldk"), pred.var_epistemic);
  write_field(run.path("var_total.ldk"), pred.var_total);
  if (a.gt.empty()) return;

  run.input("gt", a.gt);
  const DepthMap gt = read_depth(a.gt);
  const IntervalModel model = a.model == "laplace" ? IntervalModel::laplace : IntervalModel::gaussian;
  const CalibrationCurve cal = auce(pred, gt, {}, model);
  const SparsificationCurve sp = ause(pred, gt);
  write_file_atomic(run.path("auce.csv"), calibration_csv(cal));
  write_file_atomic(run.path("ause.csv"), sparsification_csv(sp));
  json summary;
  summary["auce_signed"] = cal.auce_signed;
  summary["auce_abs"] = cal.auce_abs;
  summary["ause"] = sp.ause;
  summary["pixels"] = cal.pixels;
  write_file_atomic(run.path("summary.json"), summary.dump(2) + "\n");
  out << summary.dump(2) << '\n';
}

// --- icp ------------------------------------------------------------------

struct IcpArgs {
  std::string source, target, source_sigma, target_sigma, rig, init, gt_pose;
  IcpConfig config;
};

PointCloud load_cloud(const std::string& path, const std::string& sigma_path,
                      const std::optional<PhotometricRig>& rig) {
  if (fs::path(path).extension() == ".ply") {
    if (!sigma_path.empty()) throw UsageError("icp: sigma files apply to depth frames only");
    return read_ply(path);
  }
  if (!rig) throw UsageError("icp: depth frames need --rig");
  const DepthMap depth = read_depth(path);
  if (sigma_path.empty()) return backproject_cloud(rig->camera, depth);
  const ScalarField sigma = read_scalar(sigma_path);
  return backproject_cloud(rig->camera, depth, nullptr, &sigma);
}

void cmd_icp(Run& run, const IcpArgs& a, std::ostream& out) {
  run.input("source", a.source);
  run.input("target", a.target);
  run.input("source_sigma", a.source_sigma);
  run.input("target_sigma", a.target_sigma);
  run.input("rig", a.rig);
  run.input("init", a.init);
  run.input("gt_pose", a.gt_pose);
  std::optional<PhotometricRig> rig;
  if (!a.rig.empty()) rig = read_rig(a.rig);
  const PointCloud source = load_cloud(a.source, a.source_sigma, rig);
  const PointCloud target = load_cloud(a.target, a.target_sigma, rig);
  const PoseSE3 init = a.init.empty() ? PoseSE3::identity() : parse_pose(read_file(a.init));
  std::optional<PoseSE3> gt;
  if (!a.gt_pose.empty()) gt = parse_pose(read_file(a.gt_pose));

  const IcpResult result = icp_point_to_point(source, target, init, a.config);
  json doc = json::parse(icp_result_to_json(result));
  if (gt) {
    const auto [t_err, r_err] = pose_errors(result.pose, *gt);
    doc["translation_error"] = t_err;
    doc["rotation_error_deg"] = r_err;
  }
  prepare_out(run);
  write_file_atomic(run.path("icp.json"), doc.dump(2) + "\n");
  out << doc.dump(2) << '\n';
}

// --- argument bookkeeping ---------------------------------------------------

bool takes_value(const std::string& arg, const std::string& name) { return arg == name; }

// Arguments without --threads and --seed; the resolved seed is appended.
std::vector<std::string> recorded_args(const std::vector<std::string>& args, std::uint64_t seed) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < args.size(); ++k) {
    const std::string& a = args[k];
    if (takes_value(a, "--threads") || takes_value(a, "--seed")) {
      ++k;
      continue;
    }
    if (a.rfind("--threads=", 0) == 0 || a.rfind("--seed=", 0) == 0) continue;
    out.push_back(a);
  }
  out.push_back("--seed");
  out.push_back(std::to_string(seed));
  return out;
}

std::vector<std::string> replay_args(const std::string& manifest_path, const std::string& out_override,
                                     int threads) {
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  std::vector<std::string> args;
  try {
    args = m.at("args").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (args.empty() || args.front() == "replay") throw FormatError("manifest: no replayable command");
  if (!out_override.empty()) {
    for (std::size_t k = 0; k < args.size(); ++k) {
      if (args[k] == "--out" && k + 1 < args.size()) args[k + 1] = out_override;
      else if (args[k].rfind("--out=", 0) == 0) args[k] = "--out=" + out_override;
    }
  }
  if (threads >= 0) {
    args.push_back("--threads");
    args.push_back(std::to_string(threads));
  }
  return args;
}

std::uint64_t seed_from_env() {
  const char* env = std::getenv("LDK_SEED");
  if (!env || !*env) return 0;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw UsageError("LDK_SEED must be a non-negative integer");
  }
}

int report(std::ostream& err, const char* category, const std::string& message, int code) {
  err << "ldk: error[" << category << "]: " << message << '\n';
  return code;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Photometric depth refinement, evaluation and registration toolkit", "ldk"};
  app.set_version_flag("--version", LDK_VERSION);
  app.set_config("--config", "", "TOML file with option defaults; flags take precedence");
  app.fallthrough();
  app.require_subcommand(1);

  int threads = -1;
  std::uint64_t seed = 0;
  auto* threads_opt = app.add_option("--threads", threads, "Worker thread cap (0: all cores)")
                          ->check(CLI::NonNegativeNumber);
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (default: $LDK_SEED, else 0)");

  const auto unit_interval = CLI::Validator(
      [](std::string& s) -> std::string {
        double v = 0.0;
        try {
          v = std::stod(s);
        } catch (const std::exception&) {
          return "not a number";
        }
        return v > 0.0 && v <= 1.0 ? "" : "must lie in (0, 1]";
      },
      "(0,1]");

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Ray-cast ground-truth frames of a scene");
  render->add_option("--rig", ra.rig, "Rig calibration JSON")->required();
  render->add_option("--mesh", ra.mesh, "OBJ mesh (default: builtin scene)");
  render->add_option("--mesh-albedo", ra.mesh_albedo, "Per-face albedo JSON (default: <mesh>.albedo.json)");
  render->add_option("--scene", ra.scene, "Builtin scene")->check(CLI::IsMember({"tube", "sphere"}));
  render->add_option("--radius", ra.radius, "Builtin scene radius")->check(CLI::PositiveNumber);
  render->add_option("--length", ra.length, "Tube length")->check(CLI::PositiveNumber);
  render->add_option("--bumps", ra.bumps, "Tube ridges")->check(CLI::NonNegativeNumber);
  render->add_option("--bump-depth", ra.bump_depth, "Ridge inset as a fraction of the radius");
  render->add_option("--segments", ra.segments, "Tube segments around")->check(CLI::Range(3, 100000));
  render->add_option("--rings", ra.rings, "Tube rings along (0: auto)")->check(CLI::NonNegativeNumber);
  render->add_option("--subdivisions", ra.subdivisions, "Sphere subdivisions")->check(CLI::Range(0, 7));
  render->add_option("--poses", ra.poses, "Camera-to-scene pose JSON (object or array)");
  render->add_option("--exposure", ra.exposure,
                     "Scale the light so the first frame peaks at this value (0: keep the rig's)")
      ->check(CLI::Range(0.0, 1.0));
  render->add_flag("--png", ra.png, "Also write PNG previews");
  render->add_flag("--save-mesh", ra.save_mesh, "Also write the scene mesh");

  RefineArgs fa;
  auto* refine_cmd = app.add_subcommand("refine", "Recover depth and albedo from one image");
  refine_cmd->add_option("--rig", fa.rig, "Rig calibration JSON")->required();
  refine_cmd->add_option("--image", fa.image, "Observed image (LDK1 or PNG)")->required();
  refine_cmd->add_option("--init-depth", fa.init_depth, "Initial depth field");
  refine_cmd->add_option("--init-albedo", fa.init_albedo, "Initial albedo field");
  refine_cmd->add_option("--init", fa.init, "Initialization without --init-depth")
      ->check(CLI::IsMember({"flat", "brightness", "provided"}));
  refine_cmd->add_option("--flat-depth", fa.flat_depth, "Flat init ray length (0: median brightness depth)")
      ->check(CLI::NonNegativeNumber);
  refine_cmd->add_option("--steps", fa.steps, "Optimization steps")->check(CLI::Range(1, 100000000));
  refine_cmd->add_option("--step-size", fa.step_size, "Depth learning rate")->check(CLI::PositiveNumber);
  refine_cmd->add_option("--albedo-step-size", fa.albedo_step_size, "Albedo learning rate")
      ->check(CLI::NonNegativeNumber);
  refine_cmd->add_option("--final-step-ratio", fa.final_step_ratio, "Learning-rate ratio at the last step")
      ->check(unit_interval);
  refine_cmd->add_option("--param", fa.param, "Depth parameterization")
      ->check(CLI::IsMember({"log-depth", "depth"}));
  refine_cmd->add_option("--smoothness", fa.smoothness, "Smoothness weight")->check(CLI::NonNegativeNumber);
  refine_cmd->add_option("--specular-weight", fa.specular_weight, "Specular weight")
      ->check(CLI::NonNegativeNumber);
  refine_cmd->add_option("--specular-threshold", fa.specular_threshold, "Specular threshold")
      ->check(unit_interval);
  refine_cmd->add_option("--members", fa.members, "Ensemble size (perturbed inits)")
      ->check(CLI::Range(1, 1024));
  refine_cmd->add_option("--perturbation", fa.perturbation, "Log-depth init perturbation for members")
      ->check(CLI::NonNegativeNumber);
  refine_cmd->add_flag("--png", fa.png, "Also write a PNG of the rendering");

  EvalArgs ea;
  bool align_flag = false;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--pred-depth", ea.pred_depth, "Predicted depth");
  eval->add_option("--gt-depth", ea.gt_depth, "Ground-truth depth");
  eval->add_option("--pred-normals", ea.pred_normals, "Predicted normals");
  eval->add_option("--gt-normals", ea.gt_normals, "Ground-truth normals");
  eval->add_option("--pred-image", ea.pred_image, "Rendered image");
  eval->add_option("--gt-image", ea.gt_image, "Reference image");
  auto* no_align = eval->add_flag("--no-align", ea.no_align, "Skip median scale alignment");
  eval->add_flag("--align", align_flag, "Median scale alignment (default)")->excludes(no_align);
  eval->add_option("--denominator", ea.denominator, "Relative error denominator")
      ->check(CLI::IsMember({"gt", "pred"}));

  UncertaintyArgs ua;
  auto* unc = app.add_subcommand("uncertainty", "Fuse ensembles and score calibration");
  unc->add_option("--member", ua.members, "Ensemble member depth (repeatable)");
  unc->add_option("--member-var", ua.member_vars, "Member aleatoric variance (repeatable)");
  unc->add_option("--mean", ua.mean, "Predictive mean depth");
  unc->add_option("--var", ua.var, "Predictive total variance");
  unc->add_option("--gt", ua.gt, "Ground-truth depth for AUCE/AUSE");
  unc->add_option("--model", ua.model, "Interval model")->check(CLI::IsMember({"gaussian", "laplace"}));

  IcpArgs ia;
  auto* icp = app.add_subcommand("icp", "Rigidly align two clouds or depth frames");
  icp->add_option("--source", ia.source, "Source PLY or depth field")->required();
  icp->add_option("--target", ia.target, "Target PLY or depth field")->required();
  icp->add_option("--source-sigma", ia.source_sigma, "Source per-pixel sigma field");
  icp->add_option("--target-sigma", ia.target_sigma, "Target per-pixel sigma field");
  icp->add_option("--rig", ia.rig, "Rig for depth frames");
  icp->add_option("--init", ia.init, "Initial source-to-target pose JSON");
  icp->add_option("--gt-pose", ia.gt_pose, "Ground-truth pose JSON for error reporting");
  icp->add_option("--percentile", ia.config.percentile, "Fraction of most certain points kept")
      ->check(unit_interval);
  icp->add_option("--max-iterations", ia.config.max_iterations, "Iteration cap")
      ->check(CLI::Range(1, 1000000));
  icp->add_option("--tol", ia.config.convergence_tol, "Convergence tolerance (m)")
      ->check(CLI::PositiveNumber);
  icp->add_option("--max-pair-dist", ia.config.max_pair_dist, "Correspondence gate (m)")
      ->check(CLI::PositiveNumber);

  std::string replay_manifest;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("manifest", replay_manifest, "manifest.json of an earlier run")->required();

  std::vector<std::string> outs(6);
  for (auto [cmd, slot] : {std::pair{render, 0}, {refine_cmd, 1}, {eval, 2}, {unc, 3}, {icp, 4}}) {
    cmd->add_option("--out", outs[static_cast<std::size_t>(slot)], "Output directory")->required();
  }
  replay->add_option("--out", outs[5], "Output directory override");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::CallForVersion&) {
    out << LDK_VERSION << '\n';
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    return report(err, "usage", e.what(), exit_usage);
  }

  set_max_threads(threads_opt->count() > 0 ? threads : 0);
  if (seed_opt->count() == 0) seed = seed_from_env();

  if (replay->parsed()) {
    return run_cli(replay_args(replay_manifest, outs[5], threads_opt->count() > 0 ? threads : -1), out,
                   err);
  }

  Run run;
  run.seed = seed;
  run.args = recorded_args(args, seed);
  if (render->parsed()) {
    run.command = "render";
    run.out = outs[0];
    cmd_render(run, ra);
  } else if (refine_cmd->parsed()) {
    run.command = "refine";
    run.out = outs[1];
    cmd_refine(run, fa);
  } else if (eval->parsed()) {
    run.command = "eval";
    run.out = outs[2];
    cmd_eval(run, ea, out);
  } else if (unc->parsed()) {
    run.command = "uncertainty";
    run.out = outs[3];
    cmd_uncertainty(run, ua, out);
  } else {
    run.command = "icp";
    run.out = outs[4];
    cmd_icp(run, ia, out);
  }
  write_manifest(run);
  return exit_ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const UsageError& e) {
    return report(err, "usage", e.what(), exit_usage);
  } catch (const OptimizationError& e) {
    return report(err, "numerical", e.what(), exit_numerical);
  } catch (const RegistrationError& e) {
    return report(err, "numerical", e.what(), exit_numerical);
  } catch (const IoError& e) {
    return report(err, "io", e.what(), exit_io);
  } catch (const fs::filesystem_error& e) {
    return report(err, "io", e.what(), exit_io);
  } catch (const Error& e) {
    return report(err, "validation", e.what(), exit_validation);
  }
}

}  // namespace ldk
