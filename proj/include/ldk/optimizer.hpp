#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ldk/errors.hpp"
#include "ldk/imaging.hpp"
#include "ldk/losses.hpp"
#include "ldk/rig.hpp"
#include "ldk/uncertainty.hpp"

namespace ldk {

enum class DepthParameterization { log_depth, depth };

// flat: constant ray length (flat_depth, or the median brightness-implied
// depth when flat_depth is 0). brightness: per-pixel brightness-implied depth.
// provided: the caller's init_depth.
enum class InitMode { flat, brightness, provided };

struct RefineConfig {
  int steps = 20;
  double step_size = 1e-4;         // depth parameter learning rate
  double albedo_step_size = 1e-4;  // hue and saturation learning rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  // Gradients well below epsilon take plain gradient steps of size
  // step_size / epsilon, so an exact minimum stays put.
  double epsilon = 1e-5;
  // Learning rates decay geometrically to step_size * final_step_ratio at
  // the last step. 1 keeps them constant.
  double final_step_ratio = 1.0;
  DepthParameterization parameterization = DepthParameterization::log_depth;
  // The depth parameter is the initial value plus the sum of `levels` grids
  // at strides 1, 2, 4, ..., each bilinearly upsampled and updated with its
  // own moments. 1 gives plain per-pixel updates.
  int levels = 1;
  // The grid at stride 2^l uses step_size * level_step_gain^l.
  double level_step_gain = 1.0;
  InitMode init = InitMode::flat;
  double flat_depth = 0.0;
  double min_intensity = 1e-3;  // observed pixels at or below are ignored

  // Settings for solves that start without a warm start.
  static RefineConfig from_scratch();
  void validate() const;
};

struct RefineResult {
  DepthMap depth;
  AlbedoMap albedo;
  NormalMap normals;
  Image rendered;
  std::vector<double> loss_trace;  // steps + 1 totals, initial first
};

class OptimizationError : public Error {
 public:
  OptimizationError(const std::string& what, RefineResult last_finite)
      : Error(what), last_finite_(std::move(last_finite)) {}
  const RefineResult& last_finite() const { return last_finite_; }

 private:
  RefineResult last_finite_;
};

// Pixels whose brightest observed channel exceeds min_intensity.
std::vector<std::uint8_t> observed_mask(const Image& observed, double min_intensity);

// Per-pixel depth that explains the brightest channel under a white albedo
// and a surface facing the camera. Invalid where the mask is zero.
DepthMap brightness_depth(const PhotometricRig& rig, const Image& observed,
                          double min_intensity = 1e-3);

// Hue and saturation of the observed chroma after undoing the gamma curve.
AlbedoMap chroma_albedo(const PhotometricRig& rig, const Image& observed);

// Initial depth as selected by config.init.
DepthMap initial_depth(const PhotometricRig& rig, const Image& observed,
                       const DepthMap* init_depth, const RefineConfig& config);

RefineResult refine(const PhotometricRig& rig, const Image& observed,
                    const std::optional<DepthMap>& init_depth,
                    const std::optional<AlbedoMap>& init_albedo, const LossConfig& loss_config,
                    const RefineConfig& refine_config);

// base * exp(sigma * z) with z standard normal, drawn from (seed, member).
DepthMap perturbed_depth(const DepthMap& base, double sigma, std::uint64_t seed,
                         std::uint64_t member);

// K refinements from perturbed copies of the configured initial depth. Member
// k starts from perturbed_depth(initial, perturbation, seed, k).
std::vector<RefineResult> ensemble_refine(const PhotometricRig& rig, const Image& observed,
                                          int members, std::uint64_t seed,
                                          const LossConfig& loss_config,
                                          const RefineConfig& refine_config,
                                          double perturbation = 0.1);

// Members with zero aleatoric variance, ready for fuse_ensemble.
EnsembleOutputs to_ensemble(const std::vector<RefineResult>& results);

}  // namespace ldk
