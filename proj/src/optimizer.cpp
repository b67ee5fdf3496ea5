#include "ldk/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ldk/geometry.hpp"
#include "ldk/parallel.hpp"
#include "ldk/photometry.hpp"

namespace ldk {
namespace {

// Adam state for one block of parameters.
struct Moments {
  std::vector<double> m;
  std::vector<double> v;
  explicit Moments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

double adam_delta(Moments& state, std::size_t i, double grad, double lr, double bias1,
                  double bias2, const RefineConfig& c) {
  state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad;
  state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad * grad;
  const double m_hat = state.m[i] / bias1;
  const double v_hat = state.v[i] / bias2;
  return -lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
}

// Coarse grid of coefficients; its bilinear upsampling is added to the
// per-pixel depth parameter. Factor 1 is the full-resolution grid.
struct Level {
  int factor = 1;
  int width = 0;
  int height = 0;
  std::vector<double> coeff;
  Moments state;
  double gain = 1.0;

  Level(int f, int image_width, int image_height)
      : factor(f),
        width((image_width - 1) / f + 2),
        height((image_height - 1) / f + 2),
        coeff(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0),
        state(coeff.size()) {}

  // Calls fn(coefficient index, weight) for the taps of pixel (x, y).
  template <typename Fn>
  void taps(int x, int y, Fn&& fn) const {
    if (factor == 1) {
      fn(static_cast<std::size_t>(y) * width + x, 1.0);
      return;
    }
    const int x0 = x / factor, y0 = y / factor;
    const double u = static_cast<double>(x % factor) / factor;
    const double v = static_cast<double>(y % factor) / factor;
    const auto at = [&](int cx, int cy) { return static_cast<std::size_t>(cy) * width + cx; };
    fn(at(x0, y0), (1.0 - u) * (1.0 - v));
    fn(at(x0 + 1, y0), u * (1.0 - v));
    fn(at(x0, y0 + 1), (1.0 - u) * v);
    fn(at(x0 + 1, y0 + 1), u * v);
  }
};

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

RefineResult package(const PhotometricRig& rig, DepthMap depth, AlbedoMap albedo,
                     std::vector<double> trace) {
  NormalMap normals = normals_from_depth(rig.camera, depth);
  Image rendered = render_image(rig, depth, albedo, normals);
  return {std::move(depth), std::move(albedo), std::move(normals), std::move(rendered),
          std::move(trace)};
}

}  // namespace

RefineConfig RefineConfig::from_scratch() {
  RefineConfig c;
  c.steps = 500;
  c.step_size = 0.015;
  c.albedo_step_size = 0.003;
  c.final_step_ratio = 0.02;
  c.levels = 5;
  c.level_step_gain = 1.5;
  return c;
}

void RefineConfig::validate() const {
  if (steps < 1) throw DomainError("refine: steps must be >= 1");
  if (!(step_size > 0.0) || !(albedo_step_size >= 0.0)) {
    throw DomainError("refine: step size must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw DomainError("refine: moment decay must lie in [0, 1)");
  }
  if (levels < 1 || levels > 16) throw DomainError("refine: levels must lie in [1, 16]");
  if (!(epsilon > 0.0)) throw DomainError("refine: epsilon must be > 0");
  if (!(level_step_gain > 0.0) || !std::isfinite(level_step_gain)) {
    throw DomainError("refine: level step gain must be > 0");
  }
  if (!(final_step_ratio > 0.0 && final_step_ratio <= 1.0)) {
    throw DomainError("refine: final step ratio must lie in (0, 1]");
  }
  if (!(flat_depth >= 0.0) || !std::isfinite(flat_depth)) {
    throw DomainError("refine: flat depth must be >= 0");
  }
  if (!(min_intensity >= 0.0 && min_intensity < 1.0)) {
    throw DomainError("refine: min intensity must lie in [0, 1)");
  }
}

std::vector<std::uint8_t> observed_mask(const Image& observed, double min_intensity) {
  std::vector<std::uint8_t> mask(observed.pixel_count(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = observed.rgb(i).maxCoeff() > min_intensity ? 1 : 0;
  }
  return mask;
}

DepthMap brightness_depth(const PhotometricRig& rig, const Image& observed, double min_intensity) {
  rig.validate();
  if (!observed.matches(rig.camera)) throw DomainError("brightness_depth: dimension mismatch");
  const std::vector<Vec3> rays = pixel_rays(rig.camera);
  const std::vector<std::uint8_t> mask = observed_mask(observed, min_intensity);
  DepthMap out(observed.width(), observed.height());
  const Vec3 facing(0.0, 0.0, -1.0);
  const Vec2 white(0.0, 0.0);
  parallel_for(0, rays.size(), [&](std::size_t i) {
    if (!mask[i]) return;
    const double target = std::pow(observed.rgb(i).maxCoeff(), rig.gamma);
    // Shading falls off roughly as 1/d^2; iterate d <- d sqrt(shade(d) / target).
    double d = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double shade = render_ray(rig, rays[i], d, white, facing).linear[0];
      if (!(shade > 0.0)) break;
      const double next = std::clamp(d * std::sqrt(shade / target), 1e-6, 1e6);
      const bool done = std::abs(next - d) <= 1e-14 * d;
      d = next;
      if (done) break;
    }
    out.set(i, d);
  });
  return out;
}

AlbedoMap chroma_albedo(const PhotometricRig& rig, const Image& observed) {
  AlbedoMap out(observed.width(), observed.height());
  for (std::size_t i = 0; i < observed.pixel_count(); ++i) {
    Vec3 lin = observed.rgb(i).cwiseMax(0.0).array().pow(rig.gamma).matrix();
    const double peak = lin.maxCoeff();
    if (!(peak > 0.0)) continue;
    const Vec3 hsv = rgb_to_hsv(lin / peak);
    out.set_hs(i, Vec2(hsv.x(), hsv.y()));
  }
  return out;
}

DepthMap initial_depth(const PhotometricRig& rig, const Image& observed, const DepthMap* init_depth,
                       const RefineConfig& config) {
  const std::vector<std::uint8_t> mask = observed_mask(observed, config.min_intensity);
  DepthMap out(observed.width(), observed.height());
  switch (config.init) {
    case InitMode::provided: {
      if (!init_depth) throw DomainError("refine: provided init requires an initial depth");
      if (!init_depth->same_shape(observed)) throw DomainError("refine: init depth dimension mismatch");
      init_depth->validate();
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] && init_depth->valid(i)) out.set(i, init_depth->at(i));
      }
      return out;
    }
    case InitMode::brightness:
      return brightness_depth(rig, observed, config.min_intensity);
    case InitMode::flat: {
      double level = config.flat_depth;
      if (level <= 0.0) {
        const DepthMap b = brightness_depth(rig, observed, config.min_intensity);
        std::vector<double> values;
        for (std::size_t i = 0; i < b.pixel_count(); ++i) {
          if (b.valid(i)) values.push_back(b.at(i));
        }
        if (values.empty()) throw DomainError("refine: no observed pixel above the intensity floor");
        level = median_of(std::move(values));
      }
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) out.set(i, level);
      }
      return out;
    }
  }
  return out;
}

RefineResult refine(const PhotometricRig& rig, const Image& observed,
                    const std::optional<DepthMap>& init_depth,
                    const std::optional<AlbedoMap>& init_albedo, const LossConfig& loss_config,
                    const RefineConfig& config) {
  rig.validate();
  loss_config.validate();
  config.validate();
  if (!observed.matches(rig.camera)) throw DomainError("refine: image does not match the camera");

  RefineConfig effective = config;
  if (init_depth && config.init != InitMode::provided) effective.init = InitMode::provided;
  DepthMap depth = initial_depth(rig, observed, init_depth ? &*init_depth : nullptr, effective);
  if (depth.valid_count() == 0) throw DomainError("refine: no valid pixels to optimize");

  AlbedoMap albedo = chroma_albedo(rig, observed);
  if (init_albedo) {
    if (!init_albedo->same_shape(observed)) throw DomainError("refine: init albedo dimension mismatch");
    albedo = *init_albedo;
  }

  const std::size_t n = depth.pixel_count();
  const int width = depth.width();
  const bool log_param = config.parameterization == DepthParameterization::log_depth;
  std::vector<double> base(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (depth.valid(i)) base[i] = log_param ? std::log(depth.at(i)) : depth.at(i);
  }
  std::vector<Level> levels;
  for (int l = 0; l < config.levels; ++l) {
    levels.emplace_back(1 << l, width, depth.height());
    levels.back().gain = std::pow(config.level_step_gain, l);
  }

  Moments hue_state(n), sat_state(n);
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(config.steps) + 1);
  const double decay = std::pow(config.final_step_ratio, 1.0 / std::max(1, config.steps - 1));

  DepthMap last_depth = depth;
  AlbedoMap last_albedo = albedo;
  double bias1 = 1.0, bias2 = 1.0, lr_scale = 1.0;
  std::vector<double> grad;

  for (int step = 0; step <= config.steps; ++step) {
    const LossReport report = total_lightdepth_loss(rig, observed, depth, albedo, loss_config);
    if (!std::isfinite(report.total)) {
      throw OptimizationError("refine: loss became non-finite at step " + std::to_string(step),
                              package(rig, last_depth, last_albedo, trace));
    }
    trace.push_back(report.total);
    if (step == config.steps) break;
    last_depth = depth;
    last_albedo = albedo;

    bias1 *= config.beta1;
    bias2 *= config.beta2;
    const double c1 = 1.0 - bias1, c2 = 1.0 - bias2;
    const double lr = config.step_size * lr_scale;
    const double lr_albedo = config.albedo_step_size * lr_scale;
    lr_scale *= decay;

    for (std::size_t l = 0; l < levels.size(); ++l) {
      Level& level = levels[l];
      // Coarse grids start first; the grid at stride 2^l joins after
      // (L - 1 - l) / L of the steps.
      const auto span = static_cast<std::size_t>(levels.size());
      if (static_cast<std::size_t>(step) * span <
          static_cast<std::size_t>(config.steps) * (span - 1 - l)) {
        continue;
      }
      grad.assign(level.coeff.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (!depth.valid(i)) continue;
        const double g = log_param ? report.grad_depth.at(i) * depth.at(i) : report.grad_depth.at(i);
        level.taps(static_cast<int>(i % width), static_cast<int>(i / width),
                   [&](std::size_t k, double w) { grad[k] += w * g; });
      }
      for (std::size_t k = 0; k < grad.size(); ++k) {
        level.coeff[k] += adam_delta(level.state, k, grad[k], lr * level.gain, c1, c2, config);
      }
    }

    bool degenerate = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!depth.valid(i)) continue;
      double q = base[i];
      for (const Level& level : levels) {
        level.taps(static_cast<int>(i % width), static_cast<int>(i / width),
                   [&](std::size_t k, double w) { q += w * level.coeff[k]; });
      }
      const double d = log_param ? std::exp(q) : q;
      if (!(d > 0.0) || !std::isfinite(d)) {
        degenerate = true;
        continue;
      }
      depth.set(i, d);

      const Vec2 hs = albedo.hs(i);
      const double h =
          hs.x() + adam_delta(hue_state, i, report.grad_albedo.at(i, 0), lr_albedo, c1, c2, config);
      const double s =
          hs.y() + adam_delta(sat_state, i, report.grad_albedo.at(i, 1), lr_albedo, c1, c2, config);
      albedo.set_hs(i, Vec2(wrap_hue(h), std::clamp(s, 0.0, 1.0)));
    }
    if (degenerate) {
      throw OptimizationError("refine: depth left the positive range at step " + std::to_string(step),
                              package(rig, last_depth, last_albedo, trace));
    }
  }
  return package(rig, std::move(depth), std::move(albedo), std::move(trace));
}

DepthMap perturbed_depth(const DepthMap& base, double sigma, std::uint64_t seed,
                         std::uint64_t member) {
  if (!(sigma >= 0.0)) throw DomainError("perturbed_depth: sigma must be >= 0");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(member), static_cast<std::uint32_t>(member >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  DepthMap out = base;
  for (std::size_t i = 0; i < base.pixel_count(); ++i) {
    const double z = normal(rng);
    if (base.valid(i)) out.set(i, base.at(i) * std::exp(sigma * z));
  }
  return out;
}

std::vector<RefineResult> ensemble_refine(const PhotometricRig& rig, const Image& observed,
                                          int members, std::uint64_t seed,
                                          const LossConfig& loss_config,
                                          const RefineConfig& refine_config, double perturbation) {
  if (members < 1) throw DomainError("ensemble_refine: at least one member required");
  rig.validate();
  refine_config.validate();
  if (!observed.matches(rig.camera)) throw DomainError("ensemble_refine: dimension mismatch");
  const DepthMap base = initial_depth(rig, observed, nullptr, refine_config);
  RefineConfig member_config = refine_config;
  member_config.init = InitMode::provided;

  std::vector<std::optional<RefineResult>> slots(static_cast<std::size_t>(members));
  parallel_for(0, slots.size(), [&](std::size_t k) {
    const DepthMap init = perturbed_depth(base, perturbation, seed, k);
    slots[k] = refine(rig, observed, init, std::nullopt, loss_config, member_config);
  });
  std::vector<RefineResult> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

EnsembleOutputs to_ensemble(const std::vector<RefineResult>& results) {
  EnsembleOutputs out;
  for (const RefineResult& r : results) {
    out.members.push_back({r.depth, ScalarField(r.depth.width(), r.depth.height())});
  }
  return out;
}

}  // namespace ldk
