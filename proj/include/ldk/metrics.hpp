#pragma once

#include <string>

#include "ldk/imaging.hpp"

namespace ldk {

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double mae = 0.0;
  double medae = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t count = 0;  // jointly valid pixels
  double scale = 1.0;     // applied to pred before scoring
};

// Which depth divides the residual in abs_rel and sq_rel.
enum class RelativeTo { ground_truth, prediction };

struct MetricsOptions {
  bool align = true;
  RelativeTo denominator = RelativeTo::ground_truth;
};

// median(ref) / median(pred) over jointly valid pixels. Even counts use the
// mean of the two middle values.
double median_scale(const DepthMap& pred, const DepthMap& ref);

DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, const MetricsOptions& options = {});

// Mean angle between jointly valid normals, in degrees.
double normal_mae(const NormalMap& pred, const NormalMap& gt);

// Mean absolute difference over every pixel and channel.
double image_mae(const Image& a, const Image& b);

// Flat JSON object and a CSV header/row using the field names above.
std::string metrics_to_json(const DepthMetrics& m);
std::string metrics_csv_header();
std::string metrics_csv_row(const DepthMetrics& m);

}  // namespace ldk
