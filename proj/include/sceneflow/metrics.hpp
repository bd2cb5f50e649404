#pragma once

#include <string>

#include "sceneflow/types.hpp"

namespace sceneflow {

struct MetricsRecord {
  double epe_m = 0.0;       // mean endpoint error, meters
  double acc5_pct = 0.0;    // % with error < 0.05 m or < 5% relative
  double acc10_pct = 0.0;   // % with error < 0.10 m or < 10% relative
  double angle_rad = 0.0;   // mean angular error over usable points
  Eigen::Index point_count = 0;
};

// Mean Euclidean distance between estimated and true vectors.
double epe(const FlowField& est, const FlowField& gt);

// Percentage of points whose endpoint error beats either threshold (strict <).
// Relative error divides by max(|gt[i]|, 1e-12).
double acc(const FlowField& est, const FlowField& gt, double abs_thresh, double rel_thresh);

// Mean angle between estimated and true vectors, radians. Points whose true
// vector has zero norm are excluded; their count is reported via `excluded`.
// All-zero ground truth is a validation error.
double angle_error(const FlowField& est, const FlowField& gt, Eigen::Index* excluded = nullptr);

MetricsRecord evaluate(const FlowField& est, const FlowField& gt);

std::string metrics_to_json(const MetricsRecord& record);

}  // namespace sceneflow
