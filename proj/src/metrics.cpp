#include "sceneflow/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "sceneflow/error.hpp"

namespace sceneflow {
namespace {

void validate_pair(const FlowField& est, const FlowField& gt, const char* what) {
  if (est.size() == 0) throw ValidationError(std::string(what) + ": empty flow");
  if (est.size() != gt.size())
    throw DimensionError(std::string(what) + ": estimate has " + std::to_string(est.size()) +
                         " vectors but ground truth has " + std::to_string(gt.size()));
  if (!all_finite(est.vectors) || !all_finite(gt.vectors))
    throw ValidationError(std::string(what) + ": non-finite vectors");
}

}  // namespace

double epe(const FlowField& est, const FlowField& gt) {
  validate_pair(est, gt, "epe");
  return (est.vectors - gt.vectors).rowwise().norm().mean();
}

double acc(const FlowField& est, const FlowField& gt, double abs_thresh, double rel_thresh) {
  validate_pair(est, gt, "acc");
  if (abs_thresh < 0.0 || rel_thresh < 0.0)
    throw ValidationError("acc: thresholds must be non-negative");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < est.size(); ++i) {
    const double err = (est.vectors.row(i) - gt.vectors.row(i)).norm();
    const double gt_norm = gt.vectors.row(i).norm();
    const double rel = err / std::max(gt_norm, 1e-12);
    if (err < abs_thresh || rel < rel_thresh) ++hits;  // strict on both
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(est.size());
}

double angle_error(const FlowField& est, const FlowField& gt, Eigen::Index* excluded) {
  validate_pair(est, gt, "angle_error");
  double sum = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < est.size(); ++i) {
    const double gn = gt.vectors.row(i).norm();
    if (gn == 0.0) continue;  // direction undefined; skip and count
    const double en = est.vectors.row(i).norm();
    const double cosine =
        est.vectors.row(i).dot(gt.vectors.row(i)) / (std::max(en, 1e-12) * gn);
    sum += std::acos(std::clamp(cosine, -1.0, 1.0));
    ++used;
  }
  if (excluded) *excluded = est.size() - used;
  if (used == 0)
    throw ValidationError("angle_error: every ground-truth vector has zero norm");
  return sum / static_cast<double>(used);
}

MetricsRecord evaluate(const FlowField& est, const FlowField& gt) {
  MetricsRecord r;
  r.epe_m = epe(est, gt);
  r.acc5_pct = acc(est, gt, 0.05, 0.05);
  r.acc10_pct = acc(est, gt, 0.10, 0.10);
  r.angle_rad = angle_error(est, gt);
  r.point_count = est.size();
  return r;
}

std::string metrics_to_json(const MetricsRecord& record) {
  nlohmann::json j;
  j["epe_m"] = record.epe_m;
  j["acc5_pct"] = record.acc5_pct;
  j["acc10_pct"] = record.acc10_pct;
  j["angle_rad"] = record.angle_rad;
  j["point_count"] = record.point_count;
  return j.dump(2);
}

}  // namespace sceneflow
