#include "sceneflow/loss.hpp"

#include <cmath>

#include "sceneflow/error.hpp"

namespace sceneflow {
namespace {

void validate_loss_cfg(const LossConfig& cfg) {
  if (!(cfg.truncation_dist > 0.0))
    throw ValidationError("loss: truncation_dist must be positive");
}

}  // namespace

ChamferResult chamfer(const PointMatrix& moving, const SpatialIndex& target,
                      const LossConfig& cfg) {
  validate_loss_cfg(cfg);
  if (moving.rows() == 0) throw ValidationError("chamfer: moving set is empty");
  if (!moving.allFinite()) throw ValidationError("chamfer: non-finite moving points");

  const double trunc_sq = cfg.truncation_dist * cfg.truncation_dist;
  const PointMatrix& tpts = target.points();

  ChamferResult result;
  result.grad.setZero(moving.rows(), 3);

  for (Eigen::Index i = 0; i < moving.rows(); ++i) {
    const NearestResult nr = target.nearest(moving.row(i));
    if (nr.sq_dist <= trunc_sq) {  // strictly beyond the cutoff contributes nothing
      result.loss += nr.sq_dist;
      result.grad.row(i) += 2.0 * (moving.row(i) - tpts.row(nr.index));
    }
  }

  if (cfg.bidirectional) {
    const SpatialIndex moving_index = SpatialIndex::build(moving);
    for (Eigen::Index j = 0; j < tpts.rows(); ++j) {
      const NearestResult nr = moving_index.nearest(tpts.row(j));
      if (nr.sq_dist <= trunc_sq) {
        result.loss += nr.sq_dist;
        result.grad.row(nr.index) += 2.0 * (moving.row(nr.index) - tpts.row(j));
      }
    }
  }
  return result;
}

ObjectiveResult objective(const PointCloud& s1, const SpatialIndex& s2_index,
                          const NetworkParams& params_fwd, const NetworkParams& params_bwd,
                          const SpatialIndex& s1_index, const LossConfig& cfg) {
  validate_cloud(s1, "objective");
  validate_loss_cfg(cfg);
  if (cfg.use_backward_flow && s1_index.target_count() != s1.size())
    throw DimensionError("objective: s1_index does not index the source cloud");

  ObjectiveResult out;
  ForwardTrace trace_fwd;
  const PointMatrix flows = forward(params_fwd, s1.points, &trace_fwd);
  const PointMatrix moved = s1.points + flows;

  const ChamferResult fwd_term = chamfer(moved, s2_index, cfg);
  out.loss = fwd_term.loss;

  // d(loss)/d(moved); starts with the forward Chamfer and may pick up the
  // cycle term below
  PointMatrix grad_moved = fwd_term.grad;

  if (cfg.use_backward_flow) {
    ForwardTrace trace_bwd;
    const PointMatrix flows_back = forward(params_bwd, moved, &trace_bwd);
    const PointMatrix returned = moved + flows_back;
    const ChamferResult cycle_term = chamfer(returned, s1_index, cfg);
    out.loss += cycle_term.loss;

    const NetGradients bwd = backward(trace_bwd, params_bwd, cycle_term.grad);
    out.grad_bwd = bwd.params;
    if (!cfg.detach_forward_in_backward_term) {
      // returned = moved + g_bwd(moved): identity path plus the network path
      grad_moved += cycle_term.grad + bwd.points;
    }
  } else {
    out.grad_bwd = zero_like(params_bwd);
  }

  // moved = s1 + g_fwd(s1): s1 is constant, so grad_moved flows straight into
  // the forward network
  const NetGradients fwd = backward(trace_fwd, params_fwd, grad_moved);
  out.grad_fwd = fwd.params;
  out.flow.vectors = flows;
  return out;
}

double objective_value(const PointCloud& s1, const SpatialIndex& s2_index,
                       const NetworkParams& params_fwd, const NetworkParams& params_bwd,
                       const SpatialIndex& s1_index, const LossConfig& cfg) {
  validate_cloud(s1, "objective");
  validate_loss_cfg(cfg);
  const PointMatrix moved = s1.points + forward(params_fwd, s1.points);
  double loss = chamfer(moved, s2_index, cfg).loss;
  if (cfg.use_backward_flow) {
    const PointMatrix returned = moved + forward(params_bwd, moved);
    loss += chamfer(returned, s1_index, cfg).loss;
  }
  return loss;
}

}  // namespace sceneflow
