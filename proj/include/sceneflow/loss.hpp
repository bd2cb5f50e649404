#pragma once

#include "sceneflow/kdtree.hpp"
#include "sceneflow/net.hpp"
#include "sceneflow/types.hpp"

namespace sceneflow {

struct LossConfig {
  double truncation_dist = 2.0;  // meters; matches beyond this contribute nothing
  bool bidirectional = true;
  bool use_backward_flow = true;              // add the cycle-consistency term
  bool detach_forward_in_backward_term = false;  // ablation: cut the chain rule
                                                 // from the backward term into
                                                 // the forward network
};

struct ChamferResult {
  double loss = 0.0;
  PointMatrix grad;  // d loss / d moving-point coordinates
};

// Truncated squared-distance Chamfer between a variable "moving" set and a
// fixed indexed target; summed (not averaged) over both directions when
// bidirectional. Gradients treat the nearest-neighbour assignment as constant.
ChamferResult chamfer(const PointMatrix& moving, const SpatialIndex& target,
                      const LossConfig& cfg);
inline ChamferResult chamfer(const PointCloud& moving, const SpatialIndex& target,
                             const LossConfig& cfg) {
  return chamfer(moving.points, target, cfg);
}

struct ObjectiveResult {
  double loss = 0.0;
  NetworkParams grad_fwd;
  NetworkParams grad_bwd;
  FlowField flow;  // forward flow evaluated at the current parameters
};

// Full training objective for one point-cloud pair:
//   chamfer(S1 + g_fwd(S1), S2)
//   [+ chamfer(S1' + g_bwd(S1'), S1) with S1' = S1 + g_fwd(S1), when enabled]
// with gradients for both networks. s1_index is only consulted when the
// backward term is on.
ObjectiveResult objective(const PointCloud& s1, const SpatialIndex& s2_index,
                          const NetworkParams& params_fwd, const NetworkParams& params_bwd,
                          const SpatialIndex& s1_index, const LossConfig& cfg);

// Loss value only; the finite-difference oracle perturbs parameters and calls
// this, staying independent of backward().
double objective_value(const PointCloud& s1, const SpatialIndex& s2_index,
                       const NetworkParams& params_fwd, const NetworkParams& params_bwd,
                       const SpatialIndex& s1_index, const LossConfig& cfg);

}  // namespace sceneflow
