#pragma once

#include <cstdint>
#include <functional>

#include "sceneflow/loss.hpp"
#include "sceneflow/net.hpp"

namespace sceneflow {

// Scalar function of the network output, e.g. a random linear functional.
using FlowProbe = std::function<double(const PointMatrix& flows)>;

// Central differences over every weight and bias: (probe(g(x; p + h)) -
// probe(g(x; p - h))) / 2h. Only forward() is exercised, so these are
// independent oracles for backward(). step must be positive.
NetworkParams finite_diff_param_grads(const NetworkParams& params, const PointMatrix& points,
                                      const FlowProbe& probe, double step);
PointMatrix finite_diff_input_grads(const NetworkParams& params, const PointMatrix& points,
                                    const FlowProbe& probe, double step);

// Central differences of objective_value over every parameter of both
// networks; independent oracle for objective()'s analytic gradients.
struct ObjectiveGrads {
  NetworkParams fwd;
  NetworkParams bwd;
};
ObjectiveGrads finite_diff_objective_grads(const PointCloud& s1, const SpatialIndex& s2_index,
                                           const NetworkParams& params_fwd,
                                           const NetworkParams& params_bwd,
                                           const SpatialIndex& s1_index, const LossConfig& cfg,
                                           double step);

// Largest elementwise relative error, |a-b| / max(|a|, |b|, 1e-5). The floor
// keeps near-zero gradients from amplifying finite-difference noise.
double max_relative_error(const NetworkParams& a, const NetworkParams& b);
double max_relative_error(const PointMatrix& a, const PointMatrix& b);

struct GradCheckReport {
  double max_rel_error = 0.0;
  int trials = 0;
};

// Random probes through forward()/backward() alone on `trials` random
// parameter draws.
GradCheckReport check_network_gradients(const ArchConfig& arch, int batch, int trials,
                                        double step, std::uint64_t seed);

// Full joint objective (both networks, both Chamfer directions, cycle term
// on) against central differences over every parameter, on small random
// cloud pairs.
GradCheckReport check_objective_gradients(const ArchConfig& arch, int points_per_cloud,
                                          int trials, double step, std::uint64_t seed);

}  // namespace sceneflow
