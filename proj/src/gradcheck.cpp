#include "sceneflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sceneflow/error.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {
namespace {

constexpr double kRelFloor = 1e-5;

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), kRelFloor});
  return std::abs(a - b) / denom;
}

void check_step(double step) {
  if (!(step > 0.0)) throw ValidationError("finite differences: step must be positive");
}

PointMatrix random_points(Rng& rng, Eigen::Index n, double half_width) {
  PointMatrix m(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) m(i, c) = rng.uniform(-half_width, half_width);
  return m;
}

// Fresh parameters at a generic point. Stock zero biases would park every
// fully-dead point exactly on the relu kink of the next layer (its pre-
// activation is the bias alone), where one-sided finite differences disagree
// with the zero subgradient by construction.
NetworkParams random_params(const ArchConfig& arch, Rng& rng) {
  NetworkParams params = init_params(arch, rng.next_u64());
  for (auto& b : params.biases)
    for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = rng.uniform(-0.2, 0.2);
  return params;
}

// Nudge every scalar in `params` through `eval`; central differences.
NetworkParams param_fd(NetworkParams& params, const std::function<double()>& eval, double step) {
  NetworkParams grads = zero_like(params);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto& w = params.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double saved = w(r, c);
        w(r, c) = saved + step;
        const double plus = eval();
        w(r, c) = saved - step;
        const double minus = eval();
        w(r, c) = saved;
        grads.weights[l](r, c) = (plus - minus) / (2.0 * step);
      }
    }
    auto& b = params.biases[l];
    for (Eigen::Index k = 0; k < b.size(); ++k) {
      const double saved = b(k);
      b(k) = saved + step;
      const double plus = eval();
      b(k) = saved - step;
      const double minus = eval();
      b(k) = saved;
      grads.biases[l](k) = (plus - minus) / (2.0 * step);
    }
  }
  return grads;
}

}  // namespace

NetworkParams finite_diff_param_grads(const NetworkParams& params, const PointMatrix& points,
                                      const FlowProbe& probe, double step) {
  check_step(step);
  NetworkParams work = params;
  return param_fd(work, [&]() { return probe(forward(work, points)); }, step);
}

PointMatrix finite_diff_input_grads(const NetworkParams& params, const PointMatrix& points,
                                    const FlowProbe& probe, double step) {
  check_step(step);
  PointMatrix work = points;
  PointMatrix grads = PointMatrix::Zero(points.rows(), 3);
  for (Eigen::Index i = 0; i < work.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double saved = work(i, c);
      work(i, c) = saved + step;
      const double plus = probe(forward(params, work));
      work(i, c) = saved - step;
      const double minus = probe(forward(params, work));
      work(i, c) = saved;
      grads(i, c) = (plus - minus) / (2.0 * step);
    }
  }
  return grads;
}

ObjectiveGrads finite_diff_objective_grads(const PointCloud& s1, const SpatialIndex& s2_index,
                                           const NetworkParams& params_fwd,
                                           const NetworkParams& params_bwd,
                                           const SpatialIndex& s1_index, const LossConfig& cfg,
                                           double step) {
  check_step(step);
  NetworkParams fwd_work = params_fwd;
  NetworkParams bwd_work = params_bwd;
  const auto eval = [&]() {
    return objective_value(s1, s2_index, fwd_work, bwd_work, s1_index, cfg);
  };
  ObjectiveGrads grads;
  grads.fwd = param_fd(fwd_work, eval, step);
  grads.bwd = param_fd(bwd_work, eval, step);
  return grads;
}

double max_relative_error(const NetworkParams& a, const NetworkParams& b) {
  if (a.weights.size() != b.weights.size() || a.biases.size() != b.biases.size())
    throw DimensionError("max_relative_error: layer count mismatch");
  double worst = 0.0;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    if (a.weights[l].rows() != b.weights[l].rows() || a.weights[l].cols() != b.weights[l].cols() ||
        a.biases[l].size() != b.biases[l].size())
      throw DimensionError("max_relative_error: shape mismatch at layer " + std::to_string(l));
    for (Eigen::Index r = 0; r < a.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < a.weights[l].cols(); ++c)
        worst = std::max(worst, rel_err(a.weights[l](r, c), b.weights[l](r, c)));
    for (Eigen::Index k = 0; k < a.biases[l].size(); ++k)
      worst = std::max(worst, rel_err(a.biases[l](k), b.biases[l](k)));
  }
  return worst;
}

double max_relative_error(const PointMatrix& a, const PointMatrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("max_relative_error: row count mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (int c = 0; c < 3; ++c) worst = std::max(worst, rel_err(a(i, c), b(i, c)));
  return worst;
}

GradCheckReport check_network_gradients(const ArchConfig& arch, int batch, int trials,
                                        double step, std::uint64_t seed) {
  check_step(step);
  if (batch < 1) throw ValidationError("gradcheck: batch must be >= 1");
  if (trials < 1) throw ValidationError("gradcheck: trials must be >= 1");

  GradCheckReport report;
  report.trials = trials;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const NetworkParams params = random_params(arch, rng);
    const PointMatrix points = random_points(rng, batch, 1.0);

    // probe 1: random linear functional; probe 2: sum of squares, so the
    // upstream gradient varies with the output
    PointMatrix coeffs = random_points(rng, batch, 1.0);
    const FlowProbe probes[2] = {
        [&](const PointMatrix& f) { return (coeffs.array() * f.array()).sum(); },
        [](const PointMatrix& f) { return f.array().square().sum(); },
    };
    for (const auto& probe : probes) {
      ForwardTrace trace;
      const PointMatrix flows = forward(params, points, &trace);
      const PointMatrix upstream =
          (&probe == &probes[0]) ? coeffs : PointMatrix(2.0 * flows);
      const NetGradients analytic = backward(trace, params, upstream);

      const NetworkParams fd_params = finite_diff_param_grads(params, points, probe, step);
      const PointMatrix fd_inputs = finite_diff_input_grads(params, points, probe, step);
      report.max_rel_error =
          std::max({report.max_rel_error, max_relative_error(analytic.params, fd_params),
                    max_relative_error(analytic.points, fd_inputs)});
    }
  }
  return report;
}

GradCheckReport check_objective_gradients(const ArchConfig& arch, int points_per_cloud,
                                          int trials, double step, std::uint64_t seed) {
  check_step(step);
  if (points_per_cloud < 1) throw ValidationError("gradcheck: points_per_cloud must be >= 1");
  if (trials < 1) throw ValidationError("gradcheck: trials must be >= 1");

  GradCheckReport report;
  report.trials = trials;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(t)));

    // Half-width 0.5 keeps every pairwise distance far below the 2 m
    // truncation, so the loss stays smooth under the probe steps.
    PointCloud s1;
    s1.points = random_points(rng, points_per_cloud, 0.5);
    PointCloud s2;
    s2.points = random_points(rng, points_per_cloud, 0.5);

    const NetworkParams params_fwd = random_params(arch, rng);
    const NetworkParams params_bwd = random_params(arch, rng);
    const SpatialIndex s2_index = SpatialIndex::build(s2);
    const SpatialIndex s1_index = SpatialIndex::build(s1);

    const LossConfig cfg{};  // full joint objective: both directions, cycle term on
    const ObjectiveResult analytic =
        objective(s1, s2_index, params_fwd, params_bwd, s1_index, cfg);
    const ObjectiveGrads fd =
        finite_diff_objective_grads(s1, s2_index, params_fwd, params_bwd, s1_index, cfg, step);
    report.max_rel_error =
        std::max({report.max_rel_error, max_relative_error(analytic.grad_fwd, fd.fwd),
                  max_relative_error(analytic.grad_bwd, fd.bwd)});
  }
  return report;
}

}  // namespace sceneflow
