#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sceneflow/loss.hpp"
#include "sceneflow/net.hpp"

namespace sceneflow {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;  // completed updates
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;

  static AdamState like(const NetworkParams& params);
};

// One bias-corrected Adam update, in place:
//   theta -= lr * m_hat / (sqrt(v_hat) + epsilon)
void adam_step(AdamState& state, NetworkParams& params, const NetworkParams& grads,
               double lr);

struct SolverConfig {
  ArchConfig arch;
  double learning_rate = 8e-3;
  int max_iters = 5000;
  int patience = 100;                      // iterations without significant improvement
  double min_relative_improvement = 1e-6;  // "significant" threshold, relative to best
  LossConfig loss;
  std::uint64_t seed = 0;
  bool verbose = false;  // per-iteration log lines on stderr
};

struct SolveStats {
  int iterations_run = 0;
  int best_iteration = 0;  // 1-based iteration that attained best_loss
  double best_loss = 0.0;
  std::vector<double> loss_history;  // one entry per iteration run
  double wall_time_seconds = 0.0;
};

struct SolveResult {
  FlowField flow;            // forward flow at the best-loss iteration
  NetworkParams params_fwd;  // parameters at the best-loss iteration
  NetworkParams params_bwd;
  SolveStats stats;
};

// Fit a fresh pair of networks to one cloud pair. Deterministic in
// (s1, s2, cfg). Throws NumericError naming the iteration if the loss stops
// being finite.
SolveResult solve_flow(const PointCloud& s1, const PointCloud& s2, const SolverConfig& cfg);

struct BatchEntry {
  std::optional<SolveResult> result;  // empty when the pair failed
  std::string error;                  // failure message, empty on success
};

// Independent solves over many pairs; pair i uses seed cfg.seed ^ i. Results
// are identical for any parallelism level, and one failing pair does not take
// down the rest.
std::vector<BatchEntry> solve_batch(const std::vector<std::pair<PointCloud, PointCloud>>& pairs,
                                    const SolverConfig& cfg, int parallelism);

std::string stats_to_json(const SolveStats& stats);

}  // namespace sceneflow
