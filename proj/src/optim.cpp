#include "sceneflow/optim.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include <json.hpp>

#include "sceneflow/error.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {

AdamState AdamState::like(const NetworkParams& params) {
  AdamState s;
  s.m_w.reserve(params.weights.size());
  s.v_w.reserve(params.weights.size());
  for (const auto& w : params.weights) {
    s.m_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    s.v_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  }
  s.m_b.reserve(params.biases.size());
  s.v_b.reserve(params.biases.size());
  for (const auto& b : params.biases) {
    s.m_b.push_back(Eigen::VectorXd::Zero(b.size()));
    s.v_b.push_back(Eigen::VectorXd::Zero(b.size()));
  }
  return s;
}

void adam_step(AdamState& state, NetworkParams& params, const NetworkParams& grads, double lr) {
  if (!(lr > 0.0)) throw ValidationError("adam_step: learning rate must be positive");
  if (state.m_w.size() != params.weights.size() || grads.weights.size() != params.weights.size())
    throw DimensionError("adam_step: state/gradient layer count mismatch");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
    if (theta.size() == 0) return;
    if (g.rows() != theta.rows() || g.cols() != theta.cols())
      throw DimensionError("adam_step: gradient shape mismatch");
    if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient");
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * g.array().square();
    theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    update(params.weights[l], state.m_w[l], state.v_w[l], grads.weights[l]);
  for (std::size_t l = 0; l < params.biases.size(); ++l)
    update(params.biases[l], state.m_b[l], state.v_b[l], grads.biases[l]);
}

namespace {

void validate_solver_cfg(const SolverConfig& cfg) {
  if (!(cfg.learning_rate > 0.0))
    throw ValidationError("solve: learning_rate must be positive");
  if (cfg.max_iters < 1) throw ValidationError("solve: max_iters must be >= 1");
  if (cfg.patience < 1) throw ValidationError("solve: patience must be >= 1");
  if (cfg.min_relative_improvement < 0.0)
    throw ValidationError("solve: min_relative_improvement must be non-negative");
}

}  // namespace

SolveResult solve_flow(const PointCloud& s1, const PointCloud& s2, const SolverConfig& cfg) {
  validate_solver_cfg(cfg);
  validate_cloud(s1, "solve: source");
  validate_cloud(s2, "solve: target");

  const auto t0 = std::chrono::steady_clock::now();

  NetworkParams params_fwd = init_params(cfg.arch, derive_seed(cfg.seed, 0));
  NetworkParams params_bwd = init_params(cfg.arch, derive_seed(cfg.seed, 1));
  const SpatialIndex s2_index = SpatialIndex::build(s2);
  const SpatialIndex s1_index = SpatialIndex::build(s1);
  AdamState adam_fwd = AdamState::like(params_fwd);
  AdamState adam_bwd = AdamState::like(params_bwd);

  SolveResult out;
  SolveStats& stats = out.stats;
  stats.loss_history.reserve(static_cast<std::size_t>(cfg.max_iters));
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    ObjectiveResult step;
    try {
      step = objective(s1, s2_index, params_fwd, params_bwd, s1_index, cfg.loss);
    } catch (const NumericError& e) {
      throw NumericError("solve: iteration " + std::to_string(it) + ": " + e.what());
    }
    if (!std::isfinite(step.loss))
      throw NumericError("solve: loss diverged at iteration " + std::to_string(it));

    stats.loss_history.push_back(step.loss);
    stats.iterations_run = it;

    // significant improvement resets the patience clock; the margin is
    // relative to the best loss seen so far
    if (step.loss < best * (1.0 - cfg.min_relative_improvement)) {
      stall = 0;
    } else {
      ++stall;
    }
    if (step.loss < best) {  // strict: ties keep the earlier iteration
      best = step.loss;
      stats.best_iteration = it;
      out.flow = std::move(step.flow);
      out.params_fwd = params_fwd;
      out.params_bwd = params_bwd;
    }
    if (cfg.verbose)
      std::fprintf(stderr, "iter=%d loss=%.17g best=%.17g\n", it, step.loss, best);
    if (stall >= cfg.patience) break;
    if (it == cfg.max_iters) break;  // skip the update nobody will evaluate

    try {
      adam_step(adam_fwd, params_fwd, step.grad_fwd, cfg.learning_rate);
      if (cfg.loss.use_backward_flow)
        adam_step(adam_bwd, params_bwd, step.grad_bwd, cfg.learning_rate);
    } catch (const NumericError& e) {
      throw NumericError("solve: iteration " + std::to_string(it) + ": " + e.what());
    }
  }

  stats.best_loss = best;
  stats.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<BatchEntry> solve_batch(const std::vector<std::pair<PointCloud, PointCloud>>& pairs,
                                    const SolverConfig& cfg, int parallelism) {
  if (parallelism < 1) throw ValidationError("solve_batch: parallelism must be >= 1");
  std::vector<BatchEntry> results(pairs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pairs.size()) return;
      SolverConfig pair_cfg = cfg;
      pair_cfg.seed = cfg.seed ^ static_cast<std::uint64_t>(i);
      try {
        results[i].result = solve_flow(pairs[i].first, pairs[i].second, pair_cfg);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };

  const int n_threads = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(parallelism), pairs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return results;
}

std::string stats_to_json(const SolveStats& stats) {
  nlohmann::json j;
  j["iterations_run"] = stats.iterations_run;
  j["best_iteration"] = stats.best_iteration;
  j["best_loss"] = stats.best_loss;
  j["wall_time_seconds"] = stats.wall_time_seconds;
  j["loss_history"] = stats.loss_history;
  return j.dump(2);
}

}  // namespace sceneflow
