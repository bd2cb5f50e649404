#include <doctest.h>

#include <cmath>
#include <limits>

#include <json.hpp>

#include "sceneflow/error.hpp"
#include "sceneflow/optim.hpp"
#include "sceneflow/rng.hpp"

using namespace sceneflow;

namespace {

PointCloud random_cloud(Rng& rng, Eigen::Index n, double half) {
  PointCloud c;
  c.points.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c2 = 0; c2 < 3; ++c2) c.points(i, c2) = rng.uniform(-half, half);
  return c;
}

ArchConfig tiny_arch() {
  ArchConfig arch;
  arch.hidden_layers = 1;
  arch.hidden_units = 4;
  return arch;
}

}  // namespace

TEST_CASE("adam matches a scalar reference over several steps") {
  const ArchConfig arch = tiny_arch();
  NetworkParams params = init_params(arch, 42);
  const NetworkParams start = params;
  AdamState state = AdamState::like(params);

  // deterministic synthetic gradients: g = 0.3 * theta_start + layer offset
  auto grad_at = [&](int step) {
    NetworkParams g = start;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      g.weights[l] =
          (0.3 * start.weights[l].array() + 0.1 * static_cast<double>(l + step)).matrix();
      if (g.biases[l].size() > 0)
        g.biases[l] =
            (0.3 * start.biases[l].array() + 0.1 * static_cast<double>(l + step)).matrix();
    }
    return g;
  };

  const double lr = 8e-3;
  for (int step = 1; step <= 3; ++step) adam_step(state, params, grad_at(step), lr);

  // scalar re-derivation of the same recurrence, element by element
  auto scalar_ref = [&](double theta0, double g1, double g2, double g3) {
    double m = 0, v = 0, theta = theta0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double gs[3] = {g1, g2, g3};
    for (int t = 1; t <= 3; ++t) {
      const double g = gs[t - 1];
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double m_hat = m / (1 - std::pow(b1, t));
      const double v_hat = v / (1 - std::pow(b2, t));
      theta -= lr * m_hat / (std::sqrt(v_hat) + eps);  // epsilon outside the root
    }
    return theta;
  };

  double worst = 0.0;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < params.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < params.weights[l].cols(); ++c) {
        const double t0 = start.weights[l](r, c);
        const double expect =
            scalar_ref(t0, 0.3 * t0 + 0.1 * (l + 1), 0.3 * t0 + 0.1 * (l + 2),
                       0.3 * t0 + 0.1 * (l + 3));
        worst = std::max(worst, std::abs(params.weights[l](r, c) - expect));
      }
    }
  }
  CHECK(worst <= 1e-15);
  CHECK(state.step == 3);
}

TEST_CASE("adam single step has the bias-corrected closed form") {
  // with m=v=0, one step moves by exactly lr * g / (|g| + eps)
  const ArchConfig arch = tiny_arch();
  NetworkParams params = init_params(arch, 1);
  const double theta0 = params.weights[0](0, 0);
  NetworkParams grads = zero_like(params);
  grads.weights[0](0, 0) = 2.0;

  AdamState state = AdamState::like(params);
  adam_step(state, params, grads, 1e-2);
  const double expect = theta0 - 1e-2 * 2.0 / (2.0 + 1e-8);
  CHECK(params.weights[0](0, 0) == doctest::Approx(expect).epsilon(1e-15));
  // untouched entries must stay exactly put (zero gradient, zero moments)
  CHECK(params.weights[1](0, 0) == init_params(arch, 1).weights[1](0, 0));
}

TEST_CASE("adam is deterministic and validates inputs") {
  const ArchConfig arch = tiny_arch();
  NetworkParams pa = init_params(arch, 9);
  NetworkParams pb = pa;
  AdamState sa = AdamState::like(pa);
  AdamState sb = AdamState::like(pb);
  NetworkParams g = init_params(arch, 10);

  adam_step(sa, pa, g, 1e-3);
  adam_step(sb, pb, g, 1e-3);
  bool same = true;
  for (std::size_t l = 0; l < pa.weights.size(); ++l)
    same = same && (pa.weights[l].array() == pb.weights[l].array()).all();
  CHECK(same);

  CHECK_THROWS_AS(adam_step(sa, pa, g, 0.0), ValidationError);
  g.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(sa, pa, g, 1e-3), NumericError);
}

TEST_CASE("solve with max_iters=1 returns the initial network's flow") {
  Rng rng(55);
  const PointCloud s1 = random_cloud(rng, 20, 1.0);
  const PointCloud s2 = random_cloud(rng, 20, 1.0);

  SolverConfig cfg;
  cfg.arch = tiny_arch();
  cfg.max_iters = 1;
  cfg.seed = 123;

  const SolveResult res = solve_flow(s1, s2, cfg);
  CHECK(res.stats.iterations_run == 1);
  CHECK(res.stats.best_iteration == 1);
  REQUIRE(res.stats.loss_history.size() == 1);
  CHECK(res.stats.loss_history[0] == res.stats.best_loss);
  CHECK(res.stats.wall_time_seconds > 0.0);

  // the returned flow belongs to the evaluated (initial) parameters, and
  // those parameters derive from stream 0 of the solver seed
  const NetworkParams init = init_params(cfg.arch, derive_seed(cfg.seed, 0));
  CHECK((res.flow.vectors.array() == forward(init, s1.points).array()).all());
  bool same_params = true;
  for (std::size_t l = 0; l < init.weights.size(); ++l)
    same_params =
        same_params && (res.params_fwd.weights[l].array() == init.weights[l].array()).all();
  CHECK(same_params);
}

TEST_CASE("solve improves the objective on an easy pair and stops early") {
  Rng rng(77);
  const PointCloud s1 = random_cloud(rng, 200, 1.0);
  PointCloud s2 = s1;  // coincident: the optimum is zero flow

  SolverConfig cfg;
  cfg.arch.hidden_layers = 4;
  cfg.arch.hidden_units = 32;
  cfg.learning_rate = 0.02;  // shallow nets like a hotter step
  cfg.max_iters = 4000;
  cfg.patience = 50;
  cfg.seed = 3;

  const SolveResult res = solve_flow(s1, s2, cfg);
  CHECK(res.stats.best_loss < 0.1 * res.stats.loss_history.front());
  CHECK(res.stats.iterations_run < cfg.max_iters);  // patience must fire on a solved pair
  CHECK(res.flow.vectors.rowwise().norm().mean() < 0.05);
  CHECK(res.stats.best_iteration <= res.stats.iterations_run);
  // best_loss is genuinely the minimum of the history
  double min_hist = std::numeric_limits<double>::infinity();
  for (double v : res.stats.loss_history) min_hist = std::min(min_hist, v);
  CHECK(res.stats.best_loss == min_hist);
}

TEST_CASE("solve is deterministic in its seed") {
  Rng rng(12);
  const PointCloud s1 = random_cloud(rng, 15, 1.0);
  const PointCloud s2 = random_cloud(rng, 17, 1.0);

  SolverConfig cfg;
  cfg.arch = tiny_arch();
  cfg.max_iters = 40;
  cfg.seed = 777;

  const SolveResult a = solve_flow(s1, s2, cfg);
  const SolveResult b = solve_flow(s1, s2, cfg);
  CHECK((a.flow.vectors.array() == b.flow.vectors.array()).all());
  CHECK(a.stats.loss_history == b.stats.loss_history);

  cfg.seed = 778;
  const SolveResult c = solve_flow(s1, s2, cfg);
  CHECK_FALSE((a.flow.vectors.array() == c.flow.vectors.array()).all());
}

TEST_CASE("solve validates configuration and clouds") {
  Rng rng(1);
  const PointCloud s1 = random_cloud(rng, 5, 1.0);
  SolverConfig cfg;
  cfg.arch = tiny_arch();

  PointCloud empty;
  empty.points.resize(0, 3);
  CHECK_THROWS_AS(solve_flow(s1, empty, cfg), ValidationError);
  cfg.max_iters = 0;
  CHECK_THROWS_AS(solve_flow(s1, s1, cfg), ValidationError);
  cfg.max_iters = 10;
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(solve_flow(s1, s1, cfg), ValidationError);
}

TEST_CASE("solve_batch isolates failures and matches per-pair seeds") {
  Rng rng(21);
  std::vector<std::pair<PointCloud, PointCloud>> pairs;
  pairs.emplace_back(random_cloud(rng, 12, 1.0), random_cloud(rng, 12, 1.0));
  PointCloud empty;
  empty.points.resize(0, 3);
  pairs.emplace_back(random_cloud(rng, 12, 1.0), empty);  // this pair must fail
  pairs.emplace_back(random_cloud(rng, 10, 1.0), random_cloud(rng, 14, 1.0));

  SolverConfig cfg;
  cfg.arch = tiny_arch();
  cfg.max_iters = 25;
  cfg.seed = 1000;

  const auto serial = solve_batch(pairs, cfg, 1);
  REQUIRE(serial.size() == 3);
  CHECK(serial[0].result.has_value());
  CHECK_FALSE(serial[1].result.has_value());
  CHECK_FALSE(serial[1].error.empty());
  CHECK(serial[2].result.has_value());

  // rerunning with more workers changes nothing
  const auto parallel = solve_batch(pairs, cfg, 3);
  CHECK((serial[0].result->flow.vectors.array() == parallel[0].result->flow.vectors.array())
            .all());
  CHECK((serial[2].result->flow.vectors.array() == parallel[2].result->flow.vectors.array())
            .all());

  // pair i runs under seed ^ i
  SolverConfig cfg2 = cfg;
  cfg2.seed = cfg.seed ^ 2ULL;
  const SolveResult direct = solve_flow(pairs[2].first, pairs[2].second, cfg2);
  CHECK((serial[2].result->flow.vectors.array() == direct.flow.vectors.array()).all());

  CHECK_THROWS_AS(solve_batch(pairs, cfg, 0), ValidationError);
}

TEST_CASE("stats serialize to parseable JSON") {
  SolveStats stats;
  stats.iterations_run = 3;
  stats.best_iteration = 2;
  stats.best_loss = 0.125;
  stats.loss_history = {1.0, 0.125, 0.5};
  stats.wall_time_seconds = 0.75;

  const auto j = nlohmann::json::parse(stats_to_json(stats));
  CHECK(j["iterations_run"] == 3);
  CHECK(j["best_iteration"] == 2);
  CHECK(j["best_loss"] == 0.125);
  CHECK(j["wall_time_seconds"] == 0.75);
  CHECK(j["loss_history"].size() == 3);
}
