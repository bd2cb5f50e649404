#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "sceneflow/error.hpp"
#include "sceneflow/metrics.hpp"

using namespace sceneflow;

namespace {

FlowField make_flow(std::initializer_list<double> values) {
  FlowField f;
  const auto n = static_cast<Eigen::Index>(values.size() / 3);
  f.vectors.resize(n, 3);
  auto it = values.begin();
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) f.vectors(i, c) = *it++;
  return f;
}

}  // namespace

TEST_CASE("perfect estimate scores zero error and full accuracy") {
  const FlowField gt = make_flow({1, 0, 0, 0, 2, 0});
  const MetricsRecord r = evaluate(gt, gt);
  CHECK(r.epe_m == 0.0);
  CHECK(r.acc5_pct == 100.0);
  CHECK(r.acc10_pct == 100.0);
  CHECK(r.angle_rad == 0.0);
  CHECK(r.point_count == 2);
}

TEST_CASE("hand-worked errors: orthogonal unit vectors") {
  const FlowField est = make_flow({0, 1, 0});
  const FlowField gt = make_flow({1, 0, 0});
  CHECK(epe(est, gt) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(acc(est, gt, 0.05, 0.05) == 0.0);
  CHECK(angle_error(est, gt) == doctest::Approx(M_PI / 2).epsilon(1e-15));
}

TEST_CASE("epe averages per-point euclidean errors") {
  const FlowField est = make_flow({1, 0, 0, 0, 0, 0});
  const FlowField gt = make_flow({1, 0, 0, 3, 4, 0});
  CHECK(epe(est, gt) == doctest::Approx(2.5).epsilon(1e-15));  // (0 + 5) / 2
}

TEST_CASE("accuracy passes on either the absolute or the relative branch") {
  // error 0.4 m fails the 0.05 m absolute test, but 0.4/10 = 4% < 5%
  const FlowField est = make_flow({10.4, 0, 0});
  const FlowField gt = make_flow({10, 0, 0});
  CHECK(acc(est, gt, 0.05, 0.05) == 100.0);

  // error 0.04 m beats the absolute branch even with tiny ground truth
  const FlowField est2 = make_flow({0.04, 0, 0});
  const FlowField gt2 = make_flow({0, 0, 0});  // relative branch sees /1e-12
  CHECK(acc(est2, gt2, 0.05, 0.05) == 100.0);

  // mixed population: one hit, one miss -> 50%
  const FlowField est3 = make_flow({10.4, 0, 0, 1, 0, 0});
  const FlowField gt3 = make_flow({10, 0, 0, 0, 0, 0});
  CHECK(acc(est3, gt3, 0.05, 0.05) == 50.0);
}

TEST_CASE("accuracy thresholds are strict") {
  // representable-exact boundary: error exactly 0.5, relative exactly 0.25
  const FlowField est = make_flow({2.5, 0, 0});
  const FlowField gt = make_flow({2, 0, 0});
  CHECK(acc(est, gt, 0.5, 0.25) == 0.0);
  CHECK(acc(est, gt, 0.5000001, 0.25) == 100.0);
  CHECK_THROWS_AS(acc(est, gt, -0.1, 0.0), ValidationError);
}

TEST_CASE("angle error excludes zero-norm ground truth and counts it") {
  const FlowField est = make_flow({0, 1, 0, 5, 5, 5, 1, 0, 0});
  const FlowField gt = make_flow({0, 2, 0, 0, 0, 0, 0, 1, 0});
  Eigen::Index excluded = -1;
  const double a = angle_error(est, gt, &excluded);
  CHECK(excluded == 1);
  CHECK(a == doctest::Approx((0.0 + M_PI / 2) / 2).epsilon(1e-12));

  const FlowField one_est = make_flow({0, 1, 0});
  const FlowField zero_gt = make_flow({0, 0, 0});
  CHECK_THROWS_AS(angle_error(one_est, zero_gt), ValidationError);
}

TEST_CASE("zero estimate against nonzero truth is a right angle, not NaN") {
  const FlowField est = make_flow({0, 0, 0});
  const FlowField gt = make_flow({1, 0, 0});
  CHECK(angle_error(est, gt) == doctest::Approx(M_PI / 2).epsilon(1e-9));
}

TEST_CASE("metric input validation") {
  const FlowField a = make_flow({1, 0, 0});
  const FlowField b = make_flow({1, 0, 0, 2, 0, 0});
  CHECK_THROWS_AS(epe(a, b), DimensionError);
  FlowField empty;
  CHECK_THROWS_AS(epe(empty, empty), ValidationError);
}

TEST_CASE("metrics JSON carries every field") {
  const FlowField est = make_flow({1, 0, 0});
  const FlowField gt = make_flow({1.02, 0, 0});
  const auto j = nlohmann::json::parse(metrics_to_json(evaluate(est, gt)));
  CHECK(j.contains("epe_m"));
  CHECK(j.contains("acc5_pct"));
  CHECK(j.contains("acc10_pct"));
  CHECK(j.contains("angle_rad"));
  CHECK(j["point_count"] == 1);
  CHECK(j["acc5_pct"] == 100.0);
}
