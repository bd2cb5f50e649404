#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>

namespace sceneflow {

using Vec3 = Eigen::RowVector3d;
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Unordered set of 3D positions in meters, one row per point.
struct PointCloud {
  PointMatrix points;
  std::optional<std::uint32_t> frame_id;

  Eigen::Index size() const { return points.rows(); }
};

// Per-point displacement vectors aligned with a source cloud: row i is the
// motion of source point i, so the source count is vectors.rows().
struct FlowField {
  PointMatrix vectors;

  Eigen::Index size() const { return vectors.rows(); }
};

bool all_finite(const PointMatrix& m);

// Throws ValidationError unless the cloud is non-empty and finite.
void validate_cloud(const PointCloud& cloud, const char* what);

// out[i] = cloud[i] + flow[i]; counts must agree.
PointCloud apply_flow(const PointCloud& cloud, const FlowField& flow);

}  // namespace sceneflow
