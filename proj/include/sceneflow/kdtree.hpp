#pragma once

#include <cstdint>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow {

struct NearestResult {
  std::int64_t index = -1;  // row in the target cloud
  double sq_dist = 0.0;     // squared Euclidean distance
};

// Exact nearest neighbour over a fixed target cloud. Distance ties resolve to
// the smallest target index, and the distance arithmetic matches
// brute_force_nearest term for term, so results are bit-identical to a linear
// scan on any input.
class SpatialIndex {
 public:
  static SpatialIndex build(const PointMatrix& target);
  static SpatialIndex build(const PointCloud& target) { return build(target.points); }

  NearestResult nearest(const Vec3& query) const;

  Eigen::Index target_count() const { return pts_.rows(); }
  const PointMatrix& points() const { return pts_; }

 private:
  struct Node {
    double split = 0.0;
    std::int32_t axis = -1;  // -1 marks a leaf
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t begin = 0;  // leaf range in order_
    std::int32_t end = 0;
  };

  SpatialIndex() = default;
  std::int32_t build_node(std::int32_t begin, std::int32_t end);
  void search(std::int32_t node_id, const double* q, NearestResult& best) const;

  static constexpr std::int32_t kLeafSize = 16;

  PointMatrix pts_;
  std::vector<std::int32_t> order_;  // permutation of target rows
  std::vector<Node> nodes_;
};

inline SpatialIndex build_index(const PointCloud& cloud) { return SpatialIndex::build(cloud); }

// Reference linear scan with the same tie rule; the oracle SpatialIndex must
// agree with bit for bit.
NearestResult brute_force_nearest(const PointMatrix& target, const Vec3& query);
inline NearestResult brute_force_nearest(const PointCloud& target, const Vec3& query) {
  return brute_force_nearest(target.points, query);
}

}  // namespace sceneflow
