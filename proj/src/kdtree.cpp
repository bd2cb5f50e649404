#include "sceneflow/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sceneflow/error.hpp"

namespace sceneflow {
namespace {

// Shared by the tree search and the brute-force scan so both paths round
// identically; bit-equality between them depends on this exact expression.
inline double sq_dist3(const double* q, double x, double y, double z) {
  const double dx = q[0] - x;
  const double dy = q[1] - y;
  const double dz = q[2] - z;
  return dx * dx + dy * dy + dz * dz;
}

inline void consider(NearestResult& best, double d, std::int64_t idx) {
  if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) {
    best.sq_dist = d;
    best.index = idx;
  }
}

void validate_query(const Vec3& query) {
  if (!query.allFinite()) throw ValidationError("nearest: non-finite query point");
}

}  // namespace

SpatialIndex SpatialIndex::build(const PointMatrix& target) {
  if (target.rows() == 0) throw ValidationError("SpatialIndex: target cloud is empty");
  if (!target.allFinite())
    throw ValidationError("SpatialIndex: target contains non-finite coordinates");

  SpatialIndex index;
  index.pts_ = target;
  index.order_.resize(static_cast<std::size_t>(target.rows()));
  std::iota(index.order_.begin(), index.order_.end(), 0);
  index.nodes_.reserve(static_cast<std::size_t>(2 * target.rows() / kLeafSize + 2));
  index.build_node(0, static_cast<std::int32_t>(target.rows()));
  return index;
}

std::int32_t SpatialIndex::build_node(std::int32_t begin, std::int32_t end) {
  const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();

  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  // split along the widest dimension of this range
  double lo[3], hi[3];
  for (int c = 0; c < 3; ++c) {
    lo[c] = std::numeric_limits<double>::infinity();
    hi[c] = -std::numeric_limits<double>::infinity();
  }
  for (std::int32_t i = begin; i < end; ++i) {
    const auto r = order_[static_cast<std::size_t>(i)];
    for (int c = 0; c < 3; ++c) {
      lo[c] = std::min(lo[c], pts_(r, c));
      hi[c] = std::max(hi[c], pts_(r, c));
    }
  }
  int axis = 0;
  for (int c = 1; c < 3; ++c) {
    if (hi[c] - lo[c] > hi[axis] - lo[axis]) axis = c;
  }

  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) { return pts_(a, axis) < pts_(b, axis); });

  nodes_[id].axis = axis;
  nodes_[id].split = pts_(order_[static_cast<std::size_t>(mid)], axis);
  const std::int32_t left = build_node(begin, mid);
  const std::int32_t right = build_node(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void SpatialIndex::search(std::int32_t node_id, const double* q, NearestResult& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) {
      const std::int64_t idx = order_[static_cast<std::size_t>(i)];
      consider(best, sq_dist3(q, pts_(idx, 0), pts_(idx, 1), pts_(idx, 2)), idx);
    }
    return;
  }
  const double delta = q[node.axis] - node.split;
  const std::int32_t near_child = delta < 0.0 ? node.left : node.right;
  const std::int32_t far_child = delta < 0.0 ? node.right : node.left;
  search(near_child, q, best);
  // visit the far side on equality too, or an equidistant smaller index there
  // could be missed
  if (delta * delta <= best.sq_dist) search(far_child, q, best);
}

NearestResult SpatialIndex::nearest(const Vec3& query) const {
  validate_query(query);
  const double q[3] = {query[0], query[1], query[2]};
  NearestResult best{-1, std::numeric_limits<double>::infinity()};
  search(0, q, best);
  return best;
}

NearestResult brute_force_nearest(const PointMatrix& target, const Vec3& query) {
  if (target.rows() == 0) throw ValidationError("brute_force_nearest: target cloud is empty");
  validate_query(query);
  const double q[3] = {query[0], query[1], query[2]};
  NearestResult best{-1, std::numeric_limits<double>::infinity()};
  for (Eigen::Index i = 0; i < target.rows(); ++i) {
    const double d = sq_dist3(q, target(i, 0), target(i, 1), target(i, 2));
    if (d < best.sq_dist) {  // strict: first hit keeps the smallest index
      best.sq_dist = d;
      best.index = i;
    }
  }
  return best;
}

}  // namespace sceneflow
