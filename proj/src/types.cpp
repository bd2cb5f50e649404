#include "sceneflow/types.hpp"

#include <string>

#include "sceneflow/error.hpp"

namespace sceneflow {

bool all_finite(const PointMatrix& m) { return m.allFinite(); }

void validate_cloud(const PointCloud& cloud, const char* what) {
  if (cloud.size() == 0) {
    throw ValidationError(std::string(what) + ": cloud is empty");
  }
  if (!all_finite(cloud.points)) {
    throw ValidationError(std::string(what) + ": cloud contains non-finite coordinates");
  }
}

PointCloud apply_flow(const PointCloud& cloud, const FlowField& flow) {
  if (cloud.size() != flow.size()) {
    throw DimensionError("apply_flow: cloud has " + std::to_string(cloud.size()) +
                         " points but flow has " + std::to_string(flow.size()) + " vectors");
  }
  PointCloud out;
  out.points = cloud.points + flow.vectors;
  out.frame_id = cloud.frame_id;
  return out;
}

}  // namespace sceneflow
