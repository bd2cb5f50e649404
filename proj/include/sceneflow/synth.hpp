#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow {

// Recipe for a randomized two-frame scene: rigid clusters that move, plus a
// static background, with optional sensor noise on the second frame only.
struct SyntheticSceneSpec {
  int object_count = 1;
  int points_per_object = 512;
  int background_points = 0;
  double max_translation = 1.0;  // meters
  double max_rotation = 0.0;     // radians, about the cluster centroid
  double noise_sigma = 0.0;      // meters, applied to frame 2 only
  double extent = 10.0;          // scene half-width in meters
};

struct RigidMotion {
  Vec3 centroid;              // rotation pivot
  Eigen::Matrix3d rotation;
  Vec3 translation;
};

struct SyntheticScene {
  PointCloud s1;
  PointCloud s2;    // moved copy of s1, plus noise when noise_sigma > 0
  FlowField gt;     // noise-free motion: gt[i] = moved(s1[i]) - s1[i]
  std::vector<RigidMotion> motions;  // one sampled transform per object
};

// Pure function of (spec, seed).
SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec, std::uint64_t seed);

}  // namespace sceneflow
