#include "sceneflow/synth.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "sceneflow/error.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {
namespace {

Vec3 random_unit_vector(Rng& rng) {
  while (true) {
    Vec3 v(rng.gaussian(), rng.gaussian(), rng.gaussian());
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

void validate_spec(const SyntheticSceneSpec& spec) {
  if (spec.object_count < 1) throw ValidationError("synth: object_count must be positive");
  if (spec.points_per_object < 1)
    throw ValidationError("synth: points_per_object must be positive");
  if (spec.background_points < 0)
    throw ValidationError("synth: background_points must be non-negative");
  if (!(spec.extent > 0.0)) throw ValidationError("synth: extent must be positive");
  if (spec.max_translation < 0.0 || spec.max_rotation < 0.0 || spec.noise_sigma < 0.0)
    throw ValidationError("synth: magnitudes must be non-negative");
}

}  // namespace

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Rng rng(seed);

  const Eigen::Index total =
      static_cast<Eigen::Index>(spec.object_count) * spec.points_per_object +
      spec.background_points;
  SyntheticScene scene;
  scene.s1.points.resize(total, 3);
  scene.gt.vectors.setZero(total, 3);
  scene.motions.reserve(static_cast<std::size_t>(spec.object_count));

  // Clusters are uniform cubes of half-width extent/4 centered inside the
  // inner half of the scene so moderate motions stay in frame.
  const double half = spec.extent / 4.0;
  Eigen::Index row = 0;
  for (int o = 0; o < spec.object_count; ++o) {
    Vec3 center;
    for (int c = 0; c < 3; ++c) center[c] = rng.uniform(-0.5 * spec.extent, 0.5 * spec.extent);

    const Eigen::Index first = row;
    for (int i = 0; i < spec.points_per_object; ++i, ++row) {
      for (int c = 0; c < 3; ++c)
        scene.s1.points(row, c) = rng.uniform(center[c] - half, center[c] + half);
    }

    RigidMotion motion;
    motion.centroid =
        scene.s1.points.middleRows(first, spec.points_per_object).colwise().mean();
    const Vec3 axis = random_unit_vector(rng);
    const double angle = rng.uniform(0.0, spec.max_rotation);
    motion.rotation = Eigen::AngleAxisd(angle, axis.transpose()).toRotationMatrix();
    const Vec3 dir = random_unit_vector(rng);
    motion.translation = dir * rng.uniform(0.0, spec.max_translation);

    for (Eigen::Index i = first; i < first + spec.points_per_object; ++i) {
      if (angle == 0.0) {
        scene.gt.vectors.row(i) = motion.translation;  // exactly constant per object
      } else {
        const Vec3 p = scene.s1.points.row(i);
        const Vec3 moved = motion.centroid +
                           (motion.rotation * (p - motion.centroid).transpose()).transpose() +
                           motion.translation;
        scene.gt.vectors.row(i) = moved - p;
      }
    }
    scene.motions.push_back(motion);
  }

  for (int i = 0; i < spec.background_points; ++i, ++row) {
    for (int c = 0; c < 3; ++c)
      scene.s1.points(row, c) = rng.uniform(-spec.extent, spec.extent);
    // background is static; gt row stays zero
  }

  scene.s2 = apply_flow(scene.s1, scene.gt);
  scene.s2.frame_id = 1;
  scene.s1.frame_id = 0;
  if (spec.noise_sigma > 0.0) {
    for (Eigen::Index i = 0; i < total; ++i)
      for (int c = 0; c < 3; ++c) scene.s2.points(i, c) += spec.noise_sigma * rng.gaussian();
  }
  return scene;
}

}  // namespace sceneflow
