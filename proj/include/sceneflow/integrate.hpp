#pragma once

#include <filesystem>
#include <vector>

#include "sceneflow/optim.hpp"

namespace sceneflow {

// Pairwise flow solutions across an ordered sequence of point clouds.
struct SequenceSolution {
  std::vector<PointCloud> clouds;         // M+1 frames
  std::vector<NetworkParams> params_fwd;  // M nets, frame m -> m+1
  std::vector<NetworkParams> params_bwd;  // M nets when solved with the
                                          // backward term, else empty
  std::vector<FlowField> pairwise_flows;  // M best flows, cached
};

// Solve every consecutive pair. A failing pair aborts with its index in the
// error message.
SequenceSolution solve_sequence(const std::vector<PointCloud>& clouds, const SolverConfig& cfg);

// Forward-Euler composition for the points of clouds[start] across
// [start, end): f <- f + g_m(p_start + f). A single interval reproduces the
// cached pairwise flow bit for bit.
FlowField integrate_flow(const SequenceSolution& solution, int start, int end);

// Transport every frame onto target_frame and concatenate, densifying that
// frame. Frames after the target need stored backward networks; without them
// this refuses rather than guessing.
PointCloud accumulate(const SequenceSolution& solution, int target_frame);

// Directory layout: manifest.txt naming the frame files in order, frame_NNN.xyz
// clouds, net_fwd_NNN.bin / net_bwd_NNN.bin parameters, flow_NNN.flow fields.
void save_sequence(const SequenceSolution& solution, const std::filesystem::path& dir);
SequenceSolution load_sequence(const std::filesystem::path& dir,
                               Activation activation = Activation::relu);

}  // namespace sceneflow
