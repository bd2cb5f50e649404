#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow {

enum class Activation { relu, sigmoid };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation activation);

// Coordinate MLP g: R^3 -> R^3. `hidden_layers` hidden blocks of
// `hidden_units` each, then a linear readout. The input layer is a pure
// linear lift with no bias; hidden and output layers carry biases.
struct ArchConfig {
  int hidden_layers = 8;
  int hidden_units = 128;
  Activation activation = Activation::relu;
};

std::int64_t parameter_count(const ArchConfig& arch);

struct NetworkParams {
  ArchConfig arch;
  // weights[l] is (in x out); hidden_layers + 1 entries. biases[0] is empty.
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::int64_t parameter_count() const;
};

// Kaiming-uniform weights (+-sqrt(6 / fan_in), filled row-major), zero biases.
NetworkParams init_params(const ArchConfig& arch, std::uint64_t seed);

NetworkParams zero_like(const NetworkParams& params);

// Per-layer activations cached by forward() for backward().
// act[0] is the input batch, act[l] the output of layer l.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> act;
};

// flows = g(points), batched over rows. Pass a trace to enable backward().
PointMatrix forward(const NetworkParams& params, const PointMatrix& points,
                    ForwardTrace* trace = nullptr);

struct NetGradients {
  NetworkParams params;  // same shapes as the forward parameters
  PointMatrix points;    // gradient w.r.t. the input batch
};

// Reverse-mode pass for d(probe)/d(everything) given grad_flows = d(probe)/d(flows).
// ReLU uses subgradient 0 at exactly 0.
NetGradients backward(const ForwardTrace& trace, const NetworkParams& params,
                      const PointMatrix& grad_flows);

// Binary round-trip: 16-byte header (magic "SFN1", version, hidden layer and
// unit counts as u32 little-endian) followed by the flat parameter vector as
// little-endian doubles, weights row-major, layer order, weight before bias.
void save_params(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_params(const std::filesystem::path& path,
                          Activation activation = Activation::relu);

}  // namespace sceneflow
