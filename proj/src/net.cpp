#include "sceneflow/net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sceneflow/error.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {
namespace {

static_assert(std::endian::native == std::endian::little,
              "parameter files are little-endian; this port needs byte swaps");

constexpr char kMagic[4] = {'S', 'F', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

void validate_arch(const ArchConfig& arch) {
  if (arch.hidden_layers < 1) throw ValidationError("net: hidden_layers must be >= 1");
  if (arch.hidden_units < 1) throw ValidationError("net: hidden_units must be >= 1");
}

Eigen::Index layer_in(const ArchConfig& arch, int l) { return l == 0 ? 3 : arch.hidden_units; }
Eigen::Index layer_out(const ArchConfig& arch, int l) {
  return l == arch.hidden_layers ? 3 : arch.hidden_units;
}

void check_shapes(const NetworkParams& p, const char* what) {
  const int n_layers = p.arch.hidden_layers + 1;
  if (static_cast<int>(p.weights.size()) != n_layers ||
      static_cast<int>(p.biases.size()) != n_layers) {
    throw DimensionError(std::string(what) + ": layer count does not match architecture");
  }
  for (int l = 0; l < n_layers; ++l) {
    if (p.weights[l].rows() != layer_in(p.arch, l) || p.weights[l].cols() != layer_out(p.arch, l))
      throw DimensionError(std::string(what) + ": weight shape mismatch at layer " +
                           std::to_string(l));
    const Eigen::Index want_bias = l == 0 ? 0 : layer_out(p.arch, l);
    if (p.biases[l].size() != want_bias)
      throw DimensionError(std::string(what) + ": bias shape mismatch at layer " +
                           std::to_string(l));
  }
}

void apply_activation(Eigen::MatrixXd& z, Activation activation) {
  if (activation == Activation::relu) {
    z = z.cwiseMax(0.0);
  } else {
    z = (1.0 + (-z.array()).exp()).inverse().matrix();
  }
}

// derivative of the activation expressed through its own output
Eigen::ArrayXXd activation_deriv(const Eigen::MatrixXd& a, Activation activation) {
  if (activation == Activation::relu) {
    return (a.array() > 0.0).cast<double>();  // exact zeros get subgradient 0
  }
  return a.array() * (1.0 - a.array());
}

}  // namespace

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ValidationError("unknown activation '" + name + "'");
}

const char* activation_name(Activation activation) {
  return activation == Activation::relu ? "relu" : "sigmoid";
}

std::int64_t parameter_count(const ArchConfig& arch) {
  validate_arch(arch);
  const std::int64_t h = arch.hidden_units;
  const std::int64_t hidden_blocks = arch.hidden_layers - 1;
  return 3 * h + hidden_blocks * (h * h + h) + (h * 3 + 3);
}

std::int64_t NetworkParams::parameter_count() const { return sceneflow::parameter_count(arch); }

NetworkParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  validate_arch(arch);
  Rng rng(seed);
  NetworkParams p;
  p.arch = arch;
  const int n_layers = arch.hidden_layers + 1;
  p.weights.resize(n_layers);
  p.biases.resize(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    const Eigen::Index in = layer_in(arch, l);
    const Eigen::Index out = layer_out(arch, l);
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    p.weights[l].resize(in, out);
    for (Eigen::Index r = 0; r < in; ++r)
      for (Eigen::Index c = 0; c < out; ++c) p.weights[l](r, c) = rng.uniform(-bound, bound);
    p.biases[l] = l == 0 ? Eigen::VectorXd() : Eigen::VectorXd::Zero(out);
  }
  return p;
}

NetworkParams zero_like(const NetworkParams& params) {
  NetworkParams z;
  z.arch = params.arch;
  z.weights.reserve(params.weights.size());
  z.biases.reserve(params.biases.size());
  for (const auto& w : params.weights)
    z.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : params.biases) z.biases.push_back(Eigen::VectorXd::Zero(b.size()));
  return z;
}

PointMatrix forward(const NetworkParams& params, const PointMatrix& points, ForwardTrace* trace) {
  check_shapes(params, "forward");
  if (points.rows() == 0) throw ValidationError("forward: empty input batch");
  if (!points.allFinite()) throw ValidationError("forward: non-finite input points");

  const int n_hidden = params.arch.hidden_layers;
  if (trace) {
    trace->act.clear();
    trace->act.reserve(static_cast<std::size_t>(n_hidden) + 1);
    trace->act.emplace_back(points);
  }
  Eigen::MatrixXd a = points;
  for (int l = 0; l < n_hidden; ++l) {
    Eigen::MatrixXd z = a * params.weights[l];
    if (params.biases[l].size() > 0) z.rowwise() += params.biases[l].transpose();
    apply_activation(z, params.arch.activation);
    a = std::move(z);
    if (trace) trace->act.push_back(a);
  }
  Eigen::MatrixXd y = a * params.weights[n_hidden];
  y.rowwise() += params.biases[n_hidden].transpose();
  return y;
}

NetGradients backward(const ForwardTrace& trace, const NetworkParams& params,
                      const PointMatrix& grad_flows) {
  check_shapes(params, "backward");
  const int n_hidden = params.arch.hidden_layers;
  if (static_cast<int>(trace.act.size()) != n_hidden + 1)
    throw DimensionError("backward: trace does not match architecture");
  if (grad_flows.rows() != trace.act[0].rows())
    throw DimensionError("backward: grad_flows row count does not match the traced batch");

  NetGradients g;
  g.params.arch = params.arch;
  g.params.weights.resize(static_cast<std::size_t>(n_hidden) + 1);
  g.params.biases.resize(static_cast<std::size_t>(n_hidden) + 1);

  // output layer
  g.params.weights[n_hidden] = trace.act[n_hidden].transpose() * grad_flows;
  g.params.biases[n_hidden] = grad_flows.colwise().sum().transpose();
  Eigen::MatrixXd m = grad_flows * params.weights[n_hidden].transpose();

  for (int l = n_hidden - 1; l >= 0; --l) {
    // m holds d(loss)/d(act[l+1]); fold in the activation derivative
    Eigen::MatrixXd dz =
        (m.array() * activation_deriv(trace.act[static_cast<std::size_t>(l) + 1],
                                      params.arch.activation))
            .matrix();
    g.params.weights[l] = trace.act[l].transpose() * dz;
    g.params.biases[l] =
        l == 0 ? Eigen::VectorXd() : Eigen::VectorXd(dz.colwise().sum().transpose());
    m = dz * params.weights[l].transpose();
  }
  g.points = m;
  return g;
}

void save_params(const NetworkParams& params, const std::filesystem::path& path) {
  check_shapes(params, "save_params");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");

  out.write(kMagic, 4);
  const std::uint32_t header[3] = {kVersion, static_cast<std::uint32_t>(params.arch.hidden_layers),
                                   static_cast<std::uint32_t>(params.arch.hidden_units)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));

  std::vector<double> row;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    row.resize(static_cast<std::size_t>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {  // row-major on disk
      for (Eigen::Index c = 0; c < w.cols(); ++c) row[static_cast<std::size_t>(c)] = w(r, c);
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(sizeof(double) * row.size()));
    }
    const auto& b = params.biases[l];
    if (b.size() > 0)
      out.write(reinterpret_cast<const char*>(b.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(b.size())));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

NetworkParams load_params(const std::filesystem::path& path, Activation activation) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");

  char magic[4];
  std::uint32_t header[3];
  if (!in.read(magic, 4) || !in.read(reinterpret_cast<char*>(header), sizeof(header)))
    throw FormatError(path.string() + ": truncated header");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path.string() + ": bad magic, not a parameter file");
  if (header[0] != kVersion)
    throw FormatError(path.string() + ": unsupported version " + std::to_string(header[0]));
  if (header[1] < 1 || header[2] < 1 || header[1] > 1024 || header[2] > 65536)
    throw FormatError(path.string() + ": implausible architecture in header");

  ArchConfig arch;
  arch.hidden_layers = static_cast<int>(header[1]);
  arch.hidden_units = static_cast<int>(header[2]);
  arch.activation = activation;

  NetworkParams p;
  p.arch = arch;
  const int n_layers = arch.hidden_layers + 1;
  p.weights.resize(n_layers);
  p.biases.resize(n_layers);
  std::vector<double> row;
  for (int l = 0; l < n_layers; ++l) {
    const Eigen::Index ins = layer_in(arch, l);
    const Eigen::Index outs = layer_out(arch, l);
    p.weights[l].resize(ins, outs);
    row.resize(static_cast<std::size_t>(outs));
    for (Eigen::Index r = 0; r < ins; ++r) {
      if (!in.read(reinterpret_cast<char*>(row.data()),
                   static_cast<std::streamsize>(sizeof(double) * row.size())))
        throw FormatError(path.string() + ": truncated at layer " + std::to_string(l));
      for (Eigen::Index c = 0; c < outs; ++c) p.weights[l](r, c) = row[static_cast<std::size_t>(c)];
    }
    if (l == 0) {
      p.biases[l] = Eigen::VectorXd();
    } else {
      p.biases[l].resize(outs);
      if (!in.read(reinterpret_cast<char*>(p.biases[l].data()),
                   static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(outs))))
        throw FormatError(path.string() + ": truncated at layer " + std::to_string(l) + " bias");
    }
  }
  char extra;
  if (in.read(&extra, 1))
    throw FormatError(path.string() + ": trailing bytes after parameters");
  return p;
}

}  // namespace sceneflow
