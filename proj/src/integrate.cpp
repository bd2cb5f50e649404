#include "sceneflow/integrate.hpp"

#include <cstdio>
#include <fstream>

#include "sceneflow/error.hpp"
#include "sceneflow/io.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {
namespace {

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%03zu%s", stem, i, ext);
  return buf;
}

int interval_count(const SequenceSolution& sol) {
  return static_cast<int>(sol.params_fwd.size());
}

void validate_solution(const SequenceSolution& sol) {
  if (sol.clouds.size() < 2)
    throw ValidationError("sequence: need at least two frames");
  if (sol.params_fwd.size() != sol.clouds.size() - 1)
    throw DimensionError("sequence: expected one forward net per consecutive pair");
  if (!sol.params_bwd.empty() && sol.params_bwd.size() != sol.params_fwd.size())
    throw DimensionError("sequence: backward nets must be absent or one per pair");
}

}  // namespace

SequenceSolution solve_sequence(const std::vector<PointCloud>& clouds, const SolverConfig& cfg) {
  if (clouds.size() < 2) throw ValidationError("solve_sequence: need at least two frames");

  SequenceSolution sol;
  sol.clouds = clouds;
  for (std::size_t m = 0; m + 1 < clouds.size(); ++m) {
    SolverConfig pair_cfg = cfg;
    pair_cfg.seed = derive_seed(cfg.seed, m);
    SolveResult res;
    try {
      res = solve_flow(clouds[m], clouds[m + 1], pair_cfg);
    } catch (const std::exception& e) {
      throw NumericError("solve_sequence: pair " + std::to_string(m) + ": " + e.what());
    }
    sol.params_fwd.push_back(std::move(res.params_fwd));
    if (cfg.loss.use_backward_flow) sol.params_bwd.push_back(std::move(res.params_bwd));
    sol.pairwise_flows.push_back(std::move(res.flow));
  }
  return sol;
}

FlowField integrate_flow(const SequenceSolution& solution, int start, int end) {
  validate_solution(solution);
  const int m_total = interval_count(solution);
  if (start < 0 || end > m_total || start >= end)
    throw ValidationError("integrate_flow: invalid interval [" + std::to_string(start) + ", " +
                          std::to_string(end) + ") over " + std::to_string(m_total) +
                          " intervals");

  const PointMatrix& base = solution.clouds[static_cast<std::size_t>(start)].points;
  FlowField flow;
  flow.vectors = PointMatrix::Zero(base.rows(), 3);
  for (int m = start; m < end; ++m) {
    // forward-Euler: advance the carried points through the next interval's net
    flow.vectors += forward(solution.params_fwd[static_cast<std::size_t>(m)],
                            base + flow.vectors);
  }
  return flow;
}

PointCloud accumulate(const SequenceSolution& solution, int target_frame) {
  validate_solution(solution);
  const int m_total = interval_count(solution);
  if (target_frame < 0 || target_frame > m_total)
    throw ValidationError("accumulate: target frame " + std::to_string(target_frame) +
                          " outside [0, " + std::to_string(m_total) + "]");
  if (target_frame < m_total && solution.params_bwd.empty())
    throw ValidationError(
        "accumulate: frames after the target need backward transport, but the "
        "sequence was solved without backward networks");

  Eigen::Index total_rows = 0;
  for (const auto& c : solution.clouds) total_rows += c.size();

  PointCloud out;
  out.points.resize(total_rows, 3);
  out.frame_id = static_cast<std::uint32_t>(target_frame);
  Eigen::Index row = 0;
  for (int m = 0; m <= m_total; ++m) {
    const PointMatrix& pts = solution.clouds[static_cast<std::size_t>(m)].points;
    PointMatrix moved;
    if (m < target_frame) {
      moved = pts + integrate_flow(solution, m, target_frame).vectors;
    } else if (m == target_frame) {
      moved = pts;
    } else {
      // walk backward one interval at a time: m -> m-1 -> ... -> target
      PointMatrix f = PointMatrix::Zero(pts.rows(), 3);
      for (int k = m - 1; k >= target_frame; --k)
        f += forward(solution.params_bwd[static_cast<std::size_t>(k)], pts + f);
      moved = pts + f;
    }
    out.points.middleRows(row, moved.rows()) = moved;
    row += moved.rows();
  }
  return out;
}

void save_sequence(const SequenceSolution& solution, const std::filesystem::path& dir) {
  validate_solution(solution);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
  manifest << "# frames in order\n";
  for (std::size_t m = 0; m < solution.clouds.size(); ++m) {
    const std::string name = numbered("frame_", m, ".xyz");
    save_cloud(solution.clouds[m], dir / name, CloudFormat::xyz_text);
    manifest << name << '\n';
  }
  if (!manifest) throw IoError("write failed: " + (dir / "manifest.txt").string());

  for (std::size_t m = 0; m < solution.params_fwd.size(); ++m) {
    save_params(solution.params_fwd[m], dir / numbered("net_fwd_", m, ".bin"));
    if (!solution.params_bwd.empty())
      save_params(solution.params_bwd[m], dir / numbered("net_bwd_", m, ".bin"));
    save_flow(solution.pairwise_flows[m], dir / numbered("flow_", m, ".flow"));
  }
}

SequenceSolution load_sequence(const std::filesystem::path& dir, Activation activation) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot open " + (dir / "manifest.txt").string());

  // validate the manifest in full before touching any frame file
  std::vector<std::string> names;
  std::string line;
  while (std::getline(manifest, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    const auto pos = trimmed.find('#');
    if (pos != std::string::npos) trimmed.resize(pos);
    while (!trimmed.empty() && (trimmed.back() == ' ' || trimmed.back() == '\t'))
      trimmed.pop_back();
    std::size_t start = 0;
    while (start < trimmed.size() && (trimmed[start] == ' ' || trimmed[start] == '\t')) ++start;
    trimmed.erase(0, start);
    if (trimmed.empty()) continue;
    names.push_back(std::move(trimmed));
  }
  if (names.size() < 2)
    throw FormatError((dir / "manifest.txt").string() + ": needs at least two frame entries");

  SequenceSolution sol;
  for (const std::string& name : names) {
    PointCloud cloud = load_cloud(dir / name, CloudFormat::xyz_text);
    cloud.frame_id = static_cast<std::uint32_t>(sol.clouds.size());
    sol.clouds.push_back(std::move(cloud));
  }

  const std::size_t m_total = sol.clouds.size() - 1;
  const bool has_bwd = std::filesystem::exists(dir / numbered("net_bwd_", 0, ".bin"));
  for (std::size_t m = 0; m < m_total; ++m) {
    sol.params_fwd.push_back(load_params(dir / numbered("net_fwd_", m, ".bin"), activation));
    if (has_bwd)
      sol.params_bwd.push_back(load_params(dir / numbered("net_bwd_", m, ".bin"), activation));
    sol.pairwise_flows.push_back(load_flow(dir / numbered("flow_", m, ".flow")));
  }
  return sol;
}

}  // namespace sceneflow
