// Command-line front end: scene-flow estimation between point-cloud pairs,
// plus evaluation, synthetic data, sequence integration, gradient checks and
// benchmarking. Exit codes: 0 success, 1 usage/validation, 2 I/O, 3 numeric.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sceneflow/error.hpp"
#include "sceneflow/gradcheck.hpp"
#include "sceneflow/integrate.hpp"
#include "sceneflow/io.hpp"
#include "sceneflow/metrics.hpp"
#include "sceneflow/optim.hpp"
#include "sceneflow/rng.hpp"
#include "sceneflow/synth.hpp"

namespace fs = std::filesystem;
using namespace sceneflow;

namespace {

// ---------------------------------------------------------------- config file

double parse_double_value(const std::string& where, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw ValidationError(where + ": expected a number, got '" + v + "'");
  return out;
}

long parse_int_value(const std::string& where, const std::string& v) {
  long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw ValidationError(where + ": expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool_value(const std::string& where, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(where + ": expected a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

// key=value lines, '#' comments; unknown keys are rejected so typos fail loud.
void apply_config_file(const fs::path& path, SolverConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "hidden_layers") cfg.arch.hidden_layers = static_cast<int>(parse_int_value(where, value));
    else if (key == "hidden_units") cfg.arch.hidden_units = static_cast<int>(parse_int_value(where, value));
    else if (key == "activation") cfg.arch.activation = activation_from_name(value);
    else if (key == "learning_rate") cfg.learning_rate = parse_double_value(where, value);
    else if (key == "max_iters") cfg.max_iters = static_cast<int>(parse_int_value(where, value));
    else if (key == "patience") cfg.patience = static_cast<int>(parse_int_value(where, value));
    else if (key == "min_relative_improvement") cfg.min_relative_improvement = parse_double_value(where, value);
    else if (key == "truncation_dist") cfg.loss.truncation_dist = parse_double_value(where, value);
    else if (key == "bidirectional") cfg.loss.bidirectional = parse_bool_value(where, value);
    else if (key == "use_backward_flow") cfg.loss.use_backward_flow = parse_bool_value(where, value);
    else if (key == "detach_forward_in_backward_term")
      cfg.loss.detach_forward_in_backward_term = parse_bool_value(where, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int_value(where, value));
    else throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

// ---------------------------------------------------------------- solver flags

// One bundle per subcommand that runs the solver. Defaults here are the
// tool-wide defaults; a --config file overrides them, and flags given
// explicitly on the command line override the file.
struct SolverFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  double lr = 8e-3;
  int iters = 5000;
  int patience = 100;
  double min_rel = 1e-6;
  int layers = 8;
  int hidden = 128;
  std::string activation = "relu";
  double truncation = 2.0;
  bool bidirectional = true;
  bool backward_flow = true;
  bool detach_backward = false;
  bool verbose = false;

  CLI::Option *o_seed{}, *o_lr{}, *o_iters{}, *o_patience{}, *o_min_rel{}, *o_layers{},
      *o_hidden{}, *o_activation{}, *o_truncation{}, *o_bidirectional{}, *o_backward{},
      *o_detach{};

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file; explicit flags win");
    o_seed = cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
    o_lr = cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    o_iters = cmd->add_option("--iters", iters, "max optimization iterations")->capture_default_str();
    o_patience = cmd->add_option("--patience", patience, "early-stop patience in iterations")->capture_default_str();
    o_min_rel = cmd->add_option("--min-rel-improvement", min_rel,
                                "loss improvement (relative to best) that resets patience")
                    ->capture_default_str();
    o_layers = cmd->add_option("--layers", layers, "hidden layer count")->capture_default_str();
    o_hidden = cmd->add_option("--hidden", hidden, "units per hidden layer")->capture_default_str();
    o_activation = cmd->add_option("--activation", activation, "relu|sigmoid")->capture_default_str();
    o_truncation = cmd->add_option("--truncation", truncation,
                                   "Chamfer truncation distance in meters")
                       ->capture_default_str();
    o_bidirectional = cmd->add_option("--bidirectional", bidirectional,
                                      "use both Chamfer directions")
                          ->capture_default_str();
    o_backward = cmd->add_option("--backward-flow", backward_flow,
                                 "fit a backward net for cycle consistency")
                     ->capture_default_str();
    o_detach = cmd->add_option("--detach-backward", detach_backward,
                               "keep the cycle term out of the forward net's gradient")
                   ->capture_default_str();
    cmd->add_flag("--verbose", verbose, "per-iteration log on stderr");
  }

  SolverConfig build() const {
    SolverConfig cfg;
    if (!config_path.empty()) apply_config_file(config_path, cfg);
    if (o_seed->count()) cfg.seed = seed;
    if (o_lr->count()) cfg.learning_rate = lr;
    if (o_iters->count()) cfg.max_iters = iters;
    if (o_patience->count()) cfg.patience = patience;
    if (o_min_rel->count()) cfg.min_relative_improvement = min_rel;
    if (o_layers->count()) cfg.arch.hidden_layers = layers;
    if (o_hidden->count()) cfg.arch.hidden_units = hidden;
    if (o_activation->count()) cfg.arch.activation = activation_from_name(activation);
    if (o_truncation->count()) cfg.loss.truncation_dist = truncation;
    if (o_bidirectional->count()) cfg.loss.bidirectional = bidirectional;
    if (o_backward->count()) cfg.loss.use_backward_flow = backward_flow;
    if (o_detach->count()) cfg.loss.detach_forward_in_backward_term = detach_backward;
    cfg.verbose = verbose;
    return cfg;
  }
};

// ---------------------------------------------------------------- subcommands

struct EstimateArgs {
  std::string source, target, out_flow, out_stats, out_net, format = "xyz_text";
  SolverFlags solver;
};

int run_estimate(const EstimateArgs& a) {
  const CloudFormat format = cloud_format_from_name(a.format);
  const PointCloud s1 = load_cloud(a.source, format);
  const PointCloud s2 = load_cloud(a.target, format);
  const SolverConfig cfg = a.solver.build();

  const SolveResult res = solve_flow(s1, s2, cfg);
  save_flow(res.flow, a.out_flow);
  if (!a.out_stats.empty()) {
    std::ofstream out(a.out_stats);
    if (!out) throw IoError("cannot open " + a.out_stats + " for writing");
    out << stats_to_json(res.stats) << '\n';
  }
  if (!a.out_net.empty()) save_params(res.params_fwd, a.out_net);
  std::printf("points=%lld iterations=%d best_iteration=%d best_loss=%.6g wall_time=%.3fs\n",
              static_cast<long long>(s1.size()), res.stats.iterations_run,
              res.stats.best_iteration, res.stats.best_loss, res.stats.wall_time_seconds);
  return 0;
}

struct EvalArgs {
  std::string est, gt, out_json;
};

int run_eval(const EvalArgs& a) {
  const FlowField est = load_flow(a.est);
  const FlowField gt = load_flow(a.gt);
  const MetricsRecord r = evaluate(est, gt);
  const std::string json = metrics_to_json(r);
  if (!a.out_json.empty()) {
    std::ofstream out(a.out_json);
    if (!out) throw IoError("cannot open " + a.out_json + " for writing");
    out << json << '\n';
  }
  std::printf("%s\n", json.c_str());
  return 0;
}

struct SynthArgs {
  SyntheticSceneSpec spec;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int run_synth(const SynthArgs& a) {
  const SyntheticScene scene = generate_synthetic_scene(a.spec, a.seed);
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw IoError("cannot create directory " + a.out_dir + ": " + ec.message());
  save_cloud(scene.s1, fs::path(a.out_dir) / "s1.xyz", CloudFormat::xyz_text);
  save_cloud(scene.s2, fs::path(a.out_dir) / "s2.xyz", CloudFormat::xyz_text);
  save_flow(scene.gt, fs::path(a.out_dir) / "gt.flow");
  std::printf("wrote %s/{s1.xyz,s2.xyz,gt.flow} (%lld points)\n", a.out_dir.c_str(),
              static_cast<long long>(scene.s1.size()));
  return 0;
}

struct IntegrateArgs {
  std::string manifest, out_cloud, solution_dir, format = "xyz_text";
  int target_frame = -1;  // -1: last frame
  SolverFlags solver;
};

std::vector<PointCloud> load_manifest_clouds(const fs::path& manifest_path, CloudFormat format) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  const fs::path base = manifest_path.parent_path();
  std::vector<PointCloud> clouds;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    fs::path entry(line);
    if (entry.is_relative()) entry = base / entry;
    PointCloud cloud = load_cloud(entry, format);
    cloud.frame_id = static_cast<std::uint32_t>(clouds.size());
    clouds.push_back(std::move(cloud));
  }
  if (clouds.empty())
    throw ValidationError("manifest " + manifest_path.string() + " lists no clouds");
  return clouds;
}

int run_integrate(const IntegrateArgs& a) {
  const CloudFormat format = cloud_format_from_name(a.format);
  std::vector<PointCloud> clouds = load_manifest_clouds(a.manifest, format);

  const int last = static_cast<int>(clouds.size()) - 1;
  const int target = a.target_frame < 0 ? last : a.target_frame;
  if (target > last)
    throw ValidationError("target frame " + std::to_string(target) + " but manifest has " +
                          std::to_string(clouds.size()) + " frames");

  if (clouds.size() == 1) {  // nothing to integrate; emit the frame as-is
    save_cloud(clouds[0], a.out_cloud, format);
    std::printf("frames=1 points=%lld (single frame, copied)\n",
                static_cast<long long>(clouds[0].size()));
    return 0;
  }

  const SolverConfig cfg = a.solver.build();
  const SequenceSolution sol = solve_sequence(clouds, cfg);
  const PointCloud dense = accumulate(sol, target);
  save_cloud(dense, a.out_cloud, format);
  if (!a.solution_dir.empty()) save_sequence(sol, a.solution_dir);
  std::printf("frames=%zu target=%d points=%lld\n", clouds.size(), target,
              static_cast<long long>(dense.size()));
  return 0;
}

struct GradcheckArgs {
  int layers = 2;
  int hidden = 8;
  int points = 8;
  int trials = 20;
  double step = 1e-6;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  std::string activation = "relu";
};

int run_gradcheck(const GradcheckArgs& a) {
  if (a.trials < 1) throw ValidationError("gradcheck: trials must be >= 1");
  ArchConfig arch;
  arch.hidden_layers = a.layers;
  arch.hidden_units = a.hidden;
  arch.activation = activation_from_name(a.activation);

  const GradCheckReport net_report =
      check_network_gradients(arch, a.points, a.trials, a.step, a.seed);
  const GradCheckReport obj_report =
      check_objective_gradients(arch, a.points, a.trials, a.step, a.seed);
  const double worst = std::max(net_report.max_rel_error, obj_report.max_rel_error);
  std::printf("network max_rel_error=%.3g objective max_rel_error=%.3g tolerance=%.3g\n",
              net_report.max_rel_error, obj_report.max_rel_error, a.tolerance);
  if (!(worst <= a.tolerance))
    throw NumericError("gradient check failed: max relative error " + std::to_string(worst) +
                       " exceeds tolerance " + std::to_string(a.tolerance));
  return 0;
}

struct BenchArgs {
  std::string dataset_dir, out_csv;
  int points = 0;  // 0: use every point
  int jobs = 1;
  SolverFlags solver;
};

// Seeded uniform subsample without replacement, original order preserved.
std::vector<Eigen::Index> sample_rows(Eigen::Index n, Eigen::Index k, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index j =
        i + static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

PointMatrix gather_rows(const PointMatrix& m, const std::vector<Eigen::Index>& rows) {
  PointMatrix out(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

int run_bench(const BenchArgs& a) {
  if (a.points < 0) throw ValidationError("bench: --points must be >= 0");
  if (a.jobs < 1) throw ValidationError("bench: --jobs must be >= 1");
  if (!fs::is_directory(a.dataset_dir))
    throw IoError("dataset directory " + a.dataset_dir + " does not exist");

  // pairs are <name>_s1.xyz + <name>_s2.xyz, optional <name>_gt.flow
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(a.dataset_dir)) {
    const std::string fname = entry.path().filename().string();
    constexpr const char* suffix = "_s1.xyz";
    if (fname.size() > 7 && fname.ends_with(suffix))
      names.push_back(fname.substr(0, fname.size() - 7));
  }
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw ValidationError("no *_s1.xyz files found in " + a.dataset_dir);

  const SolverConfig cfg = a.solver.build();
  std::vector<std::pair<PointCloud, PointCloud>> pairs;
  std::vector<FlowField> gts(names.size());  // empty vectors when absent
  for (std::size_t i = 0; i < names.size(); ++i) {
    const fs::path base = fs::path(a.dataset_dir) / names[i];
    PointCloud s1 = load_cloud(base.string() + "_s1.xyz", CloudFormat::xyz_text);
    PointCloud s2 = load_cloud(base.string() + "_s2.xyz", CloudFormat::xyz_text);
    const fs::path gt_path = base.string() + "_gt.flow";
    FlowField gt;
    if (fs::exists(gt_path)) {
      gt = load_flow(gt_path);
      if (gt.size() != s1.size())
        throw DimensionError(gt_path.string() + ": vector count does not match " + names[i] +
                             "_s1.xyz");
    }
    if (a.points > 0 && s1.size() > a.points) {
      // ground truth rides along with the s1 sample; s2 draws its own
      Rng rng(derive_seed(cfg.seed, 2 * i));
      const auto rows = sample_rows(s1.size(), a.points, rng);
      s1.points = gather_rows(s1.points, rows);
      if (gt.size() > 0) gt.vectors = gather_rows(gt.vectors, rows);
    }
    if (a.points > 0 && s2.size() > a.points) {
      Rng rng(derive_seed(cfg.seed, 2 * i + 1));
      s2.points = gather_rows(s2.points, sample_rows(s2.size(), a.points, rng));
    }
    pairs.emplace_back(std::move(s1), std::move(s2));
    gts[i] = std::move(gt);
  }

  const std::vector<BatchEntry> results = solve_batch(pairs, cfg, a.jobs);

  std::ofstream csv(a.out_csv);
  if (!csv) throw IoError("cannot open " + a.out_csv + " for writing");
  csv << "pair,points,seconds,epe,acc5,acc10,angle\n";
  int failures = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    csv << names[i] << ',' << pairs[i].first.size() << ',';
    if (!results[i].result) {
      csv << ",,,,\n";
      std::fprintf(stderr, "pair %s failed: %s\n", names[i].c_str(),
                   results[i].error.c_str());
      ++failures;
      continue;
    }
    const SolveResult& res = *results[i].result;
    csv << res.stats.wall_time_seconds << ',';
    if (gts[i].size() > 0) {
      const MetricsRecord m = evaluate(res.flow, gts[i]);
      csv << m.epe_m << ',' << m.acc5_pct << ',' << m.acc10_pct << ',' << m.angle_rad << '\n';
    } else {
      csv << ",,,\n";
    }
  }
  if (!csv) throw IoError("write failed: " + a.out_csv);
  std::printf("pairs=%zu failures=%d csv=%s\n", names.size(), failures, a.out_csv.c_str());
  return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-flow estimation by per-pair optimization of a coordinate MLP"};
  app.require_subcommand(1);

  EstimateArgs est;
  CLI::App* c_est = app.add_subcommand("estimate", "fit flow from a source to a target cloud");
  c_est->add_option("--source", est.source, "source cloud file")->required();
  c_est->add_option("--target", est.target, "target cloud file")->required();
  c_est->add_option("--format", est.format, "xyz_text|ply_ascii|raw_f32le")->capture_default_str();
  c_est->add_option("--out-flow", est.out_flow, "output flow file")->required();
  c_est->add_option("--out-stats", est.out_stats, "optional stats JSON");
  c_est->add_option("--out-net", est.out_net, "optional fitted forward network file");
  est.solver.add_to(c_est);

  EvalArgs ev;
  CLI::App* c_eval = app.add_subcommand("eval", "compare an estimated flow against ground truth");
  c_eval->add_option("--est", ev.est, "estimated flow file")->required();
  c_eval->add_option("--gt", ev.gt, "ground-truth flow file")->required();
  c_eval->add_option("--out", ev.out_json, "optional metrics JSON path");

  SynthArgs sy;
  CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic scene pair");
  c_synth->add_option("--objects", sy.spec.object_count, "rigid cluster count")->capture_default_str();
  c_synth->add_option("--points-per-object", sy.spec.points_per_object, "points per cluster")->capture_default_str();
  c_synth->add_option("--background", sy.spec.background_points, "static background points")->capture_default_str();
  c_synth->add_option("--max-translation", sy.spec.max_translation, "max translation magnitude, meters")->capture_default_str();
  c_synth->add_option("--max-rotation", sy.spec.max_rotation, "max rotation angle, radians")->capture_default_str();
  c_synth->add_option("--noise", sy.spec.noise_sigma, "frame-2 Gaussian noise sigma, meters")->capture_default_str();
  c_synth->add_option("--extent", sy.spec.extent, "scene half-width, meters")->capture_default_str();
  c_synth->add_option("--seed", sy.seed, "RNG seed")->capture_default_str();
  c_synth->add_option("--out-dir", sy.out_dir, "output directory")->required();

  IntegrateArgs in_args;
  CLI::App* c_int = app.add_subcommand("integrate", "solve a sequence and densify one frame");
  c_int->add_option("--manifest", in_args.manifest, "text file listing cloud paths in order")->required();
  c_int->add_option("--format", in_args.format, "xyz_text|ply_ascii|raw_f32le")->capture_default_str();
  c_int->add_option("--target-frame", in_args.target_frame, "frame to densify (-1: last)")->capture_default_str();
  c_int->add_option("--out", in_args.out_cloud, "output cloud file")->required();
  c_int->add_option("--solution-dir", in_args.solution_dir, "optional directory for nets/flows/frames");
  in_args.solver.add_to(c_int);

  GradcheckArgs gc;
  CLI::App* c_gc = app.add_subcommand("gradcheck", "finite-difference check of analytic gradients");
  c_gc->add_option("--layers", gc.layers, "hidden layer count")->capture_default_str();
  c_gc->add_option("--hidden", gc.hidden, "units per hidden layer")->capture_default_str();
  c_gc->add_option("--points", gc.points, "points per test cloud")->capture_default_str();
  c_gc->add_option("--trials", gc.trials, "random instances per check")->capture_default_str();
  c_gc->add_option("--step", gc.step, "central-difference step")->capture_default_str();
  c_gc->add_option("--tolerance", gc.tolerance, "max relative error allowed")->capture_default_str();
  c_gc->add_option("--seed", gc.seed, "RNG seed")->capture_default_str();
  c_gc->add_option("--activation", gc.activation, "relu|sigmoid")->capture_default_str();

  BenchArgs be;
  CLI::App* c_bench = app.add_subcommand("bench", "solve every pair in a dataset directory");
  c_bench->add_option("--dataset", be.dataset_dir, "directory of <name>_s1.xyz/<name>_s2.xyz pairs")->required();
  c_bench->add_option("--points", be.points, "subsample clouds to this many points (0: all)")->capture_default_str();
  c_bench->add_option("--out", be.out_csv, "output CSV path")->required();
  c_bench->add_option("--jobs", be.jobs, "parallel solves")->capture_default_str();
  be.solver.add_to(c_bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are exit 1, --help is 0
  }

  try {
    if (c_est->parsed()) return run_estimate(est);
    if (c_eval->parsed()) return run_eval(ev);
    if (c_synth->parsed()) return run_synth(sy);
    if (c_int->parsed()) return run_integrate(in_args);
    if (c_gc->parsed()) return run_gradcheck(gc);
    if (c_bench->parsed()) return run_bench(be);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
