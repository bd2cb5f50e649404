#include "sceneflow/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

#include "sceneflow/error.hpp"

namespace sceneflow {
namespace {

// Shortest text form that round-trips the exact double.
std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

const char* skip_ws(const char* p, const char* end) {
  while (p != end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
  return p;
}

// Parses exactly n whitespace-separated doubles; rejects trailing junk.
bool parse_doubles(const std::string& line, double* out, int n) {
  const char* p = line.data();
  const char* end = line.data() + line.size();
  for (int i = 0; i < n; ++i) {
    p = skip_ws(p, end);
    auto res = std::from_chars(p, end, out[i]);
    if (res.ec != std::errc{} || res.ptr == p) return false;
    p = res.ptr;
  }
  p = skip_ws(p, end);
  return p == end;
}

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (c != ' ' && c != '\t' && c != '\r') return false;
  }
  return true;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

// Reads "x y z" rows with '#' comments; shared by xyz clouds and flow files.
PointMatrix read_triplet_text(const std::filesystem::path& path, const char* what) {
  std::ifstream in = open_input(path);
  std::vector<double> vals;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    double v[3];
    if (!parse_doubles(line, v, 3)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected three numbers");
    }
    for (double x : v) {
      if (!std::isfinite(x)) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                              ": non-finite value");
      }
    }
    vals.insert(vals.end(), v, v + 3);
  }
  if (vals.empty()) {
    throw ValidationError(path.string() + ": no " + what + " rows found");
  }
  PointMatrix m(static_cast<Eigen::Index>(vals.size() / 3), 3);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    m(i, 0) = vals[3 * i + 0];
    m(i, 1) = vals[3 * i + 1];
    m(i, 2) = vals[3 * i + 2];
  }
  return m;
}

void write_triplet_text(const PointMatrix& m, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << format_double(m(i, 0)) << ' ' << format_double(m(i, 1)) << ' '
        << format_double(m(i, 2)) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PointMatrix read_ply(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  auto fail = [&](const std::string& msg) -> void {
    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };

  if (!next_line() || line != "ply") fail("missing 'ply' magic");
  if (!next_line() || line != "format ascii 1.0") fail("only 'format ascii 1.0' is supported");

  Eigen::Index vertex_count = -1;
  int prop_count = 0;
  int ix = -1, iy = -1, iz = -1;
  bool in_vertex_element = false;
  while (true) {
    if (!next_line()) fail("header ended before 'end_header'");
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "comment" || kw == "obj_info") continue;
    if (kw == "element") {
      std::string name;
      long long count = -1;
      ls >> name >> count;
      if (name == "vertex") {
        if (count < 1) fail("vertex count must be positive");
        vertex_count = static_cast<Eigen::Index>(count);
        in_vertex_element = true;
      } else {
        if (vertex_count < 0) fail("expected the vertex element first");
        in_vertex_element = false;
      }
      continue;
    }
    if (kw == "property") {
      if (!in_vertex_element) continue;
      std::string type, name;
      ls >> type >> name;
      if (type == "list") fail("list properties are not supported on vertices");
      if (name == "x") ix = prop_count;
      if (name == "y") iy = prop_count;
      if (name == "z") iz = prop_count;
      ++prop_count;
      continue;
    }
    fail("unrecognized header keyword '" + kw + "'");
  }
  if (vertex_count < 0) fail("no vertex element declared");
  if (ix < 0 || iy < 0 || iz < 0) fail("vertex element lacks x/y/z properties");

  PointMatrix m(vertex_count, 3);
  std::vector<double> row(static_cast<std::size_t>(prop_count));
  for (Eigen::Index i = 0; i < vertex_count; ++i) {
    if (!next_line()) fail("expected " + std::to_string(vertex_count) + " vertex rows");
    if (!parse_doubles(line, row.data(), prop_count)) {
      fail("expected " + std::to_string(prop_count) + " numbers");
    }
    m(i, 0) = row[static_cast<std::size_t>(ix)];
    m(i, 1) = row[static_cast<std::size_t>(iy)];
    m(i, 2) = row[static_cast<std::size_t>(iz)];
    if (!std::isfinite(m(i, 0)) || !std::isfinite(m(i, 1)) || !std::isfinite(m(i, 2))) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": non-finite vertex");
    }
  }
  return m;
}

void write_ply(const PointMatrix& m, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << m.rows()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << format_double(m(i, 0)) << ' ' << format_double(m(i, 1)) << ' '
        << format_double(m(i, 2)) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PointMatrix read_raw(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 12 != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                      " bytes is not a multiple of 12");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(bytes.size() / 12);
  if (n == 0) throw ValidationError(path.string() + ": no points");
  PointMatrix m(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      std::uint32_t u = 0;  // assemble little-endian explicitly
      const auto* b =
          reinterpret_cast<const unsigned char*>(bytes.data() + 12 * i + 4 * c);
      u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
          (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
      float f;
      std::memcpy(&f, &u, 4);
      if (!std::isfinite(f)) {
        throw ValidationError(path.string() + ": non-finite value at point " +
                              std::to_string(i));
      }
      m(i, c) = static_cast<double>(f);
    }
  }
  return m;
}

void write_raw(const PointMatrix& m, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const float f = static_cast<float>(m(i, c));  // lossy by design
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                         static_cast<char>((u >> 16) & 0xff),
                         static_cast<char>((u >> 24) & 0xff)};
      out.write(b, 4);
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

CloudFormat cloud_format_from_name(const std::string& name) {
  if (name == "xyz_text" || name == "xyz") return CloudFormat::xyz_text;
  if (name == "ply_ascii" || name == "ply") return CloudFormat::ply_ascii;
  if (name == "raw_f32le" || name == "raw") return CloudFormat::raw_f32le;
  throw ValidationError("unknown cloud format '" + name + "'");
}

const char* cloud_format_name(CloudFormat format) {
  switch (format) {
    case CloudFormat::xyz_text: return "xyz_text";
    case CloudFormat::ply_ascii: return "ply_ascii";
    case CloudFormat::raw_f32le: return "raw_f32le";
  }
  return "?";
}

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
  PointCloud cloud;
  switch (format) {
    case CloudFormat::xyz_text: cloud.points = read_triplet_text(path, "point"); break;
    case CloudFormat::ply_ascii: cloud.points = read_ply(path); break;
    case CloudFormat::raw_f32le: cloud.points = read_raw(path); break;
  }
  return cloud;
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                CloudFormat format) {
  validate_cloud(cloud, "save_cloud");
  switch (format) {
    case CloudFormat::xyz_text: write_triplet_text(cloud.points, path); break;
    case CloudFormat::ply_ascii: write_ply(cloud.points, path); break;
    case CloudFormat::raw_f32le: write_raw(cloud.points, path); break;
  }
}

FlowField load_flow(const std::filesystem::path& path) {
  FlowField flow;
  flow.vectors = read_triplet_text(path, "flow");
  return flow;
}

void save_flow(const FlowField& flow, const std::filesystem::path& path) {
  if (flow.size() == 0) throw ValidationError("save_flow: flow is empty");
  if (!all_finite(flow.vectors)) throw ValidationError("save_flow: non-finite vectors");
  write_triplet_text(flow.vectors, path);
}

}  // namespace sceneflow
