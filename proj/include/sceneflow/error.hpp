#pragma once

#include <stdexcept>
#include <string>

namespace sceneflow {

// Invalid arguments, broken invariants, malformed requests.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or count mismatch between containers that must agree.
struct DimensionError : ValidationError {
  explicit DimensionError(const std::string& msg) : ValidationError(msg) {}
};

// Filesystem trouble: missing files, unreadable or unwritable paths.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parse failure in a declared file format; message names the line or byte.
struct FormatError : IoError {
  explicit FormatError(const std::string& msg) : IoError(msg) {}
};

// Numerical breakdown, e.g. a diverging optimization.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sceneflow
