// =============================================================
// errors.hpp -- exception taxonomy shared by the whole library
// =============================================================
//
// Every precondition failure maps onto one of four categories so that
// callers (and the command-line tool) can translate failures into a
// small, stable set of exit codes:
//
//   DimensionError   incompatible tensor / matrix extents
//   ValidationError  out-of-range values, bad configuration
//   ParseError       malformed external input (CSV, JSON, checkpoints)
//   NumericError     NaN/Inf encountered, divergence, generation failure
//
#pragma once

#include <stdexcept>
#include <string>

namespace protodiv {

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace protodiv
