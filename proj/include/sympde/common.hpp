#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sympde {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Structural problem: incompatible shapes, bad graph wiring.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// NaN/Inf reached a value that must stay finite.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration (unknown keys, unsupported network choice, bad parameters).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse (backward before forward, missing bind, ...).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace sympde
