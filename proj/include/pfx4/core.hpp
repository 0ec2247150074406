#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pfx4 {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

using NodeId = std::size_t;
using ElemId = std::size_t;

/// Base for all library errors so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MeshError : Error {
  using Error::Error;
};

struct TopologyError : Error {
  using Error::Error;
};

/// Non-positive Jacobian (map) or J = det F <= 0 (material).
struct InversionError : Error {
  using Error::Error;
};

struct SolverError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct NonConvergence : Error {
  using Error::Error;
};

}  // namespace pfx4
