#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace qtrust {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Invalid user-supplied configuration or arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative routine ran out of its budget.
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qtrust
