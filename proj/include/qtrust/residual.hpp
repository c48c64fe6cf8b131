#pragma once

#include "qtrust/linalg.hpp"

namespace qtrust {

/// Twice differentiable cost x -> r(x) on the weighted space X_n. The
/// gradient is returned as its Riesz representer in <.,.>_n, and the Hessian
/// is applied matrix-free (weighted-symmetric action).
class ResidualFunction {
 public:
  virtual ~ResidualFunction() = default;

  virtual Index dim() const = 0;
  virtual const std::shared_ptr<const Vector>& weights() const = 0;

  virtual Scalar value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
  virtual Vector hessian_apply(const Vector& x, const Vector& w) const = 0;
};

}  // namespace qtrust
