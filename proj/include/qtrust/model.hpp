#pragma once

#include "qtrust/problems.hpp"
#include "qtrust/residual.hpp"
#include "qtrust/trs.hpp"

#include <memory>

namespace qtrust {

/// r(x) = 1/2 ||F(x) - y^delta||_n^2 for a forward problem and noisy data.
class ResidualFunctional : public ResidualFunction {
 public:
  ResidualFunctional(std::shared_ptr<const ForwardProblem> problem,
                     Vector y_delta);

  Index dim() const override { return problem_->dim_in(); }
  const std::shared_ptr<const Vector>& weights() const override {
    return problem_->weights_in();
  }

  Scalar value(const Vector& x) const override;
  /// Riesz representer F'(x)^* (F(x) - y^delta) of the derivative.
  Vector gradient(const Vector& x) const override;
  /// Gauss-Newton term plus curvature term, matrix-free.
  Vector hessian_apply(const Vector& x, const Vector& w) const override;

  const ForwardProblem& problem() const { return *problem_; }
  const Vector& data() const { return y_delta_; }

 private:
  std::shared_ptr<const ForwardProblem> problem_;
  Vector y_delta_;
};

/// Second order Taylor model of r around base_point, with the Hessian action
/// expressed in Euclidean coordinates v = W^{1/2} x.
struct QuadraticModel {
  Vector base_point;
  Vector gradient;             // representer g at the base point
  SymOperator hessian_action;  // H~ = W^{1/2} H W^{-1/2}, Euclidean-symmetric
  Scalar base_value = 0;       // r(base_point)
  Scalar radius_sq = 0;        // rho
  std::shared_ptr<const Vector> weights;

  /// q(x) evaluated through the weighted pieces.
  Scalar value(const Vector& x) const;
};

/// Euclidean trust-region form of the constrained model problem. Solutions v
/// of `prob` map back via x = W^{-1/2} v; TRS objective + constant equals
/// q(x(v)); the multiplier of the rho-ball constraint is lambda_scale times
/// the TRS one.
struct ModelTrs {
  TrsProblem prob;
  Scalar constant = 0;
  Vector sqrt_w;
  Vector inv_sqrt_w;
  static constexpr Scalar lambda_scale = 2.0;

  Vector to_x(const Vector& v) const { return inv_sqrt_w.cwiseProduct(v); }
  Vector to_v(const Vector& x) const { return sqrt_w.cwiseProduct(x); }
};

/// The model keeps a reference to rf; rf must outlive the returned objects.
QuadraticModel build_model(const ResidualFunction& rf, const Vector& x_k,
                           Scalar rho);
/// damping > 0 adds the proximal term damping/2 * ||v - v_k||^2 to the model
/// (used to globalize the inner iteration; zero leaves the model untouched).
ModelTrs build_trs(const ResidualFunction& rf, const Vector& x_k, Scalar rho,
                   Scalar damping = 0);

}  // namespace qtrust
