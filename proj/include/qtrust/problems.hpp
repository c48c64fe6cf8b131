#pragma once

#include "qtrust/linalg.hpp"
#include "qtrust/residual.hpp"

#include <cstdint>
#include <memory>

namespace qtrust {

/// Nonlinear forward operator F: X_n -> Y_n with first and second derivative
/// actions and their adjoints taken w.r.t. the weighted inner products on
/// both spaces.
class ForwardProblem {
 public:
  virtual ~ForwardProblem() = default;

  virtual Index dim_in() const = 0;
  virtual Index dim_out() const = 0;
  virtual const std::shared_ptr<const Vector>& weights_in() const = 0;
  virtual const std::shared_ptr<const Vector>& weights_out() const = 0;

  virtual Vector eval(const Vector& x) const = 0;
  virtual Vector apply_jacobian(const Vector& x, const Vector& h) const = 0;
  virtual Vector apply_jacobian_adjoint(const Vector& x,
                                        const Vector& r) const = 0;
  /// F''(x)[h, w], symmetric in (h, w).
  virtual Vector apply_second(const Vector& x, const Vector& h,
                              const Vector& w) const = 0;
  /// v with <v, w>_in = <r, F''(x)[h, w]>_out for all w.
  virtual Vector second_adjoint_action(const Vector& x, const Vector& r,
                                       const Vector& h) const = 0;
};

/// y(t) = int_0^t (x(s) + 10 x(s)^3) ds on [0,1], discretized by the
/// composite trapezoid rule on an equidistant grid of n nodes.
class CubicVolterra : public ForwardProblem {
 public:
  explicit CubicVolterra(Index n);

  Index dim_in() const override { return n_; }
  Index dim_out() const override { return n_; }
  const std::shared_ptr<const Vector>& weights_in() const override {
    return weights_;
  }
  const std::shared_ptr<const Vector>& weights_out() const override {
    return weights_;
  }

  Vector eval(const Vector& x) const override;
  Vector apply_jacobian(const Vector& x, const Vector& h) const override;
  Vector apply_jacobian_adjoint(const Vector& x,
                                const Vector& r) const override;
  Vector apply_second(const Vector& x, const Vector& h,
                      const Vector& w) const override;
  Vector second_adjoint_action(const Vector& x, const Vector& r,
                               const Vector& h) const override;

  const Vector& grid() const { return grid_; }
  /// The assembled cumulative-quadrature matrix K (row i integrates on
  /// [0, t_i]).
  const Matrix& quadrature_matrix() const { return K_; }

 private:
  Vector cumulative(const Vector& g) const { return K_ * g; }
  /// Adjoint of the cumulative quadrature w.r.t. the weighted products:
  /// K* = W^{-1} K^T W.
  Vector cumulative_adjoint(const Vector& r) const;

  Index n_;
  Vector grid_;
  std::shared_ptr<const Vector> weights_;
  Matrix K_;
};

/// Exact and noisy data for one synthetic run.
struct NoisySetup {
  WeightedVector x_true;
  WeightedVector y_exact;
  WeightedVector y_delta;
  Scalar delta_rel = 0;  // percent
  Scalar delta_abs = 0;  // 1/2 ||y - y^delta||_n^2
  std::uint64_t seed = 0;
};

/// Adds seeded symmetric-uniform noise rescaled so that
/// ||y_delta - y_exact||_n = (delta_rel/100) * ||y_exact||_n exactly.
NoisySetup make_noisy(const ForwardProblem& p, const Vector& x_true,
                      Scalar delta_rel, std::uint64_t seed);

/// One-dimensional nonconvex cost
///   r(x) = 1/2 (x - x_true)^2 - C (x - x_true)^4 + D min{0, x}^4
/// with analytic derivatives. The constructor enforces the parameter
/// intervals that make the shifted Hessian positive on the admissible set.
class Example1D : public ResidualFunction {
 public:
  Example1D(Scalar C, Scalar D, Scalar x_true);

  Index dim() const override { return 1; }
  const std::shared_ptr<const Vector>& weights() const override {
    return weights_;
  }
  Scalar value(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;
  Vector hessian_apply(const Vector& x, const Vector& w) const override;

  Scalar second_derivative(Scalar x) const;
  Scalar x_true() const { return x_true_; }

 private:
  Scalar C_, D_, x_true_;
  std::shared_ptr<const Vector> weights_;
};

}  // namespace qtrust
