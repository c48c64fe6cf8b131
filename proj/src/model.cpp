#include "qtrust/model.hpp"

#include <cmath>

namespace qtrust {

ResidualFunctional::ResidualFunctional(
    std::shared_ptr<const ForwardProblem> problem, Vector y_delta)
    : problem_(std::move(problem)), y_delta_(std::move(y_delta)) {
  if (y_delta_.size() != problem_->dim_out())
    throw ConfigError("ResidualFunctional: data length mismatch");
}

Scalar ResidualFunctional::value(const Vector& x) const {
  Vector res = problem_->eval(x) - y_delta_;
  const Scalar nrm = weighted_norm(res, *problem_->weights_out());
  return 0.5 * nrm * nrm;
}

Vector ResidualFunctional::gradient(const Vector& x) const {
  Vector res = problem_->eval(x) - y_delta_;
  return problem_->apply_jacobian_adjoint(x, res);
}

Vector ResidualFunctional::hessian_apply(const Vector& x,
                                         const Vector& w) const {
  Vector res = problem_->eval(x) - y_delta_;
  Vector gn = problem_->apply_jacobian_adjoint(x, problem_->apply_jacobian(x, w));
  return gn + problem_->second_adjoint_action(x, res, w);
}

Scalar QuadraticModel::value(const Vector& x) const {
  const Vector d = x - base_point;
  // Weighted Hessian action H d = W^{-1/2} H~ (W^{1/2} d).
  const Vector sw = weights->array().sqrt().matrix();
  Vector hd = hessian_action.apply(sw.cwiseProduct(d)).cwiseQuotient(sw);
  return base_value + weighted_inner(gradient, d, *weights) +
         0.5 * weighted_inner(hd, d, *weights);
}

QuadraticModel build_model(const ResidualFunction& rf, const Vector& x_k,
                           Scalar rho) {
  if (rho <= 0) throw ConfigError("build_model: rho must be positive");
  QuadraticModel m;
  m.base_point = x_k;
  m.weights = rf.weights();
  m.base_value = rf.value(x_k);
  m.gradient = rf.gradient(x_k);
  m.radius_sq = rho;
  Vector sw = m.weights->array().sqrt().matrix();
  Vector isw = sw.cwiseInverse();
  m.hessian_action =
      SymOperator{rf.dim(), [&rf, x_k, sw, isw](const Vector& u) {
                    return Vector(sw.cwiseProduct(
                        rf.hessian_apply(x_k, isw.cwiseProduct(u))));
                  }};
  return m;
}

ModelTrs build_trs(const ResidualFunction& rf, const Vector& x_k, Scalar rho,
                   Scalar damping) {
  if (damping < 0) throw ConfigError("build_trs: damping must be >= 0");
  QuadraticModel m = build_model(rf, x_k, rho);
  ModelTrs t;
  t.sqrt_w = m.weights->array().sqrt().matrix();
  t.inv_sqrt_w = t.sqrt_w.cwiseInverse();

  const Vector v_k = t.to_v(x_k);
  const Vector g_tilde = t.sqrt_w.cwiseProduct(m.gradient);
  SymOperator H = m.hessian_action;
  if (damping > 0) {
    SymOperator H0 = m.hessian_action;
    H = SymOperator{H0.dim, [H0, damping](const Vector& u) {
                      return Vector(H0.apply(u) + damping * u);
                    }};
  }
  const Vector Hv_k = H.apply(v_k);

  // q(x(v)) = 1/2 v^T H~ v + (g~ - H~ v_k)^T v + c; in the TRS normal form
  // v^T A v - 2 a^T v this gives A = H~/2 and a = (H~ v_k - g~)/2.
  t.prob.A = SymOperator{H.dim, [H](const Vector& u) {
                           return Vector(0.5 * H.apply(u));
                         }};
  t.prob.a = 0.5 * (Hv_k - g_tilde);
  t.prob.s = std::sqrt(rho);
  t.constant = m.base_value - g_tilde.dot(v_k) + 0.5 * v_k.dot(Hv_k);
  return t;
}

}  // namespace qtrust
