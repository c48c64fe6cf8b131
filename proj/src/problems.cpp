#include "qtrust/problems.hpp"

#include <cmath>
#include <random>

namespace qtrust {

CubicVolterra::CubicVolterra(Index n) : n_(n) {
  if (n < 2) throw ConfigError("CubicVolterra: grid needs n >= 2 nodes");
  grid_ = Vector::LinSpaced(n, 0.0, 1.0);
  weights_ = std::make_shared<const Vector>(trapezoid_weights(n, 1.0));
  const Scalar h = 1.0 / static_cast<Scalar>(n - 1);
  // Row i holds the trapezoid weights for integration over [0, t_i].
  K_ = Matrix::Zero(n, n);
  for (Index i = 1; i < n; ++i) {
    K_(i, 0) = 0.5 * h;
    for (Index j = 1; j < i; ++j) K_(i, j) = h;
    K_(i, i) = 0.5 * h;
  }
}

Vector CubicVolterra::cumulative_adjoint(const Vector& r) const {
  const Vector& w = *weights_;
  Vector wr = w.cwiseProduct(r);
  Vector out = K_.transpose() * wr;
  return out.cwiseQuotient(w);
}

Vector CubicVolterra::eval(const Vector& x) const {
  return cumulative(x + 10.0 * x.array().cube().matrix());
}

Vector CubicVolterra::apply_jacobian(const Vector& x, const Vector& h) const {
  Vector mult = (1.0 + 30.0 * x.array().square()).matrix();
  return cumulative(mult.cwiseProduct(h));
}

Vector CubicVolterra::apply_jacobian_adjoint(const Vector& x,
                                             const Vector& r) const {
  Vector mult = (1.0 + 30.0 * x.array().square()).matrix();
  return mult.cwiseProduct(cumulative_adjoint(r));
}

Vector CubicVolterra::apply_second(const Vector& x, const Vector& h,
                                   const Vector& w) const {
  return cumulative(60.0 * x.cwiseProduct(h).cwiseProduct(w));
}

Vector CubicVolterra::second_adjoint_action(const Vector& x, const Vector& r,
                                            const Vector& h) const {
  return 60.0 * x.cwiseProduct(h).cwiseProduct(cumulative_adjoint(r));
}

NoisySetup make_noisy(const ForwardProblem& p, const Vector& x_true,
                      Scalar delta_rel, std::uint64_t seed) {
  if (delta_rel < 0) throw ConfigError("make_noisy: delta_rel must be >= 0");
  NoisySetup setup;
  setup.delta_rel = delta_rel;
  setup.seed = seed;
  auto w_in = p.weights_in();
  auto w_out = p.weights_out();
  setup.x_true = WeightedVector{x_true, w_in};
  Vector y = p.eval(x_true);
  setup.y_exact = WeightedVector{y, w_out};

  Vector e = Vector::Zero(p.dim_out());
  if (delta_rel > 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Scalar> dist(-1.0, 1.0);
    for (Index i = 0; i < e.size(); ++i) e(i) = dist(rng);
    const Scalar target = (delta_rel / 100.0) * weighted_norm(y, *w_out);
    const Scalar en = weighted_norm(e, *w_out);
    if (en > 0) e *= target / en;
  }
  setup.y_delta = WeightedVector{y + e, w_out};
  const Scalar noise = weighted_norm(e, *w_out);
  setup.delta_abs = 0.5 * noise * noise;
  return setup;
}

Example1D::Example1D(Scalar C, Scalar D, Scalar x_true)
    : C_(C), D_(D), x_true_(x_true) {
  if (x_true <= 0) throw ConfigError("Example1D: x_true must be positive");
  const Scalar xt2 = x_true * x_true;
  if (!(C > 1.0 / (12.0 * xt2) && C < 1.0 / (4.0 * xt2)))
    throw ConfigError("Example1D: C outside (1/(12 x^2), 1/(4 x^2))");
  const Scalar d_min = (48.0 * C * xt2 - 1.0) /
                       (12.0 * std::pow(1.0 / (2.0 * std::sqrt(C)) - x_true, 2));
  if (!(D > d_min))
    throw ConfigError("Example1D: D below the positivity threshold");
  weights_ = std::make_shared<const Vector>(Vector::Ones(1));
}

Scalar Example1D::value(const Vector& x) const {
  const Scalar d = x(0) - x_true_;
  const Scalar m = std::min<Scalar>(0, x(0));
  return 0.5 * d * d - C_ * d * d * d * d + D_ * m * m * m * m;
}

Vector Example1D::gradient(const Vector& x) const {
  const Scalar d = x(0) - x_true_;
  const Scalar m = std::min<Scalar>(0, x(0));
  Vector g(1);
  g(0) = d - 4.0 * C_ * d * d * d + 4.0 * D_ * m * m * m;
  return g;
}

Scalar Example1D::second_derivative(Scalar x) const {
  const Scalar d = x - x_true_;
  const Scalar m = std::min<Scalar>(0, x);
  return 1.0 - 12.0 * C_ * d * d + 12.0 * D_ * m * m;
}

Vector Example1D::hessian_apply(const Vector& x, const Vector& w) const {
  Vector out(1);
  out(0) = second_derivative(x(0)) * w(0);
  return out;
}

}  // namespace qtrust
