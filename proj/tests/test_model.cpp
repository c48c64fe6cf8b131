#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qtrust/model.hpp"

#include <cmath>
#include <random>

using namespace qtrust;

namespace {

Vector random_vec(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> nd;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

struct Fixture {
  std::shared_ptr<CubicVolterra> problem = std::make_shared<CubicVolterra>(50);
  Vector y;
  ResidualFunctional rf;

  Fixture()
      : y(problem->eval(0.3 * random_vec(50, 77)) + 0.01 * random_vec(50, 78)),
        rf(problem, y) {}
};

}  // namespace

TEST_CASE("residual value against direct summation") {
  Fixture f;
  Vector x = 0.2 * random_vec(50, 1);
  Vector res = f.problem->eval(x) - f.y;
  const Vector& w = *f.problem->weights_out();
  Scalar direct = 0;
  for (Index i = 0; i < 50; ++i) direct += w(i) * res(i) * res(i);
  CHECK(f.rf.value(x) == doctest::Approx(0.5 * direct).epsilon(1e-14));

  // constant offset against constant data: r = 1/2 c^2 * (total weight)
  ResidualFunctional rc(f.problem, Vector::Zero(50));
  Vector xz = Vector::Zero(50);
  Vector yc = Vector::Constant(50, 2.0);
  ResidualFunctional rc2(f.problem, yc);
  CHECK(rc2.value(xz) ==
        doctest::Approx(0.5 * 4.0 * f.problem->weights_out()->sum())
            .epsilon(1e-14));
}

TEST_CASE("gradient and hessian actions match finite differences") {
  Fixture f;
  const Vector& w = *f.rf.weights();
  Vector x = 0.2 * random_vec(50, 2);
  Vector d = random_vec(50, 3);
  d /= weighted_norm(d, w);
  const Scalar eps = 1e-5;

  Vector g = f.rf.gradient(x);
  const Scalar fd =
      (f.rf.value(x + eps * d) - f.rf.value(x - eps * d)) / (2 * eps);
  CHECK(std::abs(fd - weighted_inner(g, d, w)) < 1e-8 * (1 + std::abs(fd)));

  Vector hd = f.rf.hessian_apply(x, d);
  Vector hfd =
      (f.rf.gradient(x + eps * d) - f.rf.gradient(x - eps * d)) / (2 * eps);
  CHECK(weighted_norm(hd - hfd, w) < 1e-6 * (1 + weighted_norm(hd, w)));
}

TEST_CASE("transformed hessian is Euclidean symmetric") {
  Fixture f;
  Vector x = 0.2 * random_vec(50, 4);
  QuadraticModel m = build_model(f.rf, x, 0.5);
  CHECK(symmetry_probe(m.hessian_action, 1e-10));
}

TEST_CASE("at x = 0 the hessian reduces to the Gauss-Newton term") {
  // F''(0)[h, w] = cumtrapz(60 * 0 * h * w) = 0, so hessian_apply equals
  // J* J applied in the weighted space.
  Fixture f;
  Vector x0 = Vector::Zero(50);
  Vector d = random_vec(50, 5);
  Vector hd = f.rf.hessian_apply(x0, d);
  Vector gn = f.problem->apply_jacobian_adjoint(
      x0, f.problem->apply_jacobian(x0, d));
  CHECK((hd - gn).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("model value equals TRS objective plus constant") {
  Fixture f;
  Vector x_k = 0.2 * random_vec(50, 6);
  const Scalar rho = 0.4;
  QuadraticModel m = build_model(f.rf, x_k, rho);
  ModelTrs t = build_trs(f.rf, x_k, rho);

  for (std::uint64_t s = 0; s < 4; ++s) {
    Vector x = 0.2 * random_vec(50, 100 + s);
    Vector v = t.to_v(x);
    const Scalar via_trs =
        v.dot(t.prob.A.apply(v)) - 2 * t.prob.a.dot(v) + t.constant;
    CHECK(via_trs == doctest::Approx(m.value(x)).epsilon(1e-12));
    CHECK((t.to_x(v) - x).lpNorm<Eigen::Infinity>() < 1e-13);
  }
  CHECK(t.prob.s == doctest::Approx(std::sqrt(rho)).epsilon(1e-15));
  CHECK(m.value(x_k) == doctest::Approx(f.rf.value(x_k)).epsilon(1e-12));
}

TEST_CASE("taylor remainder is third order") {
  Fixture f;
  Vector x_k = 0.2 * random_vec(50, 7);
  QuadraticModel m = build_model(f.rf, x_k, 0.5);
  Vector d = random_vec(50, 8);
  d /= weighted_norm(d, *f.rf.weights());

  Scalar prev_gap = -1;
  for (Scalar eps : {1e-1, 1e-2, 1e-3}) {
    Vector x = x_k + eps * d;
    const Scalar gap = std::abs(f.rf.value(x) - m.value(x));
    // cubic decay: each factor-10 step shrinks the gap by roughly 1000
    if (prev_gap > 0) CHECK(gap < prev_gap / 100.0);
    prev_gap = gap;
  }
}

TEST_CASE("multiplier scaling on the one-dimensional example") {
  // At rho = 0.25 the constrained minimizer sits on the boundary x = 0.5
  // with -r'(0.5) = lambda * 0.5, i.e. lambda = 0.8 independent of D.
  Example1D ex(0.2, 60.0, 1.0);
  const Scalar rho = 0.25;
  Vector x0 = (Vector(1) << 0.4).finished();
  ModelTrs t = build_trs(ex, x0, rho);
  TrsSolution sol = solve_trs(t.prob);
  Vector x = t.to_x(sol.x);
  const Scalar lambda = ModelTrs::lambda_scale * sol.lambda;
  // the TRS step of the quadratic model lands on the boundary
  CHECK(x(0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(lambda >= 0);
  // stationarity of the model: q'(x) + lambda x = 0
  const Scalar qprime =
      ex.gradient(x0)(0) + ex.second_derivative(x0(0)) * (x(0) - x0(0));
  CHECK(qprime + lambda * x(0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dense assembly of the transformed hessian matches the operator") {
  Fixture f;
  Vector x = 0.2 * random_vec(50, 9);
  QuadraticModel m = build_model(f.rf, x, 0.5);
  Matrix H = materialize(m.hessian_action);
  CHECK((H - H.transpose()).lpNorm<Eigen::Infinity>() <
        1e-10 * (1 + H.lpNorm<Eigen::Infinity>()));
  Vector d = random_vec(50, 10);
  CHECK((H * d - m.hessian_action.apply(d)).lpNorm<Eigen::Infinity>() <
        1e-12 * (1 + d.lpNorm<Eigen::Infinity>()));
}
