#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qtrust/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <memory>
#include <random>

using namespace qtrust;

namespace {

SymOperator dense_op(const Matrix& A) {
  return SymOperator{A.rows(), [A](const Vector& v) { return Vector(A * v); }};
}

Matrix random_symmetric(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> nd;
  Matrix M(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) M(i, j) = nd(rng);
  return 0.5 * (M + M.transpose());
}

}  // namespace

TEST_CASE("trapezoid weights match closed forms") {
  Vector w2 = trapezoid_weights(2, 1.0);
  CHECK(w2.size() == 2);
  CHECK(w2(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w2(1) == doctest::Approx(0.5).epsilon(1e-15));

  Vector w5 = trapezoid_weights(5, 2.0);  // h = 0.5
  CHECK(w5(0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w5(2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w5(4) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w5.sum() == doctest::Approx(2.0).epsilon(1e-15));

  Vector w100 = trapezoid_weights(100, 1.0);
  CHECK(w100.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(w100(1) == doctest::Approx(1.0 / 99.0).epsilon(1e-15));

  CHECK_THROWS_AS(trapezoid_weights(1, 1.0), ConfigError);
}

TEST_CASE("weighted inner product and norm") {
  auto w = std::make_shared<Vector>(trapezoid_weights(4, 1.0));
  Vector x = Vector::LinSpaced(4, 1.0, 4.0);
  Vector y = Vector::Constant(4, 2.0);
  Scalar expect = 0;
  for (Index i = 0; i < 4; ++i) expect += (*w)(i)*x(i) * y(i);
  CHECK(weighted_inner(x, y, *w) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(weighted_norm(x, *w) ==
        doctest::Approx(std::sqrt(weighted_inner(x, x, *w))).epsilon(1e-15));

  WeightedVector wx{x, w}, wy{y, w};
  CHECK(weighted_inner(wx, wy) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("euclidean transform is a round-trip isometry") {
  auto w = std::make_shared<Vector>(trapezoid_weights(30, 1.0));
  std::mt19937_64 rng(5);
  std::normal_distribution<Scalar> nd;
  Vector x(30);
  for (Index i = 0; i < 30; ++i) x(i) = nd(rng);
  WeightedVector wx{x, w};

  Vector v = weighted_to_euclidean(wx);
  CHECK(v.norm() == doctest::Approx(weighted_norm(wx)).epsilon(1e-14));
  WeightedVector back = euclidean_to_weighted(v, w);
  CHECK((back.coeffs - x).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("smallest eigenpair on small dense operators") {
  SUBCASE("identity") {
    EigenPair e = smallest_eigenpair(dense_op(Matrix::Identity(6, 6)));
    CHECK(e.value == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("diag(-1, 2)") {
    Matrix A(2, 2);
    A << -1, 0, 0, 2;
    EigenPair e = smallest_eigenpair(dense_op(A));
    CHECK(e.value == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::abs(e.vector(0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e.vector(0) > 0);  // sign normalization
  }
  SUBCASE("random 50x50 against Eigen") {
    Matrix A = random_symmetric(50, 17);
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    EigenPair e = smallest_eigenpair(dense_op(A));
    CHECK(e.value == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-10));
    CHECK((A * e.vector - e.value * e.vector).norm() < 1e-8 * A.norm());
  }
}

TEST_CASE("smallest eigenpair via Lanczos above the dense threshold") {
  const Index n = 2 * kDenseThreshold;
  Vector d = Vector::LinSpaced(n, -3.0, 50.0);
  SymOperator A{n, [d](const Vector& v) { return Vector(d.cwiseProduct(v)); }};
  EigenPair e = smallest_eigenpair(A);
  CHECK(e.value == doctest::Approx(d.minCoeff()).epsilon(1e-9));
  CHECK(e.mv_count > 0);
  // Rayleigh quotient of the returned vector matches the eigenvalue
  const Scalar rq = e.vector.dot(A.apply(e.vector)) / e.vector.squaredNorm();
  CHECK(rq == doctest::Approx(e.value).epsilon(1e-9));
}

TEST_CASE("symmetry probe") {
  Matrix A = random_symmetric(20, 3);
  CHECK(symmetry_probe(dense_op(A)));
  Matrix B = A;
  B(3, 7) += 1.0;  // break symmetry
  CHECK_FALSE(symmetry_probe(dense_op(B)));
}

TEST_CASE("cg solve on an SPD system, with and without deflation") {
  Matrix A = random_symmetric(25, 9);
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  A += (1.0 - es.eigenvalues()(0)) * Matrix::Identity(25, 25);  // lmin = 1

  std::mt19937_64 rng(2);
  std::normal_distribution<Scalar> nd;
  Vector b(25);
  for (Index i = 0; i < 25; ++i) b(i) = nd(rng);

  Vector x = cg_solve(dense_op(A), b, 1e-12, 2000);
  CHECK((A * x - b).norm() < 1e-10 * b.norm());

  // singular system solved in the orthogonal complement of the null vector
  Eigen::SelfAdjointEigenSolver<Matrix> es2(A);
  Vector v0 = es2.eigenvectors().col(0);
  Matrix S = A - es2.eigenvalues()(0) * Matrix::Identity(25, 25);
  Vector b_perp = b - v0.dot(b) * v0;
  Vector y = cg_solve(dense_op(S), b_perp, 1e-12, 5000, &v0);
  CHECK(std::abs(v0.dot(y)) < 1e-10);
  CHECK((S * y - b_perp).norm() < 1e-9 * (1 + b_perp.norm()));
}

TEST_CASE("materialize reproduces the dense matrix") {
  Matrix A = random_symmetric(8, 21);
  CHECK((materialize(dense_op(A)) - A).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("fix_sign") {
  Vector v(3);
  v << -0.3, 0.2, 0.9;
  fix_sign(v);
  CHECK(v(0) > 0);
  Vector z(3);
  z << 0.0, -1e-20, -0.5;
  fix_sign(z);
  CHECK(z(2) > 0);  // leading entries below tolerance are skipped
}
