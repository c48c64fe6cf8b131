#include "qtrust/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace qtrust {

Vector trapezoid_weights(Index n, Scalar interval_length) {
  if (n < 2) throw ConfigError("trapezoid_weights: grid needs n >= 2 nodes");
  if (interval_length <= 0)
    throw ConfigError("trapezoid_weights: interval_length must be positive");
  const Scalar h = interval_length / static_cast<Scalar>(n - 1);
  Vector w = Vector::Constant(n, h);
  w(0) *= 0.5;
  w(n - 1) *= 0.5;
  return w;
}

Scalar weighted_inner(const Vector& x, const Vector& y, const Vector& w) {
  return (w.array() * x.array() * y.array()).sum();
}

Scalar weighted_norm(const Vector& x, const Vector& w) {
  return std::sqrt((w.array() * x.array().square()).sum());
}

namespace {
void require_shared_weights(const WeightedVector& x, const WeightedVector& y) {
  if (x.weights != y.weights)
    throw ConfigError("WeightedVector: operands must share identical weights");
}
}  // namespace

Scalar weighted_inner(const WeightedVector& x, const WeightedVector& y) {
  require_shared_weights(x, y);
  return weighted_inner(x.coeffs, y.coeffs, *x.weights);
}

Scalar weighted_norm(const WeightedVector& x) {
  return weighted_norm(x.coeffs, *x.weights);
}

Vector weighted_to_euclidean(const WeightedVector& x) {
  return (x.weights->array().sqrt() * x.coeffs.array()).matrix();
}

WeightedVector euclidean_to_weighted(const Vector& v,
                                     std::shared_ptr<const Vector> weights) {
  if ((weights->array() <= 0).any())
    throw ConfigError("euclidean_to_weighted: weights must be positive");
  Vector coeffs = (v.array() / weights->array().sqrt()).matrix();
  return WeightedVector{std::move(coeffs), std::move(weights)};
}

Matrix materialize(const SymOperator& A) {
  Matrix M(A.dim, A.dim);
  Vector e = Vector::Zero(A.dim);
  for (Index j = 0; j < A.dim; ++j) {
    e(j) = 1.0;
    M.col(j) = A.apply(e);
    e(j) = 0.0;
  }
  return M;
}

void fix_sign(Vector& v) {
  const Scalar scale = v.cwiseAbs().maxCoeff();
  if (scale <= 0) return;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12 * scale) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

namespace {

EigenPair dense_smallest(const SymOperator& A) {
  Matrix M = materialize(A);
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  EigenPair p;
  p.value = es.eigenvalues()(0);
  p.vector = es.eigenvectors().col(0);
  fix_sign(p.vector);
  p.residual_norm = (M * p.vector - p.value * p.vector).norm();
  p.mv_count = A.dim;
  return p;
}

// One restarted Lanczos sweep with full reorthogonalization. Returns the
// smallest Ritz pair of the Krylov space built from v0.
EigenPair lanczos_sweep(const SymOperator& A, const Vector& v0, int m,
                        long& mv, long max_mv) {
  const Index n = A.dim;
  Matrix V(n, m);
  Vector alpha = Vector::Zero(m), beta = Vector::Zero(m);
  V.col(0) = v0.normalized();
  int j = 0;
  for (; j < m && mv < max_mv; ++j) {
    Vector w = A.apply(V.col(j));
    ++mv;
    alpha(j) = V.col(j).dot(w);
    w -= alpha(j) * V.col(j);
    if (j > 0) w -= beta(j - 1) * V.col(j - 1);
    for (int pass = 0; pass < 2; ++pass)
      w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
    beta(j) = w.norm();
    if (beta(j) < 1e-14) {
      ++j;
      break;
    }
    if (j + 1 < m) V.col(j + 1) = w / beta(j);
  }
  Matrix T = Matrix::Zero(j, j);
  for (int i = 0; i < j; ++i) {
    T(i, i) = alpha(i);
    if (i + 1 < j) T(i, i + 1) = T(i + 1, i) = beta(i);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(T);
  EigenPair p;
  p.value = es.eigenvalues()(0);
  p.vector = (V.leftCols(j) * es.eigenvectors().col(0)).normalized();
  p.residual_norm = std::numeric_limits<Scalar>::infinity();
  return p;
}

}  // namespace

EigenPair smallest_eigenpair(const SymOperator& A, Scalar tol_eig, long max_mv,
                             std::uint64_t seed) {
  if (A.dim < 1) throw ConfigError("smallest_eigenpair: dim must be >= 1");
  if (tol_eig <= 0) throw ConfigError("smallest_eigenpair: tol_eig must be > 0");
  if (A.dim <= kDenseThreshold) return dense_smallest(A);

  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> dist;
  Vector v(A.dim);
  for (Index i = 0; i < A.dim; ++i) v(i) = dist(rng);

  const int m = static_cast<int>(std::min<Index>(A.dim, 60));
  long mv = 0;
  EigenPair best;
  best.residual_norm = std::numeric_limits<Scalar>::infinity();
  while (mv < max_mv) {
    EigenPair p = lanczos_sweep(A, v, m, mv, max_mv);
    // true residual
    Vector r = A.apply(p.vector) - p.value * p.vector;
    ++mv;
    p.residual_norm = r.norm();
    if (p.residual_norm < best.residual_norm) best = p;
    if (best.residual_norm <= tol_eig) {
      fix_sign(best.vector);
      best.mv_count = mv;
      return best;
    }
    v = p.vector;
  }
  best.mv_count = mv;
  fix_sign(best.vector);
  throw EigNonConvergence("smallest_eigenpair: max_mv exceeded", best);
}

bool symmetry_probe(const SymOperator& A, Scalar tol, int pairs,
                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> dist;
  for (int k = 0; k < pairs; ++k) {
    Vector u(A.dim), v(A.dim);
    for (Index i = 0; i < A.dim; ++i) u(i) = dist(rng);
    for (Index i = 0; i < A.dim; ++i) v(i) = dist(rng);
    const Scalar lhs = A.apply(u).dot(v);
    const Scalar rhs = u.dot(A.apply(v));
    if (std::abs(lhs - rhs) > tol * u.norm() * v.norm()) return false;
  }
  return true;
}

Vector cg_solve(const SymOperator& A, const Vector& b, Scalar tol,
                long max_iter, const Vector* deflate) {
  auto project = [&](Vector& y) {
    if (deflate) y -= deflate->dot(y) * (*deflate);
  };
  Vector rhs = b;
  project(rhs);
  Vector x = Vector::Zero(A.dim);
  Vector r = rhs;
  Vector p = r;
  Scalar rr = r.squaredNorm();
  const Scalar stop = tol * tol * rhs.squaredNorm();
  for (long it = 0; it < max_iter && rr > stop; ++it) {
    Vector Ap = A.apply(p);
    project(Ap);
    const Scalar pAp = p.dot(Ap);
    if (pAp <= 0) break;  // lost positive definiteness, return best so far
    const Scalar alpha = rr / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    const Scalar rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return x;
}

}  // namespace qtrust
