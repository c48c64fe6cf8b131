#pragma once

#include "qtrust/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>

namespace qtrust {

/// Coefficient vector equipped with a quadrature-weighted inner product,
/// i.e. an element of the discrete L^2 space X_n.
struct WeightedVector {
  Vector coeffs;
  std::shared_ptr<const Vector> weights;
};

/// Composite trapezoid weights h*(1/2, 1, ..., 1, 1/2) on an equidistant
/// grid of n nodes spanning [0, interval_length]. Throws ConfigError for n < 2.
Vector trapezoid_weights(Index n, Scalar interval_length);

Scalar weighted_inner(const Vector& x, const Vector& y, const Vector& w);
Scalar weighted_norm(const Vector& x, const Vector& w);

Scalar weighted_inner(const WeightedVector& x, const WeightedVector& y);
Scalar weighted_norm(const WeightedVector& x);

/// Change of variables v = W^{1/2} x, so that ||x||_n = ||v||_2.
Vector weighted_to_euclidean(const WeightedVector& x);
WeightedVector euclidean_to_weighted(const Vector& v,
                                     std::shared_ptr<const Vector> weights);

/// Matrix-free symmetric linear operator on R^dim (Euclidean inner product).
struct SymOperator {
  Index dim = 0;
  std::function<Vector(const Vector&)> apply;
};

struct EigenPair {
  Scalar value = 0;
  Vector vector;
  Scalar residual_norm = 0;
  long mv_count = 0;
};

class EigNonConvergence : public NonConvergence {
 public:
  EigNonConvergence(const std::string& msg, EigenPair best_iterate)
      : NonConvergence(msg), best(std::move(best_iterate)) {}
  EigenPair best;
};

/// Operators at or below this dimension are materialized and handled by a
/// dense symmetric eigendecomposition; larger ones go through Lanczos.
inline constexpr Index kDenseThreshold = 200;

/// Materializes A column by column (dim operator applications).
Matrix materialize(const SymOperator& A);

/// Smallest eigenpair of a symmetric operator, using only operator
/// applications. The eigenvector sign is normalized so that its first
/// significant entry is positive. Throws EigNonConvergence (carrying the
/// best iterate) if max_mv applications do not reach tol_eig.
EigenPair smallest_eigenpair(const SymOperator& A, Scalar tol_eig = 1e-10,
                             long max_mv = 400000, std::uint64_t seed = 7);

/// Checks |<Au,v> - <u,Av>| <= tol * ||u|| ||v|| on seeded random pairs.
bool symmetry_probe(const SymOperator& A, Scalar tol = 1e-8, int pairs = 10,
                    std::uint64_t seed = 11);

/// Conjugate gradients for SPD operators. If deflate is nonempty, the
/// right-hand side and all iterates are kept orthogonal to it (solve in the
/// complement of a known null direction).
Vector cg_solve(const SymOperator& A, const Vector& b, Scalar tol,
                long max_iter, const Vector* deflate = nullptr);

/// Flips v in place so its first significant entry is positive.
void fix_sign(Vector& v);

}  // namespace qtrust
