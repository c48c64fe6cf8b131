#pragma once

#include "qtrust/linalg.hpp"

#include <limits>
#include <utility>
#include <vector>

namespace qtrust {

/// min x^T A x - 2 a^T x  s.t.  x^T x <= s^2, with A possibly indefinite.
struct TrsProblem {
  SymOperator A;
  Vector a;
  Scalar s = 0;
};

struct TrsTracePoint {
  Scalar t;
  Scalar lambda_min;  // smallest eigenvalue of D(t)
  Scalar psi;
  Scalar k;  // (s^2+1) * lambda_min(D(t)) - t, a lower bound on the optimum
};

struct TrsSolution {
  Vector x;
  Scalar lambda = 0;  // multiplier of the ball constraint, >= 0
  Scalar objective = 0;
  bool on_boundary = false;
  bool hard_case = false;
  int iterations = 0;
  long eig_mv_count = 0;
  Scalar min_eig_A = 0;  // smallest eigenvalue of A (diagnostic)
  Scalar t_star = std::numeric_limits<Scalar>::quiet_NaN();  // root location
  std::vector<TrsTracePoint> trace;  // filled when TrsOptions::debug_trace
};

struct TrsOptions {
  Scalar tol_root = -1;  // < 0 means 1e-10 * (1 + s)
  // Finite values seed the root search (e.g. t_star of a nearby instance).
  Scalar t_init = std::numeric_limits<Scalar>::quiet_NaN();
  int max_iter = 120;
  bool debug_trace = false;
  Scalar tol_eig = 1e-10;
  long max_mv = 400000;
  std::uint64_t seed = 13;
};

/// Eigenvector first components below this are treated as hard-case territory.
inline constexpr Scalar kY0Floor = 1e-8;

class HardCaseProximity : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

/// The symmetric bordered operator D(t) = [[t, -a^T], [-a, A]] on R^{n+1}.
SymOperator bordered_operator(Scalar t, const TrsProblem& prob);

/// k(t) = (s^2+1) * lambda_min(D(t)) - t, together with the smallest
/// eigenpair of D(t) (sign-fixed so that y0 >= 0).
std::pair<Scalar, EigenPair> eval_k(Scalar t, const TrsProblem& prob);

/// psi(t) = sqrt(s^2+1) - 1/y0(t). Throws HardCaseProximity when
/// y0(t) <= kY0Floor.
Scalar eval_psi(Scalar t, const TrsProblem& prob);

/// Parametrized-eigenvalue solver: safeguarded inverse
/// interpolation on psi, with an interior shortcut and an explicit
/// hard-case branch. Throws NonConvergence (best iterate described in the
/// message) when the iteration budget is exhausted.
TrsSolution solve_trs(const TrsProblem& prob, const TrsOptions& opts = {});

/// Dense reference solver: eigendecomposition of A plus a monotone secular
/// equation in lambda. Deterministic; dim <= 500.
TrsSolution solve_trs_oracle(const TrsProblem& prob);

}  // namespace qtrust
