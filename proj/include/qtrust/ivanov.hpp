#pragma once

#include "qtrust/model.hpp"
#include "qtrust/residual.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace qtrust {

/// Noise level and discrepancy tolerances.
struct Tolerances {
  Scalar delta = 0;      // noise level, 1/2 ||y - y^delta||_n^2 <= delta
  Scalar tau = 1.5;      // discrepancy factor, > 1
  Scalar eta = 0;        // inexact-minimization gap
  Scalar eta_lower = 0;
  Scalar eta_upper = 0;

  void validate() const;
  Scalar upper_bound() const { return tau * delta + eta_upper; }
  Scalar lower_bound() const { return delta + eta_lower; }
  Scalar target() const {
    return 0.5 * ((tau + 1) * delta + eta_upper + eta_lower);
  }
};

struct InnerOpts {
  int max_inner = 400;
  Scalar eps_step = 1e-9;
  Scalar eps_kkt = 1e-8;
  int patience = 15;
  // Nonnegative values stop the iteration as soon as the residual falls to
  // the target, before full stationarity (discrepancy-style early exit).
  Scalar res_target = -1;
  bool keep_iterates = false;
  TrsOptions trs;
};

/// Per-iteration feed for history recording: inner index k (1-based), the
/// new iterate, its ball-constraint multiplier, residual value, TRS solve
/// diagnostics and wall time of this iteration.
struct InnerIterationInfo {
  int k;
  const Vector& x;
  Scalar lambda;
  Scalar residual;
  const TrsSolution& trs;
  Scalar wall_ms;
};
using InnerCallback = std::function<void(const InnerIterationInfo&)>;

struct InnerState {
  WeightedVector x_k;
  Scalar lambda_k = 0;
  Scalar residual = 0;
  int k = 0;
  bool converged = false;
  long n_trs = 0;
  long n_eig_mv = 0;
  long n_indefinite = 0;  // subproblems with indefinite Hessian
  std::vector<Vector> iterates;  // filled when InnerOpts::keep_iterates
  std::vector<Scalar> iterate_lambdas;
};

class StagnationError : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

/// Newton-type SQP loop at fixed radius rho: repeatedly minimizes the
/// quadratic Taylor model over the ball via the TRS solver.
InnerState inner_solve(const ResidualFunction& rf, Scalar rho, const Vector& x0,
                       const InnerOpts& opts = {}, InnerCallback cb = {});

/// History row, one per inner iteration of the full outer run.
struct ExperimentRecord {
  int l = 0;
  int k = 0;
  Scalar rho = 0;
  Scalar residual = 0;
  std::optional<Scalar> error_to_truth;
  Scalar lambda_rho = 0;
  Scalar min_eig_lagrangian = 0;
  long n_trs_solves = 0;
  long n_eig_mv = 0;
  Scalar wall_time_ms = 0;
};

struct OuterOpts {
  int max_outer = 60;
  // Retries of one radius (enlarged by 1.2 each) when the inner solve fails
  // or ends where the shifted Lagrangian Hessian is not positive definite.
  int max_radius_retries = 12;
  Scalar lambda_floor = 1e-12;
  InnerOpts inner;
  bool record_history = true;
  std::optional<Vector> x_truth;  // enables the error column
};

struct OuterState {
  Scalar rho_l = 0;
  WeightedVector x_hat;
  Scalar lambda_rho = 0;
  Scalar residual = 0;
  int l = 0;
  bool converged = false;
  long n_trs = 0;
  long n_eig_mv = 0;
  long n_indefinite = 0;
  std::vector<ExperimentRecord> history;
};

class OuterNonConvergence : public NonConvergence {
 public:
  OuterNonConvergence(const std::string& msg, OuterState state)
      : NonConvergence(msg), last(std::move(state)) {}
  OuterState last;
};

/// Discrepancy-principle outer loop: warm-started inner solves and the
/// Newton update rho_{l+1} = rho_l + (r - r_d)/lambda_rho, safeguarded by
/// radius doubling when the multiplier degenerates.
OuterState outer_solve(const ResidualFunction& rf, const Tolerances& tol,
                       Scalar rho1, const OuterOpts& opts = {});

struct PosdefCheck {
  Scalar lambda_rho = 0;
  Scalar min_eig = 0;  // smallest eigenvalue of the shifted Lagrangian Hessian
  bool on_boundary = false;
};

/// Closed-form multiplier lambda_rho = -<r'(x), x>_n / rho at a boundary
/// point and the smallest eigenvalue of r''(x) + lambda_rho I in Euclidean
/// coordinates. Interior points are flagged and reported with lambda_rho = 0.
PosdefCheck check_posdef(const ResidualFunction& rf, const Vector& x,
                         Scalar rho);

}  // namespace qtrust
