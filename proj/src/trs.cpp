#include "qtrust/trs.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>

namespace qtrust {

namespace {
constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

void check_problem(const TrsProblem& p) {
  if (p.s <= 0) throw ConfigError("TrsProblem: radius s must be positive");
  if (p.a.size() != p.A.dim)
    throw ConfigError("TrsProblem: dim(a) must equal dim(A)");
}

void fix_y0_sign(Vector& y) {
  if (y(0) < 0)
    y = -y;
  else if (y(0) == 0)
    fix_sign(y);
}

// Caches one eigendecomposition of A for small problems; in that basis
// D(t) is an arrowhead matrix whose smallest eigenpair follows from a
// one-dimensional secular equation, so varying t costs O(n) per query.
class BorderedEig {
 public:
  BorderedEig(const TrsProblem& p, const TrsOptions& o) : p_(p), o_(o) {
    dense_ = p.A.dim <= kDenseThreshold;
    if (dense_) {
      Ad_ = materialize(p.A);
      mv_ += p.A.dim;
      Eigen::SelfAdjointEigenSolver<Matrix> es(Ad_);
      evals_ = es.eigenvalues();
      Q_ = es.eigenvectors();
      b_ = Q_.transpose() * p_.a;
      mv_ += p.A.dim;
      // Components of b at rounding-noise level act as exact zeros. Keeping
      // them would give the secular equation poles whose residues are far
      // below resolvable accuracy, so deflate them up front.
      const Scalar btol = 1e-13 * b_.norm();
      for (Index i = 0; i < b_.size(); ++i)
        if (std::abs(b_(i)) <= btol) b_(i) = 0;
    }
  }

  EigenPair eig_A() {
    if (dense_) {
      EigenPair r;
      r.value = evals_(0);
      r.vector = Q_.col(0);
      fix_sign(r.vector);
      r.residual_norm = (Ad_ * r.vector - r.value * r.vector).norm();
      return r;
    }
    EigenPair r = smallest_eigenpair(p_.A, o_.tol_eig, o_.max_mv, o_.seed);
    mv_ += r.mv_count;
    return r;
  }

  // Smallest eigenpair of D(t), first component made nonnegative.
  EigenPair eig_D(Scalar t) {
    EigenPair r;
    if (dense_) {
      r = eig_D_secular(t);
      ++mv_;
    } else {
      r = smallest_eigenpair(bordered_operator(t, p_), o_.tol_eig, o_.max_mv,
                             o_.seed);
      mv_ += r.mv_count;
    }
    fix_y0_sign(r.vector);
    return r;
  }

  // Interior candidate x = A^{-1} a; only called when lambda_min(A) > 0.
  std::optional<Vector> solve_interior() {
    if (dense_) {
      Eigen::LDLT<Matrix> ldlt(Ad_);
      if (ldlt.info() != Eigen::Success) return std::nullopt;
      return ldlt.solve(p_.a);
    }
    Vector x = cg_solve(p_.A, p_.a, 1e-13, 20 * p_.A.dim + 200);
    mv_ += 20 * p_.A.dim + 200;  // upper bound, cg does not report
    const Scalar res = (p_.A.apply(x) - p_.a).norm();
    ++mv_;
    if (res > 1e-10 * (1 + p_.a.norm())) return std::nullopt;
    return x;
  }

  // Hard case: minimum-norm solution of (A - lambda_min I) x = a restricted
  // to the complement of the smallest eigenspace.
  Vector solve_deflated(Scalar lmin, const Vector& vmin) {
    if (dense_) {
      const Vector& d = evals_;
      const Scalar scale = std::max(std::abs(d(0)), std::abs(d(d.size() - 1)));
      const Scalar gap = 1e-12 * (1 + scale);
      Vector c = Vector::Zero(d.size());
      for (Index i = 0; i < d.size(); ++i)
        if (d(i) - lmin > gap) c(i) = b_(i) / (d(i) - lmin);
      return Q_ * c;
    }
    SymOperator shifted{p_.A.dim, [this, lmin](const Vector& v) {
                          return Vector(p_.A.apply(v) - lmin * v);
                        }};
    return cg_solve(shifted, p_.a, 1e-12, 40 * p_.A.dim + 400, &vmin);
  }

  long mv() const { return mv_; }
  void count(long n) { mv_ += n; }

 private:
  // In the eigenbasis of A the bordered matrix is [[t, -b^T], [-b, diag(d)]]
  // with b = Q^T a. Its eigenvalues below min{d_i : b_i != 0} are roots of
  // the decreasing secular function f(s) = t - s - sum_i b_i^2 / (d_i - s);
  // components with b_i = 0 contribute d_i itself as an eigenvalue.
  EigenPair eig_D_secular(Scalar t) const {
    const Index n = evals_.size();
    Scalar d_active = kInf;
    Scalar d_deflated = kInf;
    Index i_deflated = -1;
    for (Index i = 0; i < n; ++i) {
      if (b_(i) != 0) {
        d_active = std::min(d_active, evals_(i));
      } else if (evals_(i) < d_deflated) {
        d_deflated = evals_(i);
        i_deflated = i;
      }
    }

    EigenPair r;
    if (d_active == kInf) {
      // a vanished entirely: D(t) is block diagonal.
      if (t <= d_deflated) {
        r.value = t;
        r.vector = Vector::Zero(n + 1);
        r.vector(0) = 1;
      } else {
        r.value = d_deflated;
        r.vector = Vector::Zero(n + 1);
        r.vector(1 + i_deflated) = 1;
      }
      r.residual_norm = 0;
      return r;
    }

    auto f_df = [&](Scalar s) {
      Scalar f = t - s, df = -1;
      for (Index i = 0; i < n; ++i) {
        if (b_(i) == 0) continue;
        const Scalar den = evals_(i) - s;
        const Scalar q = b_(i) / den;
        f -= b_(i) * q;
        df -= q * q;
      }
      return std::pair<Scalar, Scalar>{f, df};
    };

    const Scalar bnorm = b_.norm();
    const Scalar hi0 = d_active;
    Scalar lo = std::min(t, d_active) - bnorm - 1;
    while (f_df(lo).first <= 0) lo = hi0 - 2 * (hi0 - lo);

    // Safeguarded Newton on the monotone branch left of d_active.
    Scalar hi = hi0;
    Scalar s = lo;
    for (int it = 0; it < 200; ++it) {
      auto [f, df] = f_df(s);
      if (f > 0)
        lo = s;
      else
        hi = s;
      Scalar next = s - f / df;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - s) <= 4e-16 * (1 + std::abs(next))) {
        s = next;
        break;
      }
      s = next;
    }

    if (d_deflated < s) {
      r.value = d_deflated;
      r.vector = Vector::Zero(n + 1);
      r.vector.tail(n) = Q_.col(i_deflated);
      r.residual_norm = 0;
      return r;
    }

    Vector z(n);
    for (Index i = 0; i < n; ++i)
      z(i) = b_(i) == 0 ? 0 : b_(i) / (evals_(i) - s);
    const Scalar nrm = std::sqrt(1 + z.squaredNorm());
    r.value = s;
    r.vector = Vector(n + 1);
    r.vector(0) = 1 / nrm;
    r.vector.tail(n) = (Q_ * z) / nrm;
    r.residual_norm = std::abs(f_df(s).first) / nrm;
    return r;
  }

  const TrsProblem& p_;
  const TrsOptions& o_;
  bool dense_ = false;
  Matrix Ad_;
  Vector evals_;
  Vector b_;
  Matrix Q_;
  long mv_ = 0;
};

struct PsiPoint {
  Scalar t = 0;
  Scalar lambda_min = 0;
  Scalar y0 = 0;
  Scalar psi = -kInf;  // -inf when y0 <= kY0Floor
  Vector y;
  bool valid = false;
};

PsiPoint eval_point(BorderedEig& be, const TrsProblem& p, Scalar t) {
  EigenPair e = be.eig_D(t);
  PsiPoint pt;
  pt.t = t;
  pt.lambda_min = e.value;
  pt.y0 = e.vector(0);
  pt.y = std::move(e.vector);
  pt.valid = pt.y0 > kY0Floor;
  if (pt.valid) pt.psi = std::sqrt(p.s * p.s + 1) - 1.0 / pt.y0;
  return pt;
}

}  // namespace

SymOperator bordered_operator(Scalar t, const TrsProblem& prob) {
  check_problem(prob);
  const Index n = prob.A.dim;
  return SymOperator{n + 1, [t, &prob, n](const Vector& y) {
                       Vector out(n + 1);
                       const Scalar y0 = y(0);
                       const Vector z = y.tail(n);
                       out(0) = t * y0 - prob.a.dot(z);
                       out.tail(n) = prob.A.apply(z) - y0 * prob.a;
                       return out;
                     }};
}

std::pair<Scalar, EigenPair> eval_k(Scalar t, const TrsProblem& prob) {
  check_problem(prob);
  EigenPair e = smallest_eigenpair(bordered_operator(t, prob));
  fix_y0_sign(e.vector);
  const Scalar k = (prob.s * prob.s + 1) * e.value - t;
  return {k, std::move(e)};
}

Scalar eval_psi(Scalar t, const TrsProblem& prob) {
  auto [k, e] = eval_k(t, prob);
  (void)k;
  const Scalar y0 = e.vector(0);
  if (y0 <= kY0Floor)
    throw HardCaseProximity("eval_psi: y0(t) at or below floor");
  return std::sqrt(prob.s * prob.s + 1) - 1.0 / y0;
}

TrsSolution solve_trs(const TrsProblem& prob, const TrsOptions& opts) {
  check_problem(prob);
  const Index n = prob.A.dim;
  const Scalar s = prob.s;
  const Scalar tol_root = opts.tol_root > 0 ? opts.tol_root : 1e-10 * (1 + s);
  const Scalar tol_tight = std::max(1e-14, 1e-3 * tol_root);

  BorderedEig be(prob, opts);
  EigenPair eigA = be.eig_A();
  const Scalar lmin = eigA.value;

  TrsSolution sol;
  sol.min_eig_A = lmin;

  auto finish = [&](Vector x, Scalar lambda, bool boundary, bool hard,
                    int iters) {
    sol.objective = x.dot(prob.A.apply(x)) - 2 * prob.a.dot(x);
    be.count(1);
    sol.x = std::move(x);
    sol.lambda = std::max<Scalar>(0, lambda);
    sol.on_boundary = boundary;
    sol.hard_case = hard;
    sol.iterations = iters;
    sol.eig_mv_count = be.mv();
    return sol;
  };

  const Scalar anorm = prob.a.norm();

  // Degenerate linear term: pure eigenvalue problem.
  if (anorm <= 1e-14 * (1 + std::abs(lmin))) {
    if (lmin >= 0) return finish(Vector::Zero(n), 0, false, false, 0);
    Vector x = s * eigA.vector;
    return finish(std::move(x), -lmin, true, true, 0);
  }

  // Interior shortcut for positive definite A.
  if (lmin > 0) {
    if (auto xi = be.solve_interior()) {
      const Scalar nx = xi->norm();
      if (nx < s * (1 - 1e-12)) return finish(std::move(*xi), 0, false, false, 0);
      if (nx <= s * (1 + 1e-12)) {
        *xi *= s / nx;
        return finish(std::move(*xi), 0, true, false, 0);
      }
    }
  }

  // Root finding for psi(t) = sqrt(s^2+1) - 1/y0(t). psi is nonincreasing:
  // positive for t small, negative (or y0 collapsed) for t large.
  int iters = 0;
  auto record = [&](const PsiPoint& pt) {
    if (opts.debug_trace)
      sol.trace.push_back({pt.t, pt.lambda_min,
                           pt.valid ? pt.psi : -kInf,
                           (s * s + 1) * pt.lambda_min - pt.t});
  };

  const Scalar t0 = std::isfinite(opts.t_init)
                        ? opts.t_init
                        : prob.a.squaredNorm() / s - lmin;
  PsiPoint p0 = eval_point(be, prob, t0);
  ++iters;
  record(p0);

  PsiPoint lo, hi;
  bool have_lo = false, have_hi = false;
  if (p0.valid && p0.psi > 0) {
    lo = p0;
    have_lo = true;
  } else {
    hi = p0;
    have_hi = true;
  }
  Scalar step = std::max<Scalar>(1.0, 0.1 * (std::abs(t0) + 1));
  while ((!have_lo || !have_hi) && iters < opts.max_iter) {
    Scalar t = have_lo ? lo.t + step : hi.t - step;
    step *= 2;
    PsiPoint pt = eval_point(be, prob, t);
    ++iters;
    record(pt);
    if (pt.valid && pt.psi > 0) {
      lo = pt;
      have_lo = true;
    } else {
      hi = pt;
      have_hi = true;
    }
  }
  if (!have_lo || !have_hi)
    throw NonConvergence("solve_trs: failed to bracket the psi root");

  PsiPoint best;  // best valid point by |psi|
  bool have_best = false;
  auto consider = [&](const PsiPoint& pt) {
    if (pt.valid && (!have_best || std::abs(pt.psi) < std::abs(best.psi))) {
      best = pt;
      have_best = true;
    }
  };
  consider(lo);
  consider(hi);

  // Illinois-type regula falsi on the bounded surrogate
  // f(t) = y0(t) - 1/sqrt(s^2+1), which has the same root and sign as psi
  // but stays finite (and O(1)) even where y0 collapses, so the interpolant
  // never degenerates the way psi's pole does.
  const Scalar y0_target = 1.0 / std::sqrt(s * s + 1);
  auto froot = [y0_target](const PsiPoint& pt) { return pt.y0 - y0_target; };
  bool hard = false;
  Scalar f_lo = froot(lo), f_hi = froot(hi);
  int last_side = 0;
  while (iters < opts.max_iter) {
    if (have_best && std::abs(best.psi) <= tol_tight) break;
    const Scalar width = hi.t - lo.t;
    if (width <= 1e-15 * (1 + std::abs(lo.t) + std::abs(hi.t))) {
      // Bracket collapsed. Either we already have an acceptable root, or the
      // discontinuity of y0 signals the hard case.
      if (have_best && std::abs(best.psi) <= tol_root) break;
      hard = true;
      break;
    }
    Scalar t;
    if (f_hi != f_lo) {
      t = hi.t - f_hi * (hi.t - lo.t) / (f_hi - f_lo);
      if (!(t > lo.t && t < hi.t)) t = 0.5 * (lo.t + hi.t);
    } else {
      t = 0.5 * (lo.t + hi.t);
    }
    PsiPoint pt = eval_point(be, prob, t);
    ++iters;
    record(pt);
    consider(pt);
    if (pt.valid && pt.psi > 0) {
      lo = pt;
      f_lo = froot(pt);
      if (last_side == 1) f_hi *= 0.5;
      last_side = 1;
    } else {
      hi = pt;
      f_hi = froot(pt);
      if (last_side == -1) f_lo *= 0.5;
      last_side = -1;
    }
  }

  if (!hard && (!have_best || std::abs(best.psi) > tol_root)) {
    if (have_best && std::abs(best.psi) <= 1e2 * tol_root) {
      // Accept a slightly loose root rather than fail outright.
    } else {
      throw NonConvergence("solve_trs: psi root finding exceeded max_iter");
    }
  }

  if (hard) {
    // For positive semidefinite A (lmin >= 0) the multiplier is zero and the
    // deflated solution is already optimal; the null direction adds nothing
    // to the objective, so it is left at zero for determinism.
    const Scalar shift = std::min<Scalar>(lmin, 0);
    const Scalar lambda = -shift;
    Vector xbar = be.solve_deflated(shift, eigA.vector);
    const Scalar nbar = xbar.norm();
    if (lambda == 0) {
      if (nbar > s * (1 + 1e-10))
        throw NonConvergence(
            "solve_trs: root finding stalled on a regular boundary instance");
      if (nbar > s) xbar *= s / nbar;
      return finish(std::move(xbar), 0, nbar >= s * (1 - 1e-12), true, iters);
    }
    const Scalar tau = std::sqrt(std::max<Scalar>(0, s * s - nbar * nbar));
    Vector x = xbar + tau * eigA.vector;
    return finish(std::move(x), lambda, true, true, iters);
  }

  // Recover x = z / y0, pin to the boundary, multiplier from the eigenvalue.
  Vector x = best.y.tail(n) / best.y0;
  const Scalar nx = x.norm();
  if (nx > 0) x *= s / nx;
  sol.t_star = best.t;
  return finish(std::move(x), -best.lambda_min, true, false, iters);
}

TrsSolution solve_trs_oracle(const TrsProblem& prob) {
  check_problem(prob);
  if (prob.A.dim > 500)
    throw ConfigError("solve_trs_oracle: dense oracle limited to dim <= 500");
  const Index n = prob.A.dim;
  const Scalar s = prob.s;

  Matrix Am = materialize(prob.A);
  Eigen::SelfAdjointEigenSolver<Matrix> es(Am);
  const Vector& d = es.eigenvalues();
  const Matrix& Q = es.eigenvectors();
  Vector b = Q.transpose() * prob.a;
  const Scalar lmin = d(0);

  TrsSolution sol;
  sol.min_eig_A = lmin;
  sol.eig_mv_count = n;

  auto finish = [&](Vector x, Scalar lambda, bool boundary, bool hard) {
    sol.objective = x.dot(Am * x) - 2 * prob.a.dot(x);
    sol.x = std::move(x);
    sol.lambda = std::max<Scalar>(0, lambda);
    sol.on_boundary = boundary;
    sol.hard_case = hard;
    return sol;
  };

  auto x_of = [&](Scalar lambda) {
    Vector c(n);
    for (Index i = 0; i < n; ++i) c(i) = b(i) / (d(i) + lambda);
    return Vector(Q * c);
  };
  auto norm_of = [&](Scalar lambda) {
    Scalar acc = 0;
    for (Index i = 0; i < n; ++i) {
      const Scalar r = b(i) / (d(i) + lambda);
      acc += r * r;
    }
    return std::sqrt(acc);
  };

  // Interior solution.
  if (lmin > 0) {
    const Scalar nx = norm_of(0);
    if (nx < s * (1 - 1e-14)) return finish(x_of(0), 0, false, false);
    if (nx <= s * (1 + 1e-14)) {
      Vector x = x_of(0);
      x *= s / nx;
      return finish(std::move(x), 0, true, false);
    }
  }

  const Scalar lam_lo = std::max<Scalar>(0, -lmin);
  const Scalar scale = std::max(std::abs(d(0)), std::abs(d(n - 1)));
  const Scalar cluster = 1e-10 * (1 + scale);

  // Hard case: a (numerically) orthogonal to the smallest eigenspace and the
  // deflated solution already inside the ball.
  Scalar b_min_sq = 0;
  for (Index i = 0; i < n; ++i)
    if (d(i) - lmin <= cluster) b_min_sq += b(i) * b(i);
  if (lmin <= 0 && b_min_sq <= std::pow(1e-13 * (1 + prob.a.norm()), 2)) {
    Vector c = Vector::Zero(n);
    for (Index i = 0; i < n; ++i)
      if (d(i) - lmin > cluster) c(i) = b(i) / (d(i) + lam_lo);
    Vector xbar = Q * c;
    if (xbar.norm() <= s * (1 + 1e-12)) {
      const Scalar tau =
          std::sqrt(std::max<Scalar>(0, s * s - xbar.squaredNorm()));
      Vector vmin = Q.col(0);
      fix_sign(vmin);
      return finish(xbar + tau * vmin, lam_lo, true, true);
    }
  }

  // Regular boundary case: ||x(lambda)|| = s has a unique root in
  // (lam_lo, inf); safeguarded Newton on 1/||x(lambda)|| - 1/s.
  Scalar lo = lam_lo;
  Scalar hi = lam_lo + std::max<Scalar>(1, prob.a.norm() / s);
  while (norm_of(hi) > s) hi = lam_lo + 2 * (hi - lam_lo);
  Scalar lambda = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const Scalar nx = norm_of(lambda);
    if (nx > s)
      lo = lambda;
    else
      hi = lambda;
    if (std::abs(nx - s) <= 1e-14 * s) break;
    // Newton step on f(l) = 1/||x(l)|| - 1/s
    Scalar dsum = 0;
    for (Index i = 0; i < n; ++i) {
      const Scalar den = d(i) + lambda;
      dsum += b(i) * b(i) / (den * den * den);
    }
    const Scalar fval = 1.0 / nx - 1.0 / s;
    const Scalar fprime = dsum / (nx * nx * nx);
    Scalar next = (fprime > 0) ? lambda - fval / fprime : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - lambda) <= 1e-16 * (1 + lambda)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  Vector x = x_of(lambda);
  const Scalar nx = x.norm();
  if (nx > 0) x *= s / nx;
  return finish(std::move(x), lambda, true, false);
}

}  // namespace qtrust
