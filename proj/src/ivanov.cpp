#include "qtrust/ivanov.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace qtrust {

namespace {
Scalar elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<Scalar, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}
}  // namespace

void Tolerances::validate() const {
  if (delta <= 0) throw ConfigError("Tolerances: delta must be positive");
  if (tau <= 1) throw ConfigError("Tolerances: tau must exceed 1");
  if (eta < 0) throw ConfigError("Tolerances: eta must be >= 0");
  if (!(eta_lower < (tau - 1) * delta + eta_upper))
    throw ConfigError("Tolerances: need eta_lower < (tau-1) delta + eta_upper");
  if (!(delta + eta_lower - eta > 0))
    throw ConfigError("Tolerances: need delta + eta_lower - eta > 0");
}

InnerState inner_solve(const ResidualFunction& rf, Scalar rho, const Vector& x0,
                       const InnerOpts& opts, InnerCallback cb) {
  if (rho <= 0) throw ConfigError("inner_solve: rho must be positive");
  const Vector& w = *rf.weights();
  const Scalar nx0 = weighted_norm(x0, w);
  if (nx0 * nx0 > rho * (1 + 1e-10))
    throw ConfigError("inner_solve: starting point infeasible");

  InnerState st;
  st.x_k = WeightedVector{x0, rf.weights()};
  st.residual = rf.value(x0);
  if (opts.keep_iterates) {
    st.iterates.push_back(x0);
    st.iterate_lambdas.push_back(0);
  }

  Scalar best_res = st.residual;
  int no_improve = 0;
  Vector x = x0;
  // Proximal damping level, carried across iterations (Levenberg-Marquardt
  // style): the undamped model minimizer can raise the true residual far
  // from the fixed point, because the ball is not a local trust region
  // around x. A term mu/2 ||x' - x||^2 added to the model restores descent;
  // mu shrinks again when the model predicts well, so full Newton steps and
  // their local rate return near the fixed point.
  Scalar mu = 0;
  Scalar t_warm = std::numeric_limits<Scalar>::quiet_NaN();
  const Vector sw = w.array().sqrt().matrix();

  // The convergence test may fire on a tiny damped step at a point that is
  // not a fixed point of the undamped iteration. Probe the undamped model
  // step; adopt it when it still descends, otherwise stay put.
  auto probe_full_step = [&](const Vector& x_at,
                             Scalar res_at) -> std::optional<Vector> {
    ModelTrs mt = build_trs(rf, x_at, rho, 0);
    TrsOptions topts = opts.trs;
    topts.t_init = t_warm;
    TrsSolution ts = solve_trs(mt.prob, topts);
    if (std::isfinite(ts.t_star)) t_warm = ts.t_star;
    ++st.n_trs;
    st.n_eig_mv += ts.eig_mv_count;
    if (ts.min_eig_A < 0) ++st.n_indefinite;
    Vector xc = mt.to_x(ts.x);
    if (rf.value(xc) < res_at - 1e-13 * (1 + std::abs(res_at))) return xc;
    return std::nullopt;
  };

  // Second-order safeguard at a boundary stationary point: if the Lagrangian
  // Hessian has a negative eigenvalue, the point is a saddle of the
  // constrained problem. Walking the great circle along the tangential part
  // of the eigenvector strictly decreases the residual; returns the improved
  // point, or nothing when the point passes the curvature test.
  auto escape_saddle = [&](const Vector& x_at, Scalar lambda,
                           Scalar res_at) -> std::optional<Vector> {
    const Scalar nxsq = std::pow(weighted_norm(x_at, w), 2);
    if (std::abs(nxsq - rho) > 1e-6 * std::max<Scalar>(1, rho))
      return std::nullopt;
    QuadraticModel m = build_model(rf, x_at, rho);
    EigenPair e = smallest_eigenpair(m.hessian_action);
    st.n_eig_mv += e.mv_count;
    if (e.value + lambda >= -1e-7 * (1 + std::abs(lambda)))
      return std::nullopt;
    Vector v_at = sw.cwiseProduct(x_at);
    Vector q = e.vector - (e.vector.dot(v_at) / rho) * v_at;
    const Scalar nq = q.norm();
    if (nq < 1e-10) return std::nullopt;
    q /= nq;
    const Scalar sr = std::sqrt(rho);
    for (Scalar theta = 0.5; theta > 1e-8; theta *= 0.5) {
      for (Scalar sgn : {1.0, -1.0}) {
        Vector v_new = sr * (std::cos(theta) * (v_at / sr) +
                             std::sin(theta) * sgn * q);
        Vector x_try = v_new.cwiseQuotient(sw);
        if (rf.value(x_try) < res_at - 1e-14 * (1 + std::abs(res_at)))
          return x_try;
      }
    }
    return std::nullopt;
  };

  for (int k = 1; k <= opts.max_inner; ++k) {
    const auto t0 = std::chrono::steady_clock::now();

    Vector x_new;
    Scalar res_new = 0;
    Scalar lambda_full = 0;
    bool full_step = false;
    bool accepted = false;
    const Scalar mu_entry = mu;
    const Scalar accept = st.residual + 1e-12 * (1 + std::abs(st.residual));
    const Scalar g_scale =
        1e-3 * (1 + weighted_norm(rf.gradient(x), w)) / std::sqrt(rho);
    TrsSolution tsol;
    for (int trial = 0; trial < 24 && !accepted; ++trial) {
      const Scalar mu_used = mu;
      ModelTrs mt = build_trs(rf, x, rho, mu_used);
      TrsOptions topts = opts.trs;
      topts.t_init = t_warm;
      tsol = solve_trs(mt.prob, topts);
      if (std::isfinite(tsol.t_star)) t_warm = tsol.t_star;
      ++st.n_trs;
      st.n_eig_mv += tsol.eig_mv_count;
      if (mu_used == 0 && tsol.min_eig_A < 0) ++st.n_indefinite;
      Vector xc = mt.to_x(tsol.x);
      const Scalar rc = rf.value(xc);
      if (rc <= accept) {
        x_new = std::move(xc);
        res_new = rc;
        full_step = mu_used == 0;
        lambda_full = ModelTrs::lambda_scale * tsol.lambda;
        accepted = true;
        // Damped model value at the step, as the decrease prediction.
        const Scalar predicted =
            st.residual - (tsol.objective + mt.constant);
        const Scalar ratio =
            predicted > 0 ? (st.residual - rc) / predicted : 1;
        if (ratio > 0.7) {
          mu /= 8;
          if (mu < 0.25 * g_scale) mu = 0;
        } else if (ratio < 0.25) {
          mu = mu == 0 ? g_scale : 2 * mu;
        }
      } else {
        mu = mu == 0 ? g_scale : 8 * mu;
      }
    }
    if (!accepted) {
      // No damping level descends: x is numerically stationary.
      Vector g = rf.gradient(x);
      const Scalar nxsq = std::pow(weighted_norm(x, w), 2);
      const Scalar lam =
          nxsq > 0.5 * rho
              ? std::max<Scalar>(0, -weighted_inner(g, x, w) / rho)
              : 0;
      if (weighted_norm(g + lam * x, w) <=
          opts.eps_kkt * (1 + weighted_norm(g, w))) {
        if (mu_entry > 0) {
          if (auto xf = probe_full_step(x, st.residual)) {
            x = std::move(*xf);
            st.x_k.coeffs = x;
            st.residual = rf.value(x);
            best_res = st.residual;
            no_improve = 0;
            mu = 0;
            continue;
          }
        }
        if (auto xe = escape_saddle(x, lam, st.residual)) {
          x = std::move(*xe);
          st.x_k.coeffs = x;
          st.residual = rf.value(x);
          best_res = st.residual;
          no_improve = 0;
          mu = 0;
          continue;
        }
        st.lambda_k = lam;
        st.converged = true;
        return st;
      }
      throw StagnationError("inner_solve: no descending step found");
    }

    const Scalar step = weighted_norm(x_new - x, w);
    Vector g_new = rf.gradient(x_new);
    const Scalar wsq = std::pow(weighted_norm(x_new, w), 2);
    const Scalar lambda_new =
        full_step
            ? lambda_full
            : std::max<Scalar>(0, -weighted_inner(g_new, x_new, w) / rho);
    const Scalar kkt = weighted_norm(g_new + lambda_new * x_new, w) +
                       lambda_new * std::abs(wsq - rho) +
                       std::max<Scalar>(0, wsq - rho);
    const Scalar kkt_scale = 1 + weighted_norm(g_new, w);

    x = x_new;
    st.x_k.coeffs = x;
    st.lambda_k = lambda_new;
    st.residual = res_new;
    st.k = k;
    if (opts.keep_iterates) {
      st.iterates.push_back(x);
      st.iterate_lambdas.push_back(lambda_new);
    }
    if (cb) cb(InnerIterationInfo{k, x, lambda_new, res_new, tsol,
                                  elapsed_ms(t0)});

    if (opts.res_target >= 0 && st.residual <= opts.res_target) {
      st.converged = true;
      return st;
    }

    // Step-plus-KKT proxy for the unobservable optimality gap; a KKT
    // residual at machine level certifies the iterate on its own.
    const bool kkt_ok = kkt <= opts.eps_kkt * kkt_scale;
    const bool step_ok = step <= opts.eps_step * (1 + weighted_norm(x, w));
    if (kkt_ok && (step_ok || kkt <= 1e-12 * kkt_scale)) {
      if (!full_step) {
        if (auto xf = probe_full_step(x, st.residual)) {
          x = std::move(*xf);
          st.x_k.coeffs = x;
          st.residual = rf.value(x);
          best_res = st.residual;
          no_improve = 0;
          mu = 0;
          continue;
        }
      }
      if (auto xe = escape_saddle(x, lambda_new, st.residual)) {
        x = std::move(*xe);
        st.x_k.coeffs = x;
        st.residual = rf.value(x);
        best_res = st.residual;
        no_improve = 0;
        mu = 0;
        continue;
      }
      st.converged = true;
      return st;
    }

    if (res_new > best_res - 1e-15 * (1 + std::abs(best_res))) {
      if (++no_improve >= opts.patience)
        throw StagnationError("inner_solve: residual stagnated");
    } else {
      best_res = res_new;
      no_improve = 0;
    }
  }
  throw NonConvergence("inner_solve: max_inner reached without convergence");
}

PosdefCheck check_posdef(const ResidualFunction& rf, const Vector& x,
                         Scalar rho) {
  const Vector& w = *rf.weights();
  PosdefCheck out;
  const Scalar wsq = std::pow(weighted_norm(x, w), 2);
  out.on_boundary = std::abs(wsq - rho) <= 1e-6 * std::max<Scalar>(1, rho);
  if (out.on_boundary) {
    Vector g = rf.gradient(x);
    out.lambda_rho = -weighted_inner(g, x, w) / rho;
  }
  QuadraticModel m = build_model(rf, x, rho);
  EigenPair e = smallest_eigenpair(m.hessian_action);
  out.min_eig = e.value + out.lambda_rho;
  return out;
}

OuterState outer_solve(const ResidualFunction& rf, const Tolerances& tol,
                       Scalar rho1, const OuterOpts& opts) {
  tol.validate();
  if (rho1 <= 0) throw ConfigError("outer_solve: rho1 must be positive");

  const Scalar upper = tol.upper_bound();
  const Scalar r_d = tol.target();
  const Vector& w = *rf.weights();

  OuterState st;
  st.x_hat = WeightedVector{Vector::Zero(rf.dim()), rf.weights()};
  st.residual = rf.value(st.x_hat.coeffs);
  st.rho_l = rho1;

  Scalar rho = rho1;
  while (st.residual > upper) {
    if (st.l >= opts.max_outer)
      throw OuterNonConvergence("outer_solve: max_outer reached", st);
    ++st.l;

    // The positivity of the shifted Lagrangian Hessian can fail on isolated
    // radius windows, where no fixed point of the model iteration exists and
    // descent methods end in spurious boundary minima. Retry such radii with
    // a modest enlargement until the inner solve lands on a certified point.
    const int l = st.l;
    InnerState inner;
    std::vector<ExperimentRecord> rows;
    Scalar rho_lo = st.l > 1 ? st.rho_l : 0;  // residual known above the band
    for (int attempt = 0;; ++attempt) {
      rows.clear();
      const long trs_before = st.n_trs;
      const long mv_before = st.n_eig_mv;
      InnerCallback cb;
      long mv_run = mv_before;
      const Scalar rho_try = rho;
      if (opts.record_history) {
        cb = [&, l, rho_try, trs_before](const InnerIterationInfo& it) {
          ExperimentRecord rec;
          rec.l = l;
          rec.k = it.k;
          rec.rho = rho_try;
          rec.residual = it.residual;
          if (opts.x_truth) {
            const Scalar tn = weighted_norm(*opts.x_truth, w);
            rec.error_to_truth =
                weighted_norm(it.x - *opts.x_truth, w) / (tn > 0 ? tn : 1);
          }
          rec.lambda_rho = it.lambda;
          QuadraticModel m = build_model(rf, it.x, rho_try);
          rec.min_eig_lagrangian =
              smallest_eigenpair(m.hessian_action).value + it.lambda;
          rec.n_trs_solves = trs_before + it.k;
          mv_run += it.trs.eig_mv_count;
          rec.n_eig_mv = mv_run;
          rec.wall_time_ms = it.wall_ms;
          rows.push_back(rec);
        };
      }

      const bool last_attempt = attempt >= opts.max_radius_retries;
      InnerOpts inner_opts = opts.inner;
      // An inner residual at or below the lower discrepancy edge means the
      // radius overshot; stop that run early and bisect back.
      inner_opts.res_target = tol.lower_bound();
      try {
        inner = inner_solve(rf, rho, st.x_hat.coeffs, inner_opts, cb);
      } catch (const NonConvergence&) {
        if (last_attempt)
          throw OuterNonConvergence("outer_solve: inner solve failed", st);
        rho_lo = rho;
        rho *= 1.2;
        continue;
      }
      if (inner.residual <= tol.lower_bound()) {
        if (last_attempt) throw OuterNonConvergence("outer_solve: radius bisection failed", st);
        rho = 0.5 * (rho_lo + rho);
        continue;
      }
      QuadraticModel m = build_model(rf, inner.x_k.coeffs, rho);
      const Scalar min_eig =
          smallest_eigenpair(m.hessian_action).value + inner.lambda_k;
      if (min_eig > 0 || last_attempt) break;
      if (inner.residual > upper) rho_lo = rho;
      rho *= 1.2;
    }
    st.rho_l = rho;
    st.history.insert(st.history.end(), rows.begin(), rows.end());
    st.x_hat.coeffs = inner.x_k.coeffs;
    st.lambda_rho = inner.lambda_k;
    st.residual = inner.residual;
    st.n_trs += inner.n_trs;
    st.n_eig_mv += inner.n_eig_mv;
    st.n_indefinite += inner.n_indefinite;

    if (st.residual <= upper) break;

    if (st.lambda_rho < opts.lambda_floor) {
      rho *= 2;  // near-interior solution, Newton step undefined
    } else {
      // Half of the Newton step on the residual envelope (the rho-derivative
      // is -lambda_rho / 2 at a boundary minimizer): deliberately
      // conservative, converging to the discrepancy radius from below.
      const Scalar rho_next = rho + (st.residual - r_d) / st.lambda_rho;
      rho = rho_next > rho ? rho_next : 2 * rho;
    }
  }
  st.converged = true;
  return st;
}

}  // namespace qtrust
