#include "qtrust/experiment.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace qtrust {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_number(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ExperimentConfig::validate() const {
  if (problem_name != "cubic-volterra")
    throw ConfigError("unknown problem: " + problem_name);
  if (n < 2) throw ConfigError("config: n must be >= 2");
  if (delta_rel.empty()) throw ConfigError("config: delta-rel must be nonempty");
  for (Scalar d : delta_rel)
    if (d < 0) throw ConfigError("config: delta-rel entries must be >= 0");
  if (tau <= 1) throw ConfigError("config: tau must exceed 1");
  if (eta < 0) throw ConfigError("config: eta must be >= 0");
  if (seeds.empty()) throw ConfigError("config: seeds must be nonempty");
  if (max_inner < 1 || max_outer < 1)
    throw ConfigError("config: iteration limits must be positive");
  if (rho1 && *rho1 <= 0) throw ConfigError("config: rho1 must be positive");
}

Vector default_truth(const Vector& grid) {
  return (4.0 * grid.array() * (1.0 - grid.array())).matrix();
}

Scalar default_rho1(const ForwardProblem& p, const Vector& y_delta) {
  const Vector& w_in = *p.weights_in();
  const Vector& w_out = *p.weights_out();
  const Vector x0 = Vector::Zero(p.dim_in());
  // power iteration on F'(0)^* F'(0) in the weighted space
  std::mt19937_64 rng(2024);
  std::normal_distribution<Scalar> dist;
  Vector v(p.dim_in());
  for (Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
  v /= weighted_norm(v, w_in);
  Scalar lip_sq = 1;
  for (int it = 0; it < 30; ++it) {
    Vector u = p.apply_jacobian_adjoint(x0, p.apply_jacobian(x0, v));
    lip_sq = weighted_inner(u, v, w_in);
    const Scalar nu = weighted_norm(u, w_in);
    if (nu <= 0) break;
    v = u / nu;
  }
  const Scalar lip = std::sqrt(std::max<Scalar>(lip_sq, 1e-12));
  const Scalar r = 0.05 * weighted_norm(y_delta, w_out) / lip;
  return r * r;
}

namespace {

struct RunOutcome {
  Scalar delta_rel;
  std::uint64_t seed;
  bool ok = false;
  std::string error;
};

std::string run_suffix(Scalar delta_rel, std::uint64_t seed) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "delta%g_seed%llu", delta_rel,
                static_cast<unsigned long long>(seed));
  return buf;
}

void write_two_column(const fs::path& path, const std::string& h1,
                      const std::string& h2, const Vector& a, const Vector& b) {
  std::ofstream f(path);
  f << h1 << "," << h2 << "\n";
  for (Index i = 0; i < a.size(); ++i)
    f << format_number(a(i)) << "," << format_number(b(i)) << "\n";
}

void write_history(const fs::path& path,
                   const std::vector<ExperimentRecord>& hist) {
  std::ofstream f(path);
  f << "l,k,rho,residual,error,lambda_rho,min_eig,n_trs,n_eig_mv,wall_ms\n";
  for (const auto& r : hist) {
    f << r.l << "," << r.k << "," << format_number(r.rho) << ","
      << format_number(r.residual) << ","
      << (r.error_to_truth ? format_number(*r.error_to_truth) : std::string())
      << "," << format_number(r.lambda_rho) << ","
      << format_number(r.min_eig_lagrangian) << "," << r.n_trs_solves << ","
      << r.n_eig_mv << "," << format_number(r.wall_time_ms) << "\n";
  }
}

RunOutcome run_one(const ExperimentConfig& cfg, Scalar delta_rel,
                   std::uint64_t seed) {
  RunOutcome out{delta_rel, seed};
  const fs::path dir(cfg.output_dir);
  const std::string suffix = run_suffix(delta_rel, seed);
  try {
    auto problem = std::make_shared<CubicVolterra>(cfg.n);
    Vector x_true = default_truth(problem->grid());
    NoisySetup setup = make_noisy(*problem, x_true, delta_rel, seed);

    ResidualFunctional rf(problem, setup.y_delta.coeffs);
    Tolerances tol{setup.delta_abs, cfg.tau, cfg.eta, cfg.eta_lower,
                   cfg.eta_upper};
    const Scalar rho1 =
        cfg.rho1 ? *cfg.rho1 : default_rho1(*problem, setup.y_delta.coeffs);

    OuterOpts opts;
    opts.max_outer = cfg.max_outer;
    opts.inner.max_inner = cfg.max_inner;
    opts.inner.trs.debug_trace = cfg.emit.trs_trace;
    opts.x_truth = x_true;

    if (cfg.emit.reconstructions) {
      write_two_column(dir / ("data_" + suffix + ".csv"), "t", "value",
                       problem->grid(), setup.y_delta.coeffs);
    }

    OuterState st = outer_solve(rf, tol, rho1, opts);

    if (cfg.emit.histories)
      write_history(dir / ("history_" + suffix + ".csv"), st.history);
    if (cfg.emit.reconstructions)
      write_two_column(dir / ("recon_" + suffix + ".csv"), "t", "value",
                       problem->grid(), st.x_hat.coeffs);

    const Scalar tn = weighted_norm(x_true, *problem->weights_in());
    json meta;
    meta["config"] = {{"problem", cfg.problem_name},
                      {"n", cfg.n},
                      {"delta_rel", delta_rel},
                      {"tau", cfg.tau},
                      {"eta", cfg.eta},
                      {"eta_lower", cfg.eta_lower},
                      {"eta_upper", cfg.eta_upper},
                      {"seed", seed},
                      {"rho1", rho1},
                      {"max_inner", cfg.max_inner},
                      {"max_outer", cfg.max_outer}};
    meta["delta_abs"] = setup.delta_abs;
    meta["final_rho"] = st.rho_l;
    meta["final_residual"] = st.residual;
    meta["final_lambda_rho"] = st.lambda_rho;
    meta["n_outer"] = st.l;
    meta["n_trs_solves"] = st.n_trs;
    meta["n_indefinite_subproblems"] = st.n_indefinite;
    meta["error_to_truth"] =
        weighted_norm(st.x_hat.coeffs - x_true, *problem->weights_in()) / tn;
    meta["discrepancy_lower"] = tol.lower_bound();
    meta["discrepancy_upper"] = tol.upper_bound();
    meta["termination"] = "discrepancy";
    std::ofstream mf(dir / ("meta_" + suffix + ".json"));
    mf << meta.dump(2) << "\n";

    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

int env_thread_cap() {
  const char* env = std::getenv("QUASITRUST_THREADS");
  if (!env) return 1;
  const int v = std::atoi(env);
  return v > 0 ? v : 1;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  std::vector<std::pair<Scalar, std::uint64_t>> tasks;
  for (Scalar d : cfg.delta_rel)
    for (std::uint64_t s : cfg.seeds) tasks.emplace_back(d, s);

  std::vector<RunOutcome> outcomes(tasks.size());
  const int threads =
      std::min<int>(env_thread_cap(), static_cast<int>(tasks.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      outcomes[i] = run_one(cfg, tasks[i].first, tasks[i].second);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++)
          outcomes[i] = run_one(cfg, tasks[i].first, tasks[i].second);
      });
    for (auto& th : pool) th.join();
  }

  json failures = json::array();
  for (const auto& o : outcomes)
    if (!o.ok)
      failures.push_back({{"delta_rel", o.delta_rel},
                          {"seed", o.seed},
                          {"error", o.error}});
  if (!failures.empty()) {
    std::ofstream f(fs::path(cfg.output_dir) / "error_manifest.json");
    f << json{{"failures", failures}}.dump(2) << "\n";
    return 3;
  }
  return 0;
}

int run_checks(const ExperimentConfig& cfg, std::ostream& out) {
  cfg.validate();
  auto problem = std::make_shared<CubicVolterra>(cfg.n);
  Vector x_true = default_truth(problem->grid());
  NoisySetup setup = make_noisy(*problem, x_true, cfg.delta_rel.front(),
                                cfg.seeds.front());
  ResidualFunctional rf(problem, setup.y_delta.coeffs);
  const Vector& w = *problem->weights_in();

  std::mt19937_64 rng(99);
  std::normal_distribution<Scalar> dist;
  auto rand_vec = [&] {
    Vector v(problem->dim_in());
    for (Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
    return v;
  };

  bool ok = true;
  const Scalar fd_step = 1e-5;
  for (int p = 0; p < 5; ++p) {
    Vector x = 0.5 * rand_vec();
    Vector d = rand_vec();
    d /= weighted_norm(d, w);
    Vector g = rf.gradient(x);
    const Scalar fd =
        (rf.value(x + fd_step * d) - rf.value(x - fd_step * d)) / (2 * fd_step);
    const Scalar an = weighted_inner(g, d, w);
    const Scalar gerr = std::abs(fd - an) / (1 + std::abs(an));
    Vector hd = rf.hessian_apply(x, d);
    Vector hfd = (rf.gradient(x + fd_step * d) - rf.gradient(x - fd_step * d)) /
                 (2 * fd_step);
    const Scalar herr = weighted_norm(hd - hfd, w) / (1 + weighted_norm(hd, w));
    const bool pass = gerr <= 1e-5 && herr <= 1e-5;
    ok = ok && pass;
    out << (pass ? "ok  " : "FAIL") << " probe " << p
        << ": gradient fd err = " << gerr << ", hessian fd err = " << herr
        << "\n";
  }

  // adjoint consistency of the forward operator
  for (int p = 0; p < 5; ++p) {
    Vector x = 0.5 * rand_vec(), h = rand_vec(), r = rand_vec();
    const Scalar lhs =
        weighted_inner(problem->apply_jacobian(x, h), r, *problem->weights_out());
    const Scalar rhs =
        weighted_inner(h, problem->apply_jacobian_adjoint(x, r), w);
    const bool pass = std::abs(lhs - rhs) <= 1e-10 * (1 + std::abs(lhs));
    ok = ok && pass;
    out << (pass ? "ok  " : "FAIL") << " adjoint probe " << p << ": gap = "
        << std::abs(lhs - rhs) << "\n";
  }
  return ok ? 0 : 4;
}

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0xbf58476d1ce4e5b9ULL * (c + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

int run_trs_bench(const std::vector<int>& dims, int count, std::uint64_t seed,
                  std::ostream& out) {
  for (int d : dims)
    if (d < 1 || d > 500) throw ConfigError("bench-trs: dims must be in [1,500]");
  if (count < 0) throw ConfigError("bench-trs: count must be >= 0");

  out << "dim,count,max_rel_gap,max_kkt,n_indefinite,n_hard\n";
  std::vector<std::string> offenders;
  for (int dim : dims) {
    Scalar max_gap = 0, max_kkt = 0;
    int n_indef = 0, n_hard = 0;
    for (int i = 0; i < count; ++i) {
      std::mt19937_64 rng(mix_seed(seed, dim, i));
      std::normal_distribution<Scalar> nd;
      std::uniform_real_distribution<Scalar> ud(0.0, 1.0);

      Matrix M(dim, dim);
      for (Index r = 0; r < dim; ++r)
        for (Index c = 0; c < dim; ++c) M(r, c) = nd(rng);
      Matrix A = 0.5 * (M + M.transpose());
      const bool hard = ud(rng) < 0.1;
      const bool indefinite = hard || ud(rng) < 0.5;

      Eigen::SelfAdjointEigenSolver<Matrix> es(A);
      const Scalar lmin0 = es.eigenvalues()(0);
      const Scalar target = indefinite ? -(0.5 + ud(rng)) : 0.1 + ud(rng);
      A += (target - lmin0) * Matrix::Identity(dim, dim);

      Vector a(dim);
      for (Index r = 0; r < dim; ++r) a(r) = nd(rng);
      Scalar s = 0.5 + 2 * ud(rng);

      if (hard && dim > 1) {
        const Vector vmin = es.eigenvectors().col(0);
        a -= vmin.dot(a) * vmin;
        Vector b = es.eigenvectors().transpose() * a;
        Scalar nbar_sq = 0;
        for (Index r = 1; r < dim; ++r) {
          const Scalar q = b(r) / (es.eigenvalues()(r) - lmin0);
          nbar_sq += q * q;
        }
        s = 2 * std::max<Scalar>(std::sqrt(nbar_sq), 0.1);
      }

      Matrix Acopy = A;
      TrsProblem prob{SymOperator{dim, [Acopy](const Vector& v) {
                                    return Vector(Acopy * v);
                                  }},
                      a, s};
      TrsSolution got = solve_trs(prob);
      TrsSolution want = solve_trs_oracle(prob);

      if (want.min_eig_A < 0) ++n_indef;
      if (want.hard_case) ++n_hard;

      const Scalar gap = std::abs(got.objective - want.objective) /
                         (1 + std::abs(want.objective));
      const Scalar kkt =
          (A * got.x + got.lambda * got.x - a).norm() / (1 + a.norm());
      max_gap = std::max(max_gap, gap);
      max_kkt = std::max(max_kkt, kkt);
      if (gap > 1e-6) {
        std::ostringstream os;
        os << "dim=" << dim << " index=" << i
           << " seed=" << mix_seed(seed, dim, i) << " gap=" << gap;
        offenders.push_back(os.str());
      }
    }
    out << dim << "," << count << "," << format_number(max_gap) << ","
        << format_number(max_kkt) << "," << n_indef << "," << n_hard << "\n";
  }
  if (!offenders.empty()) {
    out << "MISMATCHES:\n";
    for (const auto& o : offenders) out << "  " << o << "\n";
    return 4;
  }
  return 0;
}

}  // namespace qtrust
