#pragma once

#include "qtrust/ivanov.hpp"
#include "qtrust/problems.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qtrust {

struct EmitFlags {
  bool histories = true;
  bool reconstructions = true;
  bool trs_trace = false;
};

struct ExperimentConfig {
  std::string problem_name = "cubic-volterra";
  int n = 100;
  std::vector<Scalar> delta_rel;  // percent
  Scalar tau = 1.5;
  Scalar eta = 0;
  Scalar eta_lower = 0;
  Scalar eta_upper = 0;
  std::optional<Scalar> rho1;
  std::vector<std::uint64_t> seeds{1};
  int max_inner = 400;
  int max_outer = 60;
  std::string output_dir = "out";
  EmitFlags emit;

  void validate() const;  // throws ConfigError
};

/// Benchmark exact solution: smooth, zero at both endpoints.
Vector default_truth(const Vector& grid);

/// rho_1 = (0.1 ||y^delta||_n / ||F'(0)||)^2 unless overridden.
Scalar default_rho1(const ForwardProblem& p, const Vector& y_delta);

/// Runs the (delta_rel x seed) sweep, writing history CSVs, reconstructions,
/// noisy data and JSON metadata into output_dir. Returns 0 on success, 3 if
/// any run failed to converge (partial artifacts plus an error manifest are
/// kept). Worker parallelism is capped by QUASITRUST_THREADS.
int run_experiment(const ExperimentConfig& cfg);

/// Validates the config and runs derivative/adjoint probes on the configured
/// problem without solving. Returns 0 on success, 4 if a probe fails.
int run_checks(const ExperimentConfig& cfg, std::ostream& out);

/// Cross-validates solve_trs against the dense oracle on random instances
/// (~1/2 indefinite, ~10% engineered hard case). Returns 0, or 4 when any
/// relative objective gap exceeds 1e-6 (offending seeds are listed).
int run_trs_bench(const std::vector<int>& dims, int count, std::uint64_t seed,
                  std::ostream& out);

/// 17-significant-digit decimal serialization used by all CSV writers.
std::string format_number(Scalar v);

}  // namespace qtrust
