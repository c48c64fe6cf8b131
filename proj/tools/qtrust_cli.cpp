#include "qtrust/experiment.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

void attach_config_options(CLI::App* app, qtrust::ExperimentConfig& cfg,
                           std::string& config_path,
                           std::vector<double>& delta_rel,
                           std::vector<std::uint64_t>& seeds) {
  app->add_option("--config", config_path, "config file (INI/TOML)")
      ->required();
  app->add_option("--problem.name", cfg.problem_name, "forward problem id");
  app->add_option("--problem.n", cfg.n, "number of grid nodes");
  app->add_option("--delta-rel", delta_rel, "noise levels in percent");
  app->add_option("--seed", seeds, "noise realization seeds");
  app->add_option("--tau", cfg.tau, "discrepancy factor (> 1)");
  app->add_option("--eta", cfg.eta, "inexact-minimization gap");
  app->add_option("--eta-lower", cfg.eta_lower);
  app->add_option("--eta-upper", cfg.eta_upper);
  app->add_option("--rho1", cfg.rho1, "initial squared radius");
  app->add_option("--max-inner", cfg.max_inner);
  app->add_option("--max-outer", cfg.max_outer);
  app->add_option("--out", cfg.output_dir, "output directory");
  app->add_flag("--no-histories{false},--histories{true}",
                cfg.emit.histories, "write per-iteration history CSVs");
  app->add_flag("--no-reconstructions{false},--reconstructions{true}",
                cfg.emit.reconstructions, "write reconstruction CSVs");
  app->add_flag("--trs-trace", cfg.emit.trs_trace,
                "record the root-finding trace of each TRS solve");
}

// Fills options of `app` from a key=value config file with optional
// [sections]; values already given on the command line take precedence.
void apply_config_file(CLI::App* app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw qtrust::ConfigError("config: cannot open " + path);
  const std::vector<CLI::ConfigItem> items = CLI::ConfigTOML{}.from_config(in);
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    CLI::Option* opt = app->get_option_no_throw("--" + item.fullname());
    if (opt == nullptr)
      throw qtrust::ConfigError("config: unknown key " + item.fullname());
    if (opt->count() > 0) continue;
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasisolution solver for norm-constrained inverse problems"};
  app.require_subcommand(1);

  qtrust::ExperimentConfig cfg;
  std::string config_path;
  std::vector<double> delta_rel;
  std::vector<std::uint64_t> seeds;

  CLI::App* solve = app.add_subcommand("solve", "run the full sweep");
  attach_config_options(solve, cfg, config_path, delta_rel, seeds);

  CLI::App* check = app.add_subcommand(
      "check", "validate a config and probe derivatives without solving");
  qtrust::ExperimentConfig check_cfg;
  std::string check_config_path;
  std::vector<double> check_delta;
  std::vector<std::uint64_t> check_seeds;
  attach_config_options(check, check_cfg, check_config_path, check_delta,
                        check_seeds);

  CLI::App* bench =
      app.add_subcommand("bench-trs", "cross-check the trust region solver "
                                      "against a dense oracle");
  std::vector<int> dims;
  int count = 10;
  std::uint64_t bench_seed = 1;
  bench->add_option("--dims", dims, "problem dimensions")
      ->required()
      ->delimiter(',');
  bench->add_option("--count", count, "instances per dimension")->required();
  bench->add_option("--seed", bench_seed, "base seed")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (solve->parsed()) {
      apply_config_file(solve, config_path);
      if (!delta_rel.empty())
        cfg.delta_rel.assign(delta_rel.begin(), delta_rel.end());
      if (!seeds.empty()) cfg.seeds = seeds;
      return qtrust::run_experiment(cfg);
    }
    if (check->parsed()) {
      apply_config_file(check, check_config_path);
      if (!check_delta.empty())
        check_cfg.delta_rel.assign(check_delta.begin(), check_delta.end());
      if (!check_seeds.empty()) check_cfg.seeds = check_seeds;
      if (check_cfg.delta_rel.empty()) check_cfg.delta_rel = {1.0};
      return qtrust::run_checks(check_cfg, std::cout);
    }
    return qtrust::run_trs_bench(dims, count, bench_seed, std::cout);
  } catch (const qtrust::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const qtrust::NonConvergence& e) {
    std::cerr << "solver failed to converge: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
