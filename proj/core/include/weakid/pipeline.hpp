#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "weakid/djtest.hpp"
#include "weakid/io.hpp"

namespace weakid {

/// Resolved configuration of one CLI invocation.
struct RunConfig {
  std::string command;  ///< estimate | djtest | weakiv | mc | diag
  std::string data_path;
  ColumnRoles roles;
  bool standardize = true;
  std::string instruments = "empirical";  ///< empirical | mc

  // djtest
  int m = 20;
  double level = 0.05;
  double ci_level = 0.95;

  // weakiv
  std::string tolerance = "five";  ///< five | ten
  double eff_dof = 0.0;            ///< 0 picks 1 for kz = 1 and 1.8 for kz = 2

  // mc grid (cartesian product)
  std::vector<long> mc_n = {500};
  std::vector<double> mc_rho = {0.5};
  std::vector<double> mc_lambda = {0.5};
  std::vector<double> mc_sigma_z = {1.0};
  std::vector<double> mc_sigma_v = {1.0};
  double gamma = 1.5;
  std::size_t reps = 500;
  bool full_fidelity = false;
  bool dump_replications = false;
  unsigned workers = 0;

  std::uint64_t seed = 20240101;
  int restarts = 5;
  std::string output_dir = ".";
  bool write_files = true;
};

/// Column roles of the bundled married-women labor-force fixture.
ColumnRoles lfp_roles();

/// Overlays keys from a JSON config file onto `config`. Throws ConfigError on
/// unknown keys or wrong types.
void apply_config_file(const std::string& path, RunConfig& config);

/// Replaces the mc grid with the full published design (N = 1000).
void apply_full_fidelity(RunConfig& config);

/// Runs one command, printing the text report to `out` and writing
/// <command>_report.txt / <command>_report.json (plus design_summary.csv for
/// mc) to output_dir. Returns 0 on success, 2 on estimation failure and 1 on
/// input or configuration errors; the error message goes to `err`.
int run_pipeline(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace weakid
