// weakid: estimation, weak-identification tests and Monte Carlo designs for
// binary-choice models with a continuous endogenous regressor.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "weakid/errors.hpp"
#include "weakid/pipeline.hpp"

namespace {

// Flag values as parsed; only the ones the user actually typed are applied,
// so they override the config file, which overrides the defaults.
struct Flags {
  std::string config;
  std::string preset;
  std::string data, y1, y2, instruments, tolerance, output_dir;
  std::vector<std::string> x, z;
  bool no_standardize = false;
  bool no_files = false;
  bool full = false;
  bool dump = false;
  int m = 0, restarts = 0;
  double level = 0, ci_level = 0, eff_dof = 0, gamma = 0;
  std::vector<long> n;
  std::vector<double> rho, lambda, sigma_z, sigma_v;
  std::size_t reps = 0;
  unsigned workers = 0;
  std::uint64_t seed = 0;
};

void add_data_options(CLI::App* sub, Flags& f) {
  sub->add_option("--data", f.data, "CSV file with a header row");
  sub->add_option("--y1", f.y1, "binary outcome column");
  sub->add_option("--y2", f.y2, "endogenous regressor column");
  sub->add_option("--x", f.x, "exogenous regressors (an intercept is always added)")->delimiter(',');
  sub->add_option("--z", f.z, "excluded instruments")->delimiter(',');
  sub->add_option("--preset", f.preset, "column preset ('lfp')");
  sub->add_flag("--no-standardize", f.no_standardize, "fit on raw columns");
  sub->add_option("--instruments", f.instruments, "instrument functions: empirical | mc");
  sub->add_option("--m", f.m, "DJ grid size");
  sub->add_option("--level", f.level, "significance level");
  sub->add_option("--ci-level", f.ci_level, "coverage of the interval dissected by the DJ grid");
  sub->add_option("--restarts", f.restarts, "CUGMM random restarts");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakid: weak identification in binary-choice models"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "JSON config file (flags override it)");
  app.add_option("--seed", f.seed, "RNG seed");
  app.add_option("--output-dir", f.output_dir, "directory for report files");
  app.add_flag("--no-files", f.no_files, "print the report only");

  CLI::App* estimate = app.add_subcommand("estimate", "2SCML and CUGMM fits with the J-test");
  CLI::App* djtest = app.add_subcommand("djtest", "distorted J-test on a grid of perturbations");
  CLI::App* weakiv = app.add_subcommand("weakiv", "DJ, rule-of-thumb, Stock-Yogo and effective-F side by side");
  CLI::App* mc = app.add_subcommand("mc", "Monte Carlo design grid");
  CLI::App* diag = app.add_subcommand("diag", "variance ratios of the pruned instrument signal");
  (void)diag;
  for (CLI::App* sub : {estimate, djtest, weakiv}) add_data_options(sub, f);
  weakiv->add_option("--tolerance", f.tolerance, "five | ten");
  weakiv->add_option("--eff-dof", f.eff_dof, "effective degrees of freedom for the effective-F table");

  mc->add_option("--n", f.n, "sample sizes")->delimiter(',');
  mc->add_option("--rho", f.rho, "corr(u, v) values")->delimiter(',');
  mc->add_option("--lambda", f.lambda, "identification-strength exponents in (0, 0.5]")->delimiter(',');
  mc->add_option("--sigma-z", f.sigma_z, "instrument scales")->delimiter(',');
  mc->add_option("--sigma-v", f.sigma_v, "reduced-form error scales")->delimiter(',');
  mc->add_option("--gamma", f.gamma, "corr(y2, z) = gamma / n^lambda");
  mc->add_option("--reps", f.reps, "replications per design");
  mc->add_option("--workers", f.workers, "worker threads (WEAKID_THREADS caps it)");
  mc->add_option("--restarts", f.restarts, "CUGMM random restarts");
  mc->add_option("--level", f.level, "significance level");
  mc->add_flag("--full-fidelity", f.full, "published design grid with 1000 replications");
  mc->add_flag("--dump", f.dump, "write per-replication CSVs");

  CLI11_PARSE(app, argc, argv);

  weakid::RunConfig c;
  CLI::App* sub = app.get_subcommands().front();
  c.command = sub->get_name();
  c.standardize = c.command != "mc";

  try {
    if (!f.config.empty()) weakid::apply_config_file(f.config, c);
  } catch (const weakid::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  const auto given = [sub, &app](const char* name) {
    if (sub->get_option_no_throw(name) != nullptr && sub->count(name) > 0) return true;
    return app.get_option_no_throw(name) != nullptr && app.count(name) > 0;
  };
  if (given("--preset")) {
    if (f.preset != "lfp") {
      std::cerr << "error: unknown preset '" << f.preset << "'\n";
      return 1;
    }
    c.roles = weakid::lfp_roles();
  }
  if (given("--seed")) c.seed = f.seed;
  if (given("--output-dir")) c.output_dir = f.output_dir;
  if (f.no_files) c.write_files = false;
  if (given("--data")) c.data_path = f.data;
  if (given("--y1")) c.roles.y1 = f.y1;
  if (given("--y2")) c.roles.y2 = f.y2;
  if (given("--x")) c.roles.x = f.x;
  if (given("--z")) c.roles.z = f.z;
  if (f.no_standardize) c.standardize = false;
  if (given("--instruments")) c.instruments = f.instruments;
  if (given("--m")) c.m = f.m;
  if (given("--level")) c.level = f.level;
  if (given("--ci-level")) c.ci_level = f.ci_level;
  if (given("--restarts")) c.restarts = f.restarts;
  if (given("--tolerance")) c.tolerance = f.tolerance;
  if (given("--eff-dof")) c.eff_dof = f.eff_dof;
  if (f.full) weakid::apply_full_fidelity(c);
  if (given("--n")) c.mc_n = f.n;
  if (given("--rho")) c.mc_rho = f.rho;
  if (given("--lambda")) c.mc_lambda = f.lambda;
  if (given("--sigma-z")) c.mc_sigma_z = f.sigma_z;
  if (given("--sigma-v")) c.mc_sigma_v = f.sigma_v;
  if (given("--gamma")) c.gamma = f.gamma;
  if (given("--reps")) c.reps = f.reps;
  if (given("--workers")) c.workers = f.workers;
  if (f.dump) c.dump_replications = true;

  return weakid::run_pipeline(c, std::cout, std::cerr);
}
