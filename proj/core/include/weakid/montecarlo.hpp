#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "weakid/estimators.hpp"
#include "weakid/model.hpp"
#include "weakid/numerics/rng.hpp"

namespace weakid {

/// Drifting design y1 = 1[beta0 + alpha0 y2 + u > 0], y2 = pi0 + xi z + v with
/// corr(y2, z) = gamma / n^lambda.
struct McDesign {
  Eigen::Index n = 500;
  double rho = 0.5;
  double sigma_z = 1.0;
  double sigma_v = 1.0;
  double gamma = 1.5;
  double lambda = 0.5;
  double beta0 = 0.5;
  double alpha0 = 1.0;
  double pi0 = 0.3;
  std::size_t replications = 500;
  std::uint64_t seed = 20240101;

  /// gamma / n^lambda.
  double target_correlation() const;
  /// Throws ConfigError when an invariant fails.
  void validate() const;
  /// Scale of u that makes Var(u | v) = 1.
  double sigma_u() const;
  /// True rho_tilde = rho / (sigma_v sqrt(1 - rho^2)).
  double rho_tilde0() const;
};

struct McRunOptions {
  /// 0 picks hardware_concurrency, capped by WEAKID_THREADS when set.
  unsigned workers = 0;
  double level = 0.05;
  CugmmOptions cugmm;
};

/// Outcome of a single replication. `ok` is false when either estimator failed;
/// such replications are counted, never silently dropped.
struct ReplicationRecord {
  std::size_t index = 0;
  bool ok = false;
  std::string failure;
  double alpha_2scml = 0.0;
  double beta_2scml = 0.0;
  double alpha_cugmm = 0.0;
  double beta_cugmm = 0.0;
  double rho_tilde_cugmm = 0.0;
  double J = 0.0;
  double dj_statistic = 0.0;
  bool dj_reject = false;
  double wald_2scml = 0.0;  ///< NaN when the covariance was unavailable
  double wald_cugmm = 0.0;
  double F_homoskedastic = 0.0;
  double effective_F = 0.0;
  bool ss_reject = false;
  bool sy5_reject = false;
  bool sy10_reject = false;
  bool eff5_reject = false;
  bool eff10_reject = false;
};

struct EstimatorMetrics {
  double bias = 0.0;
  double sd = 0.0;
  double rrmse = 0.0;
  std::size_t count = 0;
};

struct McSummary {
  McDesign design;
  double xi = 0.0;
  /// Keys: alpha_2scml, beta_2scml, alpha_cugmm, beta_cugmm.
  std::map<std::string, EstimatorMetrics> metrics;
  /// Signed Wald rejection rate minus level (not clipped).
  double wald_distortion_2scml = 0.0;
  double wald_distortion_cugmm = 0.0;
  /// Keys: DJ, SS, SY5, SY10, EffF5, EffF10, Wald_2scml, Wald_cugmm.
  std::map<std::string, double> reject_rates;
  std::size_t failed_replications = 0;
  std::size_t completed_replications = 0;
  std::vector<ReplicationRecord> replications;
};

/// xi = c sigma_v / (sigma_z sqrt(1 - c^2)), c = gamma / n^lambda. DomainError when |c| >= 1.
double implied_xi(const McDesign& design);

/// One simulated dataset; X is the intercept column.
Dataset generate(const McDesign& design, RngStream& stream);

/// Stream used for replication `index`: RngStream(design.seed, index).
RngStream replication_stream(const McDesign& design, std::size_t index);

/// Full pipeline for one replication.
ReplicationRecord run_replication(const McDesign& design, std::size_t index,
                                  const McRunOptions& options = {});

/// Runs every replication (in parallel) and aggregates in index order, so the
/// result does not depend on the worker count.
McSummary run_design(const McDesign& design, const McRunOptions& options = {});

/// Aggregates finished records.
McSummary summarize(const McDesign& design, std::vector<ReplicationRecord> records, double level);

/// bias = mean(e), sd with N - 1, rrmse = sqrt(mean((e / truth)^2)), e = estimate - truth.
EstimatorMetrics estimator_metrics(const std::vector<double>& estimates, double truth);

/// Fraction of alt_stats above the empirical 95th percentile of null_stats
/// (linear interpolation between order statistics).
double size_adjusted_power(std::vector<double> null_stats, const std::vector<double>& alt_stats);

/// Worker count resolved from the request, hardware and WEAKID_THREADS.
unsigned resolve_workers(unsigned requested);

/// design_summary.csv layout.
std::vector<std::string> summary_csv_columns();
void write_summary_csv_header(std::ostream& out);
void write_summary_csv_row(std::ostream& out, const McSummary& summary);
/// Per-replication dump (one row per replication).
void write_replications_csv(std::ostream& out, const McSummary& summary);

}  // namespace weakid
