#pragma once

#include <vector>

#include "weakid/estimators.hpp"
#include "weakid/moments.hpp"

namespace weakid {

enum class DJMode { Grid, Single };

struct DJConfig {
  int m = 20;
  double level = 0.05;
  DJMode mode = DJMode::Grid;
  /// Coverage of the interval for rho_tilde that the grid dissects.
  double ci_level = 0.95;
};

enum class DJDecision { RejectWeak, FailToReject };

struct DJReport {
  std::vector<double> statistics;
  std::vector<double> deltas_used;
  double critical_value = 0.0;
  unsigned df = 0;
  DJDecision decision = DJDecision::FailToReject;
  DJMode mode_used = DJMode::Grid;
  /// Set when grid mode was requested but se(rho_tilde) was unusable.
  bool fell_back_to_single = false;

  double max_statistic() const;
  double min_statistic() const;
  bool reject() const { return decision == DJDecision::RejectWeak; }
};

/// r_n = log(log(n)).
double loglog_rate(Eigen::Index n);

/// theta_hat + (delta, -delta, delta * pi_hat, 0...): moves eta1 only.
ParamTheta distort(const ParamTheta& theta_hat, double delta_n);

/// Midpoints of m equal segments of rho_tilde_hat -/+ z se, each divided by r_n.
/// A midpoint that is exactly zero is replaced by half a segment width.
std::vector<double> delta_grid(const FitResult& fit, int m, double r_n, double ci_level = 0.95);

/// n gbar(distort(theta_hat, delta))' S_n(theta_hat)^{-1} gbar(distort(theta_hat, delta)).
double dj_statistic(const MomentSystem& system, const Dataset& data, const FitResult& fit,
                    double delta_n);

DJReport dj_test(const MomentSystem& system, const Dataset& data, const FitResult& fit,
                 const DJConfig& config = {});

}  // namespace weakid
