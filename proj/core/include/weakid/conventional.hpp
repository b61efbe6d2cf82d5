#pragma once

#include "weakid/model.hpp"
#include "weakid/report.hpp"

namespace weakid {

/// First-stage regression of y2 on (X, Z) with X partialled out of Z.
struct FirstStageSummary {
  Vector xi_hat;
  /// RSS / (n - kx - kz).
  double resid_var = 0.0;
  double F_homoskedastic = 0.0;
  /// Wald / kz with the HC1 covariance of xi_hat.
  double F_robust = 0.0;
  /// Equals F_homoskedastic with a single endogenous regressor.
  double cragg_donald = 0.0;
  /// xi' Q xi / tr(V Q), Q = Z~'Z~, V the HC1 covariance. Equals F_robust when kz = 1.
  double effective_F = 0.0;
  Eigen::Index n = 0;
  Eigen::Index kz = 0;
};

/// Throws NearSingular when (X, Z) is rank deficient.
FirstStageSummary first_stage(const Dataset& data);

/// Reject iff F > threshold (homoskedastic F unless `robust`).
TestReport rule_of_thumb(const FirstStageSummary& summary, double threshold = 10.0,
                         bool robust = false);

enum class Tolerance { Five, Ten };

/// Stock-Yogo test with the embedded critical values; strict inequality.
/// Throws UnsupportedDesign for (kz, distortion) pairs outside the table.
TestReport stock_yogo(const FirstStageSummary& summary, Eigen::Index kz, Tolerance distortion,
                      bool robust = false);

/// Effective-F test with the embedded critical values, looked up by the
/// effective degrees of freedom (buckets around 1 and 1.8, half-width 0.1).
TestReport effective_f_test(const FirstStageSummary& summary, Tolerance tolerance,
                            double eff_dof_hint);

/// Critical value lookups, exposed for reporting and tests.
double stock_yogo_critical_value(Eigen::Index kz, Tolerance distortion);
double effective_f_critical_value(Tolerance tolerance, double eff_dof_hint);

/// 100 * l(sigma_z^2) / l(1) with l(s) = Var(Z phi(c + Z)) / s, Z ~ N(0, s).
double pruning_ratio(double sigma_z_sq, double c = 1.0);

/// Var(Z phi(c + Z)) for Z ~ N(0, sigma_z_sq), by Gauss-Hermite quadrature
/// after absorbing phi(c + Z) into the Gaussian weight.
double pruned_variance(double sigma_z_sq, double c = 1.0);

}  // namespace weakid
