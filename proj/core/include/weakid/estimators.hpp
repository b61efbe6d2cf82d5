#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "weakid/model.hpp"
#include "weakid/moments.hpp"
#include "weakid/report.hpp"

namespace weakid {

enum class Method { CUGMM, TwoStepCML };

std::string to_string(Method method);

/// Optimizer policy for the continuously-updated GMM fit.
///
/// Each start runs BFGS on J_n(theta, theta) with the analytic gradient; a
/// start whose line search stalls gets a Nelder-Mead pass and a second BFGS
/// polish. Start 0 is `init`; starts 1..restarts perturb `init` by
/// N(0, restart_sd^2) per coordinate using RngStream(seed, start).
struct CugmmOptions {
  int max_iterations = 2000;
  double gradient_tol = 1e-6;
  double relative_value_tol = 1e-10;
  int restarts = 5;
  double restart_sd = 0.25;
  std::uint64_t seed = 0x5eedULL;
  bool simplex_fallback = true;
  int simplex_max_evaluations = 4000;
};

struct FitResult {
  ParamTheta theta_hat;
  double J_at_min = 0.0;
  /// Studentized covariance of theta_hat: [G'S^{-1}G]^{-1}/n for CUGMM, the
  /// stacked-moment sandwich for 2SCML. NaN-filled when irreparably singular.
  Matrix vcov;
  bool vcov_available = false;
  bool vcov_regularized = false;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> objective_history;
  Method method = Method::CUGMM;
  Eigen::Index num_moments = 0;
  Eigen::Index n = 0;
  /// Set when the fit was computed on standardized data.
  std::optional<ScaleInfo> scaling;
  /// Optimizer policy and per-start outcomes, for auditability.
  std::string optimizer_log;

  Eigen::Index num_params() const { return theta_hat.dim(); }
  Vector standard_errors() const;
};

/// Minimizes J_n(theta, theta). Throws NotConverged when no start meets the
/// gradient criterion and NearSingular when S_n is irreparable at the start.
FitResult fit_cugmm(const MomentSystem& system, const Dataset& data, const ParamTheta& init,
                    const CugmmOptions& options = {});

/// Rivers-Vuong two-step estimator: OLS first stage, then probit of y1 on
/// (v_hat, y2, X) by Newton-Raphson. The covariance is the sandwich of the
/// stacked just-identified moments {probit score, OLS normal equations}.
/// Throws SeparationDetected, NotConverged or NearSingular (singular design).
FitResult fit_2scml(const Dataset& data);

struct JTest {
  double J = 0.0;
  unsigned df = 0;
  double pvalue = 1.0;
};

/// Hansen overidentification test; DomainError when H == p.
JTest j_statistic(const FitResult& fit);

/// Wald test of theta_j = null_value using the studentized covariance.
TestReport wald_test(const FitResult& fit, Eigen::Index coordinate, double null_value,
                     double level = 0.05);

/// phi(index at sample means, v = 0) * coefficient for y2 and each non-constant
/// column of X, in that order. Effects are in original units when the fit
/// carries scaling information.
Vector marginal_effects(const FitResult& fit, const Dataset& data);

/// Delta-method standard errors of marginal_effects (central differences).
Vector marginal_effect_standard_errors(const FitResult& fit, const Dataset& data);

/// Returns a copy with theta_hat and vcov mapped back to original units.
FitResult to_original_units(const FitResult& fit);

/// Correlation between u and v implied by the fit, with sigma_v taken from the
/// reduced-form residuals of `data` at theta_hat (the data the fit used).
double implied_correlation(const FitResult& fit, const Dataset& data);

}  // namespace weakid
