#pragma once

#include <optional>
#include <string>
#include <vector>

#include "weakid/numerics/linalg.hpp"

namespace weakid {

/// Observations of the triangular binary-choice model.
///
/// y1 is the binary outcome, y2 the scalar endogenous regressor, X the
/// exogenous block (first column is the intercept) and Z the excluded
/// instruments.
struct Dataset {
  Vector y1;
  Vector y2;
  Matrix X;
  Matrix Z;

  Eigen::Index n() const { return y1.size(); }
  Eigen::Index kx() const { return X.cols(); }
  Eigen::Index kz() const { return Z.cols(); }

  /// Throws ValueError when any invariant is violated: binary y1, intercept
  /// column, finite entries, conforming sizes, n > kx + kz + 2.
  void validate() const;
};

/// Parameter vector in the structural basis: theta1 = (rho_tilde, alpha, beta),
/// theta2 = (pi, xi). Flat ordering is (rho_tilde, alpha, beta, pi, xi).
struct ParamTheta {
  double rho_tilde = 0.0;
  double alpha = 0.0;
  Vector beta;
  Vector pi;
  Vector xi;

  Eigen::Index kx() const { return beta.size(); }
  Eigen::Index kz() const { return xi.size(); }
  Eigen::Index dim() const { return 2 + 2 * beta.size() + xi.size(); }

  Vector flat() const;
  static ParamTheta from_flat(const Vector& flat, Eigen::Index kx, Eigen::Index kz);
  static ParamTheta zeros(Eigen::Index kx, Eigen::Index kz);

  /// Flat index helpers.
  static constexpr Eigen::Index kRhoTilde = 0;
  static constexpr Eigen::Index kAlpha = 1;
  static Eigen::Index beta_index(Eigen::Index j) { return 2 + j; }
  static Eigen::Index pi_index(Eigen::Index kx, Eigen::Index j) { return 2 + kx + j; }
  static Eigen::Index xi_index(Eigen::Index kx, Eigen::Index j) { return 2 + 2 * kx + j; }

  bool all_finite() const;
};

/// Rotated structural basis eta = (rho_tilde, rho_tilde + alpha, beta - rho_tilde * pi).
/// Identification weakness is confined to eta1.
struct ParamEta {
  double eta1 = 0.0;
  double eta2 = 0.0;
  Vector eta3;
  Vector pi;
  Vector xi;
};

ParamEta rotate_to_eta(const ParamTheta& theta);
ParamTheta unrotate_to_theta(const ParamEta& eta);

/// Affine map recorded by standardize(): column means and sample standard
/// deviations (n - 1 denominator) of y2, the non-constant X columns and Z.
struct ScaleInfo {
  double y2_mean = 0.0;
  double y2_sd = 1.0;
  Vector x_mean;  // length kx; entry 0 (intercept) is 0
  Vector x_sd;    // length kx; entry 0 (intercept) is 1
  Vector z_mean;
  Vector z_sd;
};

struct Standardized {
  Dataset data;
  ScaleInfo scale;
};

/// Centers and scales y2, non-constant X columns and all Z columns.
Standardized standardize(const Dataset& data);

/// Maps a parameter estimated on standardized data back to original units.
ParamTheta unstandardize(const ParamTheta& theta, const ScaleInfo& scale);

/// Jacobian of the affine map implemented by unstandardize(); use it to carry
/// a covariance matrix to original units: A V A'.
Matrix unstandardize_jacobian(const ScaleInfo& scale);

/// Correlation between u and v implied by rho_tilde and sigma_v under the
/// Var(u | v) = 1 normalization: rho = rho_tilde sigma_v / sqrt(1 + rho_tilde^2 sigma_v^2).
double correlation_from_rho_tilde(double rho_tilde, double sigma_v);

/// Inverse of correlation_from_rho_tilde: rho / (sigma_v sqrt(1 - rho^2)).
double rho_tilde_from_correlation(double rho, double sigma_v);

/// Human-readable parameter labels in flat order.
std::vector<std::string> parameter_labels(const std::vector<std::string>& x_names,
                                          const std::vector<std::string>& z_names,
                                          const std::string& y2_name);

}  // namespace weakid
