#include "weakid/model.hpp"

#include <cmath>

#include "weakid/errors.hpp"

namespace weakid {

void Dataset::validate() const {
  const Eigen::Index rows = y1.size();
  if (y2.size() != rows || X.rows() != rows || Z.rows() != rows) {
    throw ValueError("Dataset: y1, y2, X and Z must have the same number of rows");
  }
  if (X.cols() < 1) throw ValueError("Dataset: X must contain the intercept column");
  if (Z.cols() < 1) throw ValueError("Dataset: at least one excluded instrument is required");
  if (rows <= X.cols() + Z.cols() + 2) {
    throw ValueError("Dataset: need n > kx + kz + 2 observations");
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (y1(i) != 0.0 && y1(i) != 1.0) throw ValueError("Dataset: y1 must be binary (0/1)");
    if (X(i, 0) != 1.0) throw ValueError("Dataset: first column of X must be the constant 1");
  }
  if (!y2.allFinite() || !X.allFinite() || !Z.allFinite()) {
    throw ValueError("Dataset: non-finite entries");
  }
}

Vector ParamTheta::flat() const {
  Vector out(dim());
  out(kRhoTilde) = rho_tilde;
  out(kAlpha) = alpha;
  out.segment(2, kx()) = beta;
  out.segment(2 + kx(), kx()) = pi;
  out.segment(2 + 2 * kx(), kz()) = xi;
  return out;
}

ParamTheta ParamTheta::from_flat(const Vector& flat, Eigen::Index kx, Eigen::Index kz) {
  if (flat.size() != 2 + 2 * kx + kz) throw DomainError("ParamTheta::from_flat: wrong length");
  ParamTheta t;
  t.rho_tilde = flat(kRhoTilde);
  t.alpha = flat(kAlpha);
  t.beta = flat.segment(2, kx);
  t.pi = flat.segment(2 + kx, kx);
  t.xi = flat.segment(2 + 2 * kx, kz);
  return t;
}

ParamTheta ParamTheta::zeros(Eigen::Index kx, Eigen::Index kz) {
  return from_flat(Vector::Zero(2 + 2 * kx + kz), kx, kz);
}

bool ParamTheta::all_finite() const {
  return std::isfinite(rho_tilde) && std::isfinite(alpha) && beta.allFinite() &&
         pi.allFinite() && xi.allFinite();
}

ParamEta rotate_to_eta(const ParamTheta& theta) {
  ParamEta eta;
  eta.eta1 = theta.rho_tilde;
  eta.eta2 = theta.rho_tilde + theta.alpha;
  eta.eta3 = theta.beta - theta.rho_tilde * theta.pi;
  eta.pi = theta.pi;
  eta.xi = theta.xi;
  return eta;
}

ParamTheta unrotate_to_theta(const ParamEta& eta) {
  ParamTheta theta;
  theta.rho_tilde = eta.eta1;
  theta.alpha = eta.eta2 - eta.eta1;
  theta.beta = eta.eta3 + eta.eta1 * eta.pi;
  theta.pi = eta.pi;
  theta.xi = eta.xi;
  return theta;
}

namespace {

void column_moments(const Eigen::Ref<const Vector>& col, double& mean, double& sd) {
  const auto n = static_cast<double>(col.size());
  mean = col.mean();
  sd = std::sqrt((col.array() - mean).square().sum() / (n - 1.0));
}

}  // namespace

Standardized standardize(const Dataset& data) {
  Standardized out;
  out.data = data;
  ScaleInfo& s = out.scale;

  column_moments(data.y2, s.y2_mean, s.y2_sd);
  if (!(s.y2_sd > 0.0)) throw ValueError("standardize: y2 has zero variance");
  out.data.y2 = (data.y2.array() - s.y2_mean) / s.y2_sd;

  s.x_mean = Vector::Zero(data.kx());
  s.x_sd = Vector::Ones(data.kx());
  for (Eigen::Index j = 1; j < data.kx(); ++j) {
    column_moments(data.X.col(j), s.x_mean(j), s.x_sd(j));
    if (!(s.x_sd(j) > 0.0)) throw ValueError("standardize: constant column in X");
    out.data.X.col(j) = (data.X.col(j).array() - s.x_mean(j)) / s.x_sd(j);
  }

  s.z_mean.resize(data.kz());
  s.z_sd.resize(data.kz());
  for (Eigen::Index j = 0; j < data.kz(); ++j) {
    column_moments(data.Z.col(j), s.z_mean(j), s.z_sd(j));
    if (!(s.z_sd(j) > 0.0)) throw ValueError("standardize: constant column in Z");
    out.data.Z.col(j) = (data.Z.col(j).array() - s.z_mean(j)) / s.z_sd(j);
  }
  return out;
}

ParamTheta unstandardize(const ParamTheta& t, const ScaleInfo& s) {
  const Eigen::Index kx = t.kx();
  const Eigen::Index kz = t.kz();
  ParamTheta raw = t;

  // Structural index: alpha*y2s + beta'xs + rho_tilde*vs, with vs = v / sd(y2).
  raw.alpha = t.alpha / s.y2_sd;
  raw.rho_tilde = t.rho_tilde / s.y2_sd;
  raw.beta(0) = t.beta(0) - t.alpha * s.y2_mean / s.y2_sd;
  for (Eigen::Index j = 1; j < kx; ++j) {
    raw.beta(j) = t.beta(j) / s.x_sd(j);
    raw.beta(0) -= raw.beta(j) * s.x_mean(j);
  }

  // Reduced form: y2 = mean + sd * (pi'xs + xi'zs + vs).
  raw.pi(0) = s.y2_mean + s.y2_sd * t.pi(0);
  for (Eigen::Index j = 1; j < kx; ++j) {
    raw.pi(j) = s.y2_sd * t.pi(j) / s.x_sd(j);
    raw.pi(0) -= raw.pi(j) * s.x_mean(j);
  }
  for (Eigen::Index j = 0; j < kz; ++j) {
    raw.xi(j) = s.y2_sd * t.xi(j) / s.z_sd(j);
    raw.pi(0) -= raw.xi(j) * s.z_mean(j);
  }
  return raw;
}

Matrix unstandardize_jacobian(const ScaleInfo& s) {
  const Eigen::Index kx = s.x_mean.size();
  const Eigen::Index kz = s.z_mean.size();
  const Eigen::Index p = 2 + 2 * kx + kz;
  const ParamTheta zero = ParamTheta::zeros(kx, kz);
  const Vector offset = unstandardize(zero, s).flat();
  Matrix jac(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    Vector e = Vector::Zero(p);
    e(k) = 1.0;
    jac.col(k) = unstandardize(ParamTheta::from_flat(e, kx, kz), s).flat() - offset;
  }
  return jac;
}

double correlation_from_rho_tilde(double rho_tilde, double sigma_v) {
  const double a = rho_tilde * sigma_v;
  return a / std::sqrt(1.0 + a * a);
}

double rho_tilde_from_correlation(double rho, double sigma_v) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("rho_tilde_from_correlation: |rho| must be < 1");
  if (!(sigma_v > 0.0)) throw DomainError("rho_tilde_from_correlation: sigma_v must be positive");
  return rho / (sigma_v * std::sqrt(1.0 - rho * rho));
}

std::vector<std::string> parameter_labels(const std::vector<std::string>& x_names,
                                          const std::vector<std::string>& z_names,
                                          const std::string& y2_name) {
  std::vector<std::string> labels{"rho_tilde", "alpha[" + y2_name + "]"};
  for (const auto& x : x_names) labels.push_back("beta[" + x + "]");
  for (const auto& x : x_names) labels.push_back("pi[" + x + "]");
  for (const auto& z : z_names) labels.push_back("xi[" + z + "]");
  return labels;
}

}  // namespace weakid
