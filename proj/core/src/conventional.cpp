#include "weakid/conventional.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "weakid/errors.hpp"
#include "weakid/numerics/distributions.hpp"
#include "weakid/numerics/quadrature.hpp"

namespace weakid {

FirstStageSummary first_stage(const Dataset& data) {
  const Eigen::Index n = data.n();
  const Eigen::Index kx = data.kx();
  const Eigen::Index kz = data.kz();
  if (n <= kx + kz) throw NearSingular("first_stage: fewer observations than regressors");

  Matrix W(n, kx + kz);
  W << data.X, data.Z;
  if (Eigen::ColPivHouseholderQR<Matrix>(W).rank() < kx + kz) {
    throw NearSingular("first_stage: (X, Z) is rank deficient");
  }

  // Partial X out of Z and y2 by QR projection.
  const Eigen::HouseholderQR<Matrix> qr(data.X);
  const Matrix Q = qr.householderQ() * Matrix::Identity(n, kx);
  const Matrix z_res = data.Z - Q * (Q.transpose() * data.Z);
  const Vector y_res = data.y2 - Q * (Q.transpose() * data.y2);

  const Matrix zz = z_res.transpose() * z_res;
  const Eigen::LDLT<Matrix> zz_ldlt(zz);
  FirstStageSummary out;
  out.n = n;
  out.kz = kz;
  out.xi_hat = zz_ldlt.solve(z_res.transpose() * y_res);
  const Vector e = y_res - z_res * out.xi_hat;
  const double dof = static_cast<double>(n - kx - kz);
  out.resid_var = e.squaredNorm() / dof;

  const double explained = out.xi_hat.dot(zz * out.xi_hat);
  out.F_homoskedastic = explained / (static_cast<double>(kz) * out.resid_var);
  out.cragg_donald = out.F_homoskedastic;

  const Matrix meat = z_res.transpose() * (z_res.array().colwise() * e.array().square()).matrix();
  const Matrix zz_inv = zz_ldlt.solve(Matrix::Identity(kz, kz));
  Matrix V = zz_inv * meat * zz_inv * (static_cast<double>(n) / dof);
  V = 0.5 * (V + V.transpose());
  out.F_robust = out.xi_hat.dot(V.ldlt().solve(out.xi_hat)) / static_cast<double>(kz);
  out.effective_F = explained / (V * zz).trace();
  return out;
}

TestReport rule_of_thumb(const FirstStageSummary& summary, double threshold, bool robust) {
  TestReport out;
  out.test = robust ? "Rule of thumb (robust F)" : "Rule of thumb";
  out.statistic = robust ? summary.F_robust : summary.F_homoskedastic;
  out.critical_value = threshold;
  out.reject = out.statistic > threshold;
  out.source = "fixed threshold";
  return out;
}

double stock_yogo_critical_value(Eigen::Index kz, Tolerance distortion) {
  const bool five = distortion == Tolerance::Five;
  if (kz == 1) return five ? 16.38 : 8.96;
  if (kz == 2) return five ? 19.93 : 11.59;
  std::ostringstream msg;
  msg << "stock_yogo: no embedded critical value for kz=" << kz;
  throw UnsupportedDesign(msg.str());
}

TestReport stock_yogo(const FirstStageSummary& summary, Eigen::Index kz, Tolerance distortion,
                      bool robust) {
  TestReport out;
  out.test = "Stock-Yogo";
  out.statistic = robust ? summary.F_robust : summary.cragg_donald;
  out.critical_value = stock_yogo_critical_value(kz, distortion);
  out.reject = out.statistic > out.critical_value;
  out.source = "table-sourced";
  return out;
}

double effective_f_critical_value(Tolerance tolerance, double eff_dof_hint) {
  const bool five = tolerance == Tolerance::Five;
  if (std::abs(eff_dof_hint - 1.0) <= 0.1) return five ? 37.42 : 23.11;
  if (std::abs(eff_dof_hint - 1.8) <= 0.1) return five ? 8.58 : 6.17;
  std::ostringstream msg;
  msg << "effective_f_test: no embedded critical value for effective dof " << eff_dof_hint;
  throw UnsupportedDesign(msg.str());
}

TestReport effective_f_test(const FirstStageSummary& summary, Tolerance tolerance,
                            double eff_dof_hint) {
  TestReport out;
  out.test = "Effective F";
  out.statistic = summary.effective_F;
  out.critical_value = effective_f_critical_value(tolerance, eff_dof_hint);
  out.reject = out.statistic > out.critical_value;
  out.source = "table-sourced";
  return out;
}

namespace {

// E[g(Z) phi(c + Z)^k] for Z ~ N(0, s2). The factor phi(c + z)^k combines with
// the N(0, s2) density into a scaled N(mu, 1/tau) density, so the remaining
// expectation of a polynomial g is exact under a small Gauss-Hermite rule.
template <class G>
double weighted_moment(G&& g, int k, double s2, double c) {
  const double tau = k + 1.0 / s2;
  const double mu = -k * c / tau;
  const double scale = std::pow(2.0 * std::numbers::pi, -0.5 * k) / std::sqrt(s2 * tau) *
                       std::exp(-0.5 * k * c * c * (1.0 - k / tau));
  return scale * gh_expectation([&g, mu](double x) { return g(mu + x); }, 1.0 / std::sqrt(tau), 32);
}

}  // namespace

double pruned_variance(double sigma_z_sq, double c) {
  if (!(sigma_z_sq > 0.0)) throw DomainError("pruned_variance: sigma_z_sq must be positive");
  const double m1 = weighted_moment([](double z) { return z; }, 1, sigma_z_sq, c);
  const double m2 = weighted_moment([](double z) { return z * z; }, 2, sigma_z_sq, c);
  return m2 - m1 * m1;
}

double pruning_ratio(double sigma_z_sq, double c) {
  const double l = pruned_variance(sigma_z_sq, c) / sigma_z_sq;
  const double l1 = pruned_variance(1.0, c);
  return 100.0 * l / l1;
}

}  // namespace weakid
