#include "weakid/djtest.hpp"

#include <algorithm>
#include <cmath>

#include "weakid/errors.hpp"
#include "weakid/numerics/distributions.hpp"

namespace weakid {

double DJReport::max_statistic() const {
  return statistics.empty() ? 0.0 : *std::max_element(statistics.begin(), statistics.end());
}

double DJReport::min_statistic() const {
  return statistics.empty() ? 0.0 : *std::min_element(statistics.begin(), statistics.end());
}

double loglog_rate(Eigen::Index n) {
  if (n < 16) throw DomainError("loglog_rate: n too small for log(log(n)) to be positive and stable");
  return std::log(std::log(static_cast<double>(n)));
}

ParamTheta distort(const ParamTheta& theta_hat, double delta_n) {
  ParamTheta out = theta_hat;
  out.rho_tilde += delta_n;
  out.alpha -= delta_n;
  out.beta += delta_n * theta_hat.pi;
  return out;
}

std::vector<double> delta_grid(const FitResult& fit, int m, double r_n, double ci_level) {
  if (m < 1) throw DomainError("delta_grid: m must be at least 1");
  if (!(r_n > 0.0)) throw DomainError("delta_grid: r_n must be positive");
  const double var = fit.vcov_available ? fit.vcov(ParamTheta::kRhoTilde, ParamTheta::kRhoTilde)
                                        : std::nan("");
  if (!(var > 0.0) || !std::isfinite(var)) {
    throw DomainError("delta_grid: standard error of rho_tilde is not positive");
  }
  const double z = normal_quantile(0.5 + ci_level / 2.0);
  const double center = fit.theta_hat.rho_tilde;
  const double half = z * std::sqrt(var);
  const double lower = center - half;
  const double width = 2.0 * half / m;

  std::vector<double> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double mid = lower + (i + 0.5) * width;
    // Only reachable for odd m with a zero estimate; the statistic would
    // collapse to J at the minimum.
    if (mid == 0.0) mid = 0.5 * width;
    out[static_cast<std::size_t>(i)] = mid / r_n;
  }
  return out;
}

double dj_statistic(const MomentSystem& system, const Dataset& data, const FitResult& fit,
                    double delta_n) {
  const CuObjective objective(system, data);
  const WeightFactor weight = objective.weight(fit.theta_hat.flat());
  return objective.pinned_value(distort(fit.theta_hat, delta_n).flat(), weight);
}

DJReport dj_test(const MomentSystem& system, const Dataset& data, const FitResult& fit,
                 const DJConfig& config) {
  if (config.m < 1) throw ConfigError("dj_test: m must be at least 1");
  if (!(config.level > 0.0 && config.level < 1.0)) {
    throw ConfigError("dj_test: level must lie in (0, 1)");
  }
  const Eigen::Index p = fit.num_params();
  if (system.H() + 1 <= p) throw DomainError("dj_test: H + 1 - p must be positive");

  DJReport report;
  report.df = static_cast<unsigned>(system.H() + 1 - p);
  const double r_n = loglog_rate(data.n());

  report.mode_used = config.mode;
  if (config.mode == DJMode::Grid) {
    try {
      report.deltas_used = delta_grid(fit, config.m, r_n, config.ci_level);
    } catch (const DomainError&) {
      report.mode_used = DJMode::Single;
      report.fell_back_to_single = true;
    }
  }
  if (report.mode_used == DJMode::Single) {
    report.deltas_used = {fit.theta_hat.rho_tilde / r_n};
  }

  const double tail = report.mode_used == DJMode::Grid ? config.level / config.m : config.level;
  report.critical_value = chi2_quantile(1.0 - tail, report.df);

  const CuObjective objective(system, data);
  const WeightFactor weight = objective.weight(fit.theta_hat.flat());
  report.statistics.reserve(report.deltas_used.size());
  for (double delta : report.deltas_used) {
    report.statistics.push_back(
        objective.pinned_value(distort(fit.theta_hat, delta).flat(), weight));
  }
  report.decision = report.max_statistic() > report.critical_value ? DJDecision::RejectWeak
                                                                   : DJDecision::FailToReject;
  return report;
}

}  // namespace weakid
