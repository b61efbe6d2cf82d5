#include "weakid/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <thread>

#include "weakid/conventional.hpp"
#include "weakid/djtest.hpp"
#include "weakid/errors.hpp"
#include "weakid/moments.hpp"
#include "weakid/numerics/distributions.hpp"

namespace weakid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

double wald_or_nan(const FitResult& fit, double alpha0) {
  if (!fit.vcov_available) return kNaN;
  const double var = fit.vcov(ParamTheta::kAlpha, ParamTheta::kAlpha);
  if (!(var > 0.0)) return kNaN;
  const double d = fit.theta_hat.alpha - alpha0;
  return d * d / var;
}

}  // namespace

double McDesign::target_correlation() const {
  return gamma / std::pow(static_cast<double>(n), lambda);
}

void McDesign::validate() const {
  if (n < 16) throw ConfigError("McDesign: n must be at least 16");
  if (!(lambda > 0.0 && lambda <= 0.5)) throw ConfigError("McDesign: lambda must lie in (0, 0.5]");
  if (!(std::abs(rho) < 1.0)) throw ConfigError("McDesign: |rho| must be below 1");
  if (!(sigma_z > 0.0 && sigma_v > 0.0)) throw ConfigError("McDesign: scales must be positive");
  if (replications == 0) throw ConfigError("McDesign: replications must be positive");
}

double McDesign::sigma_u() const { return 1.0 / std::sqrt(1.0 - rho * rho); }

double McDesign::rho_tilde0() const { return rho_tilde_from_correlation(rho, sigma_v); }

double implied_xi(const McDesign& design) {
  const double c = design.target_correlation();
  if (!(std::abs(c) < 1.0)) throw DomainError("implied_xi: gamma / n^lambda must be below 1");
  return c * design.sigma_v / (design.sigma_z * std::sqrt(1.0 - c * c));
}

RngStream replication_stream(const McDesign& design, std::size_t index) {
  return RngStream(design.seed, static_cast<std::uint64_t>(index));
}

Dataset generate(const McDesign& design, RngStream& stream) {
  const Eigen::Index n = design.n;
  const double xi = implied_xi(design);
  Dataset d;
  d.Z.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) d.Z(i, 0) = design.sigma_z * stream.normal();
  const auto uv = draw_bivariate_normal(stream, design.rho, design.sigma_u(), design.sigma_v,
                                        static_cast<std::size_t>(n));
  d.X = Matrix::Ones(n, 1);
  d.y1.resize(n);
  d.y2.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [u, v] = uv[static_cast<std::size_t>(i)];
    d.y2(i) = design.pi0 + xi * d.Z(i, 0) + v;
    d.y1(i) = design.beta0 + design.alpha0 * d.y2(i) + u > 0.0 ? 1.0 : 0.0;
  }
  return d;
}

ReplicationRecord run_replication(const McDesign& design, std::size_t index,
                                  const McRunOptions& options) {
  ReplicationRecord rec;
  rec.index = index;
  RngStream stream = replication_stream(design, index);
  const Dataset data = generate(design, stream);

  const FirstStageSummary fs = first_stage(data);
  rec.F_homoskedastic = fs.F_homoskedastic;
  rec.effective_F = fs.effective_F;
  rec.ss_reject = rule_of_thumb(fs).reject;
  rec.sy5_reject = stock_yogo(fs, 1, Tolerance::Five).reject;
  rec.sy10_reject = stock_yogo(fs, 1, Tolerance::Ten).reject;
  rec.eff5_reject = effective_f_test(fs, Tolerance::Five, 1.0).reject;
  rec.eff10_reject = effective_f_test(fs, Tolerance::Ten, 1.0).reject;

  try {
    const FitResult two_step = fit_2scml(data);
    rec.alpha_2scml = two_step.theta_hat.alpha;
    rec.beta_2scml = two_step.theta_hat.beta(0);
    rec.wald_2scml = wald_or_nan(two_step, design.alpha0);

    const MomentSystem system = default_instruments(data, InstrumentSpec::MonteCarlo);
    CugmmOptions cu = options.cugmm;
    cu.seed = options.cugmm.seed ^ (design.seed + 0x9e3779b97f4a7c15ULL * (index + 1));
    const FitResult cugmm = fit_cugmm(system, data, two_step.theta_hat, cu);
    rec.alpha_cugmm = cugmm.theta_hat.alpha;
    rec.beta_cugmm = cugmm.theta_hat.beta(0);
    rec.rho_tilde_cugmm = cugmm.theta_hat.rho_tilde;
    rec.J = cugmm.J_at_min;
    rec.wald_cugmm = wald_or_nan(cugmm, design.alpha0);

    DJConfig dj;
    dj.mode = DJMode::Single;
    dj.level = options.level;
    const DJReport report = dj_test(system, data, cugmm, dj);
    rec.dj_statistic = report.statistics.front();
    rec.dj_reject = report.reject();
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.failure = e.what();
    std::replace(rec.failure.begin(), rec.failure.end(), '"', '\'');
    const auto newline = rec.failure.find('\n');
    if (newline != std::string::npos) rec.failure.resize(newline);
  }
  return rec;
}

unsigned resolve_workers(unsigned requested) {
  unsigned workers = requested;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("WEAKID_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) workers = std::min(workers, static_cast<unsigned>(cap));
  }
  return std::max(1u, workers);
}

McSummary run_design(const McDesign& design, const McRunOptions& options) {
  design.validate();
  (void)implied_xi(design);
  const std::size_t reps = design.replications;
  std::vector<ReplicationRecord> records(reps);

  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(resolve_workers(options.workers), reps));
  std::atomic<std::size_t> next{0};
  const auto work = [&]() {
    for (std::size_t i = next.fetch_add(1); i < reps; i = next.fetch_add(1)) {
      records[i] = run_replication(design, i, options);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  return summarize(design, std::move(records), options.level);
}

EstimatorMetrics estimator_metrics(const std::vector<double>& estimates, double truth) {
  EstimatorMetrics m;
  m.count = estimates.size();
  if (estimates.empty()) {
    m.bias = m.sd = m.rrmse = kNaN;
    return m;
  }
  const auto N = static_cast<double>(estimates.size());
  double sum = 0.0;
  for (double e : estimates) sum += e;
  const double mean = sum / N;
  double ss = 0.0;
  double rel = 0.0;
  for (double e : estimates) {
    ss += (e - mean) * (e - mean);
    const double r = (e - truth) / truth;
    rel += r * r;
  }
  m.bias = mean - truth;
  m.sd = estimates.size() > 1 ? std::sqrt(ss / (N - 1.0)) : 0.0;
  m.rrmse = std::sqrt(rel / N);
  return m;
}

McSummary summarize(const McDesign& design, std::vector<ReplicationRecord> records, double level) {
  McSummary s;
  s.design = design;
  s.xi = implied_xi(design);

  std::vector<double> a2, b2, ac, bc;
  std::size_t dj = 0, ss = 0, sy5 = 0, sy10 = 0, e5 = 0, e10 = 0;
  std::size_t w2 = 0, w2n = 0, wc = 0, wcn = 0;
  const double crit = chi2_quantile(1.0 - level, 1);
  for (const ReplicationRecord& r : records) {
    if (!r.ok) {
      ++s.failed_replications;
      continue;
    }
    a2.push_back(r.alpha_2scml);
    b2.push_back(r.beta_2scml);
    ac.push_back(r.alpha_cugmm);
    bc.push_back(r.beta_cugmm);
    dj += r.dj_reject;
    ss += r.ss_reject;
    sy5 += r.sy5_reject;
    sy10 += r.sy10_reject;
    e5 += r.eff5_reject;
    e10 += r.eff10_reject;
    if (std::isfinite(r.wald_2scml)) {
      ++w2n;
      w2 += r.wald_2scml > crit;
    }
    if (std::isfinite(r.wald_cugmm)) {
      ++wcn;
      wc += r.wald_cugmm > crit;
    }
  }
  s.completed_replications = a2.size();
  s.metrics["alpha_2scml"] = estimator_metrics(a2, design.alpha0);
  s.metrics["beta_2scml"] = estimator_metrics(b2, design.beta0);
  s.metrics["alpha_cugmm"] = estimator_metrics(ac, design.alpha0);
  s.metrics["beta_cugmm"] = estimator_metrics(bc, design.beta0);

  const auto rate = [](std::size_t k, std::size_t total) {
    return total == 0 ? kNaN : static_cast<double>(k) / static_cast<double>(total);
  };
  const std::size_t done = s.completed_replications;
  s.reject_rates["DJ"] = rate(dj, done);
  s.reject_rates["SS"] = rate(ss, done);
  s.reject_rates["SY5"] = rate(sy5, done);
  s.reject_rates["SY10"] = rate(sy10, done);
  s.reject_rates["EffF5"] = rate(e5, done);
  s.reject_rates["EffF10"] = rate(e10, done);
  s.reject_rates["Wald_2scml"] = rate(w2, w2n);
  s.reject_rates["Wald_cugmm"] = rate(wc, wcn);
  s.wald_distortion_2scml = s.reject_rates["Wald_2scml"] - level;
  s.wald_distortion_cugmm = s.reject_rates["Wald_cugmm"] - level;
  s.replications = std::move(records);
  return s;
}

double size_adjusted_power(std::vector<double> null_stats, const std::vector<double>& alt_stats) {
  if (null_stats.empty()) throw DomainError("size_adjusted_power: null_stats is empty");
  if (alt_stats.empty()) return kNaN;
  std::sort(null_stats.begin(), null_stats.end());
  const double pos = 0.95 * static_cast<double>(null_stats.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, null_stats.size() - 1);
  const double critical = null_stats[lo] + (pos - static_cast<double>(lo)) * (null_stats[hi] - null_stats[lo]);
  const auto above = std::count_if(alt_stats.begin(), alt_stats.end(),
                                   [critical](double x) { return x > critical; });
  return static_cast<double>(above) / static_cast<double>(alt_stats.size());
}

std::vector<std::string> summary_csv_columns() {
  return {"n",          "rho",         "sigma_z",      "sigma_v",      "gamma",
          "lambda",     "xi",          "replications", "seed",         "completed",
          "failed",     "bias_alpha_2scml", "sd_alpha_2scml", "rrmse_alpha_2scml",
          "bias_alpha_cugmm", "sd_alpha_cugmm", "rrmse_alpha_cugmm",
          "bias_beta_2scml", "sd_beta_2scml", "rrmse_beta_2scml",
          "bias_beta_cugmm", "sd_beta_cugmm", "rrmse_beta_cugmm",
          "wald_distortion_2scml", "wald_distortion_cugmm",
          "reject_DJ",  "reject_SS",   "reject_SY5",   "reject_SY10",  "reject_EffF5",
          "reject_EffF10"};
}

void write_summary_csv_header(std::ostream& out) {
  const auto cols = summary_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

void write_summary_csv_row(std::ostream& out, const McSummary& s) {
  const McDesign& d = s.design;
  const auto& m = s.metrics;
  const auto& r = s.reject_rates;
  std::vector<std::string> row = {std::to_string(d.n),
                                  fmt(d.rho),
                                  fmt(d.sigma_z),
                                  fmt(d.sigma_v),
                                  fmt(d.gamma),
                                  fmt(d.lambda),
                                  fmt(s.xi),
                                  std::to_string(d.replications),
                                  std::to_string(d.seed),
                                  std::to_string(s.completed_replications),
                                  std::to_string(s.failed_replications)};
  for (const char* key : {"alpha_2scml", "alpha_cugmm", "beta_2scml", "beta_cugmm"}) {
    const EstimatorMetrics& e = m.at(key);
    row.push_back(fmt(e.bias));
    row.push_back(fmt(e.sd));
    row.push_back(fmt(e.rrmse));
  }
  row.push_back(fmt(s.wald_distortion_2scml));
  row.push_back(fmt(s.wald_distortion_cugmm));
  for (const char* key : {"DJ", "SS", "SY5", "SY10", "EffF5", "EffF10"}) row.push_back(fmt(r.at(key)));
  for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
  out << '\n';
}

void write_replications_csv(std::ostream& out, const McSummary& s) {
  out << "index,ok,alpha_2scml,beta_2scml,alpha_cugmm,beta_cugmm,rho_tilde_cugmm,J,dj_statistic,"
         "dj_reject,wald_2scml,wald_cugmm,F_homoskedastic,effective_F,alpha_cugmm_standardized,"
         "failure\n";
  // Standardized CUGMM alpha over successful replications, for density plots.
  const EstimatorMetrics& a = s.metrics.at("alpha_cugmm");
  const double mean = a.bias + s.design.alpha0;
  for (const ReplicationRecord& r : s.replications) {
    out << r.index << ',' << (r.ok ? 1 : 0) << ',' << fmt(r.alpha_2scml) << ','
        << fmt(r.beta_2scml) << ',' << fmt(r.alpha_cugmm) << ',' << fmt(r.beta_cugmm) << ','
        << fmt(r.rho_tilde_cugmm) << ',' << fmt(r.J) << ',' << fmt(r.dj_statistic) << ','
        << (r.dj_reject ? 1 : 0) << ',' << fmt(r.wald_2scml) << ',' << fmt(r.wald_cugmm) << ','
        << fmt(r.F_homoskedastic) << ',' << fmt(r.effective_F) << ','
        << (r.ok && a.sd > 0.0 ? fmt((r.alpha_cugmm - mean) / a.sd) : std::string("nan")) << ','
        << '"' << r.failure << '"' << '\n';
  }
}

}  // namespace weakid
