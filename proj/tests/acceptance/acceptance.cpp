// Acceptance suite: one PASS/FAIL line per criterion. Run all criteria, or a
// single one with --criterion N.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "weakid/conventional.hpp"
#include "weakid/djtest.hpp"
#include "weakid/estimators.hpp"
#include "weakid/io.hpp"
#include "weakid/montecarlo.hpp"
#include "weakid/numerics/distributions.hpp"
#include "weakid/pipeline.hpp"

using namespace weakid;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Collects named checks and renders one line.
class Verdict {
 public:
  void check(bool ok, const std::string& what) {
    all_ &= ok;
    notes_ << (notes_.tellp() > 0 ? "; " : "") << (ok ? "" : "MISS ") << what;
  }
  bool passed() const { return all_; }
  std::string notes() const { return notes_.str(); }

 private:
  bool all_ = true;
  std::ostringstream notes_;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

bool near(double x, double target, double tol) { return std::abs(x - target) <= tol; }

McSummary run_cell(Eigen::Index n, double rho, double lambda, std::size_t reps) {
  McDesign d;
  d.n = n;
  d.rho = rho;
  d.lambda = lambda;
  d.replications = reps;
  d.seed = 20240101;
  return run_design(d);
}

// ---------------------------------------------------------------------------

Verdict criterion_1() {
  Verdict v;
  const auto start = Clock::now();
  const double s2[] = {1, 2, 5, 10, 50, 100};
  const double published[] = {100, 79.03, 30.18, 28.13, 7.42, 3.83};
  double ratios[6];
  for (int k = 0; k < 6; ++k) ratios[k] = pruning_ratio(s2[k]);
  const double elapsed = seconds_since(start);
  for (int k = 0; k < 6; ++k) {
    v.check(near(ratios[k], published[k], 0.5),
            fmt("sigma_z^2=%g: %.2f%% vs %.2f%%", s2[k], ratios[k], published[k]));
  }
  v.check(elapsed < 1.0, fmt("runtime %.4fs < 1s", elapsed));
  return v;
}

Verdict criterion_2() {
  Verdict v;
  const struct {
    double p;
    unsigned df;
    double expected;
  } cases[] = {{0.95, 1, 3.84}, {0.95, 2, 5.99}, {0.9975, 2, 11.98}};
  for (const auto& c : cases) {
    const double q = chi2_quantile(c.p, c.df);
    v.check(std::round(q * 100.0) / 100.0 == c.expected,
            fmt("chi2(%g, df %g) = %.4f", c.p, c.df, q) + fmt(" -> %.2f", c.expected));
  }
  return v;
}

Verdict criterion_3() {
  Verdict v;
  const auto start = Clock::now();
  const LoadedData loaded = load_csv(weakid::testing::data_path("mroz.csv"), lfp_roles());
  const Standardized st = standardize(loaded.data);
  const Dataset& data = st.data;

  FitResult two = fit_2scml(data);
  two.scaling = st.scale;
  const MomentSystem system = default_instruments(data, InstrumentSpec::Empirical);
  CugmmOptions opts;
  opts.seed = RunConfig{}.seed;
  FitResult cu = fit_cugmm(system, data, two.theta_hat, opts);
  cu.scaling = st.scale;
  const DJReport dj = dj_test(system, data, cu);
  const FirstStageSummary fs = first_stage(loaded.data);
  const double elapsed = seconds_since(start);

  const double educ_2s = to_original_units(two).theta_hat.alpha;
  const double educ_cu = to_original_units(cu).theta_hat.alpha;
  const double rho = implied_correlation(two, data);
  const double me = marginal_effects(two, data)(0);
  v.check(loaded.data.n() == 753, fmt("n=%g", static_cast<double>(loaded.data.n())));
  v.check(near(educ_2s, 0.1503, 0.002), fmt("2SCML educ %.5f (0.1503+-0.002)", educ_2s));
  v.check(near(educ_cu, 0.1500, 0.005), fmt("CUGMM educ %.5f (0.1500+-0.005)", educ_cu));
  v.check(near(rho, -0.0453, 0.01), fmt("rho %.5f (-0.0453+-0.01)", rho));
  v.check(near(cu.J_at_min, 0.122, 0.05), fmt("J %.4f (0.122+-0.05)", cu.J_at_min));
  v.check(near(me, 0.0587, 0.002), fmt("ME educ %.5f (0.0587+-0.002)", me));
  v.check(near(fs.F_homoskedastic, 95.70, 0.5), fmt("F %.3f (95.70+-0.5)", fs.F_homoskedastic));
  v.check(near(fs.F_robust, 81.89, 1.0), fmt("robust F %.3f (81.89+-1.0)", fs.F_robust));
  v.check(dj.reject() && dj.max_statistic() >= 14.0 && dj.max_statistic() <= 21.0,
          fmt("DJ grid max %.3f, critical %.3f", dj.max_statistic(), dj.critical_value) +
              (dj.reject() ? " RejectWeak" : " FailToReject") + " (want RejectWeak, max in [14,21])");
  v.check(elapsed < 30.0, fmt("runtime %.2fs < 30s", elapsed));
  return v;
}

Verdict criterion_4() {
  Verdict v;
  const auto start = Clock::now();
  const std::size_t reps = 500;
  for (double rho : {0.5, 0.95}) {
    const McSummary s = run_cell(500, rho, 0.5, reps);
    const double dj = s.reject_rates.at("DJ");
    const double ss = s.reject_rates.at("SS");
    const double n = static_cast<double>(s.completed_replications);
    v.check(s.completed_replications > 0, fmt("rho=%g completed %g failed %g", rho, n,
                                              static_cast<double>(s.failed_replications)));
    v.check(dj <= 0.08, fmt("rho=%g DJ %.3f <= 0.08", rho, dj));
    v.check(ss >= 0.03 && ss <= 0.10, fmt("rho=%g SS %.3f in [0.03,0.10]", rho, ss));
    if (rho == 0.95) {
      // Two standard errors of the difference of two rates on the same replications.
      const double se = std::sqrt((dj * (1 - dj) + ss * (1 - ss)) / n);
      v.check(dj < ss || dj - ss <= 2.0 * se,
              fmt("rho=0.95 DJ %.3f vs SS %.3f (2 s.e. %.3f)", dj, ss, 2.0 * se));
    }
  }
  const double elapsed = seconds_since(start);
  v.check(elapsed < 1200.0, fmt("runtime %.1fs < 1200s on %g workers", elapsed,
                                static_cast<double>(resolve_workers(0))));
  return v;
}

Verdict criterion_5() {
  Verdict v;
  const McSummary strong = run_cell(5000, 0.95, 0.1, 300);
  const McSummary weak = run_cell(5000, 0.95, 0.4, 300);
  const double a = strong.reject_rates.at("DJ");
  const double b = weak.reject_rates.at("DJ");
  v.check(a >= 0.90, fmt("DJ rate lambda=0.1 %.3f >= 0.90", a));
  v.check(a - b >= 0.2, fmt("lambda=0.1 %.3f minus lambda=0.4 %.3f = %.3f >= 0.2", a, b, a - b));
  v.check(strong.failed_replications + weak.failed_replications == 0,
          fmt("failed replications %g + %g", static_cast<double>(strong.failed_replications),
              static_cast<double>(weak.failed_replications)));
  return v;
}

Verdict criterion_6() {
  Verdict v;
  const std::size_t reps = 300;
  const auto rrmse = [](const McSummary& s) { return s.metrics.at("alpha_cugmm").rrmse; };
  const double w500 = rrmse(run_cell(500, 0.95, 0.5, reps));
  const double w10k = rrmse(run_cell(10000, 0.95, 0.5, reps));
  v.check(w10k >= 0.5 * w500,
          fmt("lambda=0.5 rrmse n=500 %.4f, n=1e4 %.4f, ratio %.3f >= 0.5", w500, w10k, w10k / w500));
  const double s500 = rrmse(run_cell(500, 0.95, 0.2, reps));
  const double s10k = rrmse(run_cell(10000, 0.95, 0.2, reps));
  v.check(s10k <= 0.4 * s500, fmt("lambda=0.2 rrmse n=500 %.4f, n=1e4 %.4f, shrink %.1f%% >= 60%%",
                                  s500, s10k, 100.0 * (1.0 - s10k / s500)));
  return v;
}

// Property suite ------------------------------------------------------------

Vector gbar_direct(const MomentSystem& sys, const Dataset& data, const Vector& flat) {
  const ParamTheta t = ParamTheta::from_flat(flat, data.kx(), data.kz());
  Vector g = Vector::Zero(sys.H());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const Observation o = observation(data, i);
    g += sys.a(o) * residual_structural(t, o) + sys.b(o) * residual_reduced(t, o);
  }
  return g / static_cast<double>(data.n());
}

Verdict criterion_7() {
  Verdict v;
  const auto start = Clock::now();
  McDesign d;
  d.rho = 0.5;
  d.lambda = 0.2;
  d.n = 1000;

  // Moment Jacobian against central differences.
  {
    const Dataset data = weakid::testing::simulate(d.n, d.lambda, 71);
    const MomentSystem sys = default_instruments(data, InstrumentSpec::MonteCarlo);
    double worst = 0.0;
    RngStream s(71, 1);
    for (int trial = 0; trial < 5; ++trial) {
      Vector x = weakid::testing::truth(d).flat();
      for (Eigen::Index k = 0; k < x.size(); ++k) x(k) += 0.3 * s.normal();
      const ParamTheta t = ParamTheta::from_flat(x, 1, 1);
      const Matrix G = evaluate(sys, data, t, t).G;
      const Matrix fd = weakid::testing::numeric_jacobian(
          [&](const Vector& y) { return gbar_direct(sys, data, y); }, x);
      worst = std::max(worst, (G - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }
    v.check(worst < 1e-4, fmt("Jacobian rel. error %.2e < 1e-4", worst));
  }

  // Cross-block covariance at the truth.
  {
    McDesign big = d;
    big.n = 50000;
    const Dataset data = weakid::testing::simulate(big.n, big.lambda, 72);
    CuObjective obj(default_instruments(data, InstrumentSpec::MonteCarlo), data);
    const Matrix g = obj.moments(weakid::testing::truth(big).flat());
    const Matrix c = g.rowwise() - g.colwise().mean();
    double worst_z = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 4; j < 6; ++j) {
        const Vector prod = c.col(i).cwiseProduct(c.col(j));
        const double se = std::sqrt((prod.array() - prod.mean()).square().mean() / big.n);
        worst_z = std::max(worst_z, std::abs(prod.mean()) / se);
      }
    }
    v.check(worst_z < 4.0, fmt("cross-block covariance max |z| %.2f < 4", worst_z));
  }

  // CU objective bound: no random parameter beats the minimum.
  {
    const Dataset data = weakid::testing::simulate(500, d.lambda, 73);
    const MomentSystem sys = default_instruments(data, InstrumentSpec::MonteCarlo);
    const FitResult fit = fit_cugmm(sys, data, fit_2scml(data).theta_hat);
    CuObjective obj(sys, data);
    RngStream s(73, 2);
    double margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 100; ++k) {
      Vector x = fit.theta_hat.flat();
      const double scale = k % 2 == 0 ? 0.05 : 1.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) x(j) += scale * s.normal();
      margin = std::min(margin, obj.value(x) - fit.J_at_min);
    }
    v.check(margin >= -1e-6, fmt("min J(random) - J(min) = %.3e >= -1e-6", margin));
  }

  // Just-identified system built from the two-step score: J = 0 and the two estimators agree.
  {
    const Dataset data = weakid::testing::simulate(800, 0.1, 74);
    const FitResult two = fit_2scml(data);
    const ParamTheta t = two.theta_hat;
    const auto a = [t](double y2, const RowVector& x, const RowVector& z) {
      const double v_ = y2 - x.dot(t.pi) - z.dot(t.xi);
      const double idx = t.alpha * y2 + x.dot(t.beta) + t.rho_tilde * v_;
      Vector out(3);
      out << v_, y2, x(0);
      return Vector(out * (normal_pdf(idx) / (normal_cdf(idx) * normal_cdf(-idx))));
    };
    const auto b = [](const RowVector& x, const RowVector& z) {
      Vector out(2);
      out << x(0), z(0);
      return out;
    };
    const MomentSystem sys = custom_instruments("score", 3, a, 2, b);
    ParamTheta init = t;
    init.alpha += 0.1;
    const FitResult cu = fit_cugmm(sys, data, init);
    const double gap = (cu.theta_hat.flat() - t.flat()).cwiseAbs().maxCoeff();
    v.check(cu.J_at_min < 1e-8, fmt("just-identified J %.2e < 1e-8", cu.J_at_min));
    v.check(gap < 1e-5, fmt("2SCML/CUGMM max gap %.2e < 1e-5", gap));
  }

  // Distortion moves eta1 only.
  {
    ParamTheta t = ParamTheta::zeros(3, 2);
    RngStream s(75, 0);
    Vector f = t.flat();
    for (Eigen::Index k = 0; k < f.size(); ++k) f(k) = s.normal();
    t = ParamTheta::from_flat(f, 3, 2);
    double off = 0.0;
    double on = 0.0;
    for (double delta : {-0.7, 0.01, 2.5}) {
      const ParamEta e0 = rotate_to_eta(t);
      const ParamEta e1 = rotate_to_eta(distort(t, delta));
      on = std::max(on, std::abs(e1.eta1 - e0.eta1 - delta));
      off = std::max({off, std::abs(e1.eta2 - e0.eta2), (e1.eta3 - e0.eta3).cwiseAbs().maxCoeff(),
                      (e1.pi - e0.pi).cwiseAbs().maxCoeff(), (e1.xi - e0.xi).cwiseAbs().maxCoeff()});
    }
    v.check(on < 1e-13 && off < 1e-13, fmt("distortion: eta1 error %.1e, other coordinates %.1e", on, off));
  }

  // Worker-count determinism.
  {
    McDesign small = d;
    small.n = 300;
    small.replications = 8;
    McRunOptions one;
    one.workers = 1;
    McRunOptions four = one;
    four.workers = 4;
    std::ostringstream a, b;
    write_replications_csv(a, run_design(small, one));
    write_replications_csv(b, run_design(small, four));
    write_summary_csv_row(a, run_design(small, one));
    write_summary_csv_row(b, run_design(small, four));
    v.check(a.str() == b.str(), "identical output with 1 and 4 workers");
  }

  const double elapsed = seconds_since(start);
  v.check(elapsed < 300.0, fmt("runtime %.1fs < 300s", elapsed));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria = {criterion_1, criterion_2, criterion_3,
                                                          criterion_4, criterion_5, criterion_6,
                                                          criterion_7};
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "unknown criterion %d\n", only);
    return 2;
  }
  bool all = true;
  for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) {
    if (only != 0 && k != only) continue;
    Verdict v;
    try {
      v = criteria[static_cast<std::size_t>(k - 1)]();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    std::printf("CRITERION %d: %s  %s\n", k, v.passed() ? "PASS" : "FAIL", v.notes().c_str());
    std::fflush(stdout);
    all &= v.passed();
  }
  return all ? 0 : 1;
}
