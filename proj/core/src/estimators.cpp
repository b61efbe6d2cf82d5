#include "weakid/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "weakid/errors.hpp"
#include "weakid/numerics/distributions.hpp"
#include "weakid/numerics/rng.hpp"
#include "weakid/optimize.hpp"

namespace weakid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Probit Newton-Raphson policy.
constexpr int kProbitMaxIterations = 200;
constexpr double kProbitScoreTol = 1e-8;
constexpr double kSeparationBound = 1e4;

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix nan_matrix(Eigen::Index p) { return Matrix::Constant(p, p, kNaN); }

// Generalized residual of the probit log-likelihood and its derivative in the index.
struct ProbitTerms {
  Vector h;
  Vector dh;
  double loglik = 0.0;
};

ProbitTerms probit_terms(const Vector& y1, const Vector& index) {
  const Eigen::Index n = y1.size();
  ProbitTerms t;
  t.h.resize(n);
  t.dh.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = std::clamp(index(i), -kIndexClamp, kIndexClamp);
    // Signed index so that both outcomes use the inverse Mills ratio at q*c.
    const double q = y1(i) > 0.5 ? 1.0 : -1.0;
    const double cdf = normal_cdf(q * c);
    const double mills = normal_pdf(c) / cdf;
    t.h(i) = q * mills;
    t.dh(i) = -t.h(i) * (c + t.h(i));
    t.loglik += std::log(cdf);
  }
  return t;
}

struct ProbitFit {
  Vector coef;
  ProbitTerms terms;
  int iterations = 0;
};

// A diverging coefficient or an essentially perfect fit means the maximizer
// lies at infinity; the score can still look converged once phi underflows.
void check_separation(const ProbitFit& fit) {
  if (optim::inf_norm(fit.coef) > kSeparationBound || fit.terms.loglik > -1e-6) {
    throw SeparationDetected("probit likelihood has no finite maximizer (perfect separation)");
  }
}

ProbitFit probit_newton(const Vector& y1, const Matrix& R) {
  const Eigen::Index k = R.cols();
  ProbitFit fit;
  fit.coef = Vector::Zero(k);
  fit.terms = probit_terms(y1, R * fit.coef);

  for (int iter = 0; iter < kProbitMaxIterations; ++iter) {
    fit.iterations = iter;
    const Vector score = R.transpose() * fit.terms.h;
    if (optim::inf_norm(score) < kProbitScoreTol) {
      check_separation(fit);
      break;
    }

    const Matrix info = -(R.transpose() * (R.array().colwise() * fit.terms.dh.array()).matrix());
    const Vector step = SpdFactor(symmetrize(info)).solve(score);

    double scale = 1.0;
    ProbitTerms trial;
    Vector candidate;
    bool improved = false;
    for (int bt = 0; bt < 50; ++bt) {
      candidate = fit.coef + scale * step;
      trial = probit_terms(y1, R * candidate);
      if (trial.loglik >= fit.terms.loglik - 1e-12 * std::abs(fit.terms.loglik)) {
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) throw NotConverged("probit Newton-Raphson: no ascent direction");

    const double moved = optim::inf_norm(candidate - fit.coef);
    fit.coef = candidate;
    fit.terms = trial;

    check_separation(fit);
    if (moved < 1e-14 * std::max(1.0, optim::inf_norm(fit.coef))) {
      // Step below floating-point resolution; accept the floor reached.
      fit.iterations = iter + 1;
      return fit;
    }
    if (iter + 1 == kProbitMaxIterations) {
      throw NotConverged("probit Newton-Raphson: iteration limit reached");
    }
  }
  return fit;
}

Vector perturbed_start(const Vector& init, const CugmmOptions& options, int start) {
  if (start == 0) return init;
  RngStream stream(options.seed, static_cast<std::uint64_t>(start));
  Vector x = init;
  for (Eigen::Index k = 0; k < x.size(); ++k) x(k) += options.restart_sd * stream.normal();
  return x;
}

}  // namespace

std::string to_string(Method method) {
  return method == Method::CUGMM ? "CUGMM" : "2SCML";
}

Vector FitResult::standard_errors() const {
  if (!vcov_available) return Vector::Constant(num_params(), kNaN);
  return vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

FitResult fit_cugmm(const MomentSystem& system, const Dataset& data, const ParamTheta& init,
                    const CugmmOptions& options) {
  if (!init.all_finite()) throw DomainError("fit_cugmm: initial parameter is not finite");
  if (init.kx() != data.kx() || init.kz() != data.kz()) {
    throw DomainError("fit_cugmm: initial parameter does not conform to the dataset");
  }
  const CuObjective objective(system, data);
  const Eigen::Index kx = data.kx();
  const Eigen::Index kz = data.kz();
  const Vector x0 = init.flat();

  // An irreparable weighting matrix at the seed is a hard error; elsewhere it
  // just rejects the trial point.
  (void)objective.weight(x0);

  const optim::ValueGradFn fg = [&objective](const Vector& x, Vector& g) {
    try {
      return objective.value_and_gradient(x, g);
    } catch (const NearSingular&) {
      g.setConstant(x.size(), kNaN);
      return kInf;
    }
  };
  const optim::ValueFn f = [&objective](const Vector& x) {
    try {
      return objective.value(x);
    } catch (const NearSingular&) {
      return kInf;
    }
  };

  optim::BfgsOptions bopts;
  bopts.max_iterations = options.max_iterations;
  bopts.gradient_tol = options.gradient_tol;
  bopts.relative_value_tol = options.relative_value_tol;
  optim::NelderMeadOptions nmopts;
  nmopts.max_evaluations = options.simplex_max_evaluations;

  std::ostringstream log;
  log << "bfgs(gtol=" << options.gradient_tol << ", ftol=" << options.relative_value_tol
      << ", maxit=" << options.max_iterations << "), restarts=" << options.restarts
      << " sd=" << options.restart_sd << " seed=" << options.seed
      << (options.simplex_fallback ? ", simplex fallback" : "") << '\n';

  optim::NewtonOptions newton;
  newton.gradient_tol = options.gradient_tol;

  // A stalled BFGS run gets a Newton polish; if that fails too, a simplex
  // pass followed by BFGS and another polish.
  const auto finish = [&](optim::OptimResult run, int& iterations) {
    if (run.converged || !std::isfinite(run.value)) return run;
    optim::OptimResult polished = optim::newton_polish(fg, run.x, newton);
    iterations += polished.iterations;
    if (polished.converged || polished.value < run.value) {
      polished.history.insert(polished.history.begin(), run.history.begin(), run.history.end());
      polished.status += " (newton polish)";
      run = std::move(polished);
    }
    return run;
  };

  const double seed_value = f(x0);
  bool have_best = false;
  optim::OptimResult best;
  int total_iterations = 0;
  for (int start = 0; start <= options.restarts; ++start) {
    optim::OptimResult run = optim::bfgs(fg, perturbed_start(x0, options, start), bopts);
    total_iterations += run.iterations;
    run = finish(std::move(run), total_iterations);
    if (!run.converged && options.simplex_fallback && std::isfinite(run.value)) {
      const optim::OptimResult simplex = optim::nelder_mead(f, run.x, nmopts);
      optim::OptimResult again = optim::bfgs(fg, simplex.x, bopts);
      total_iterations += again.iterations;
      again = finish(std::move(again), total_iterations);
      if (again.converged || again.value < run.value) {
        again.history.insert(again.history.begin(), run.history.begin(), run.history.end());
        again.status += " (after simplex)";
        run = std::move(again);
      }
    }
    log << "start " << start << ": J=" << run.value << " |grad|=" << optim::inf_norm(run.gradient)
        << " iters=" << run.iterations << " " << run.status << '\n';
    // Stationary points above the seed's objective (e.g. plateaus where the
    // probit index saturates) are not minimizers worth keeping.
    if (!run.converged || run.value > seed_value + 1e-8 * std::max(1.0, seed_value)) continue;
    if (!have_best || run.value < best.value) {
      best = std::move(run);
      have_best = true;
    }
  }
  if (!have_best) {
    throw NotConverged("fit_cugmm: no start met the gradient criterion below the seed objective\n" +
                       log.str());
  }

  FitResult out;
  out.method = Method::CUGMM;
  out.theta_hat = ParamTheta::from_flat(best.x, kx, kz);
  out.J_at_min = std::max(0.0, best.value);
  out.converged = true;
  out.iterations = total_iterations;
  out.gradient_norm = optim::inf_norm(best.gradient);
  out.objective_history = std::move(best.history);
  out.num_moments = system.H();
  out.n = data.n();
  out.optimizer_log = log.str();

  const Eigen::Index p = out.num_params();
  try {
    const MomentEval eval = objective.evaluate(out.theta_hat, out.theta_hat);
    const SpdFactor s_factor(eval.S);
    const Matrix info = symmetrize(eval.G.transpose() * s_factor.solve(eval.G));
    const SpdFactor info_factor(info);
    out.vcov = symmetrize(info_factor.inverse()) / static_cast<double>(data.n());
    out.vcov_available = out.vcov.allFinite();
    out.vcov_regularized = s_factor.regularized() || info_factor.regularized();
  } catch (const NearSingular&) {
    out.vcov = nan_matrix(p);
    out.vcov_available = false;
  }
  return out;
}

FitResult fit_2scml(const Dataset& data) {
  const Eigen::Index n = data.n();
  const Eigen::Index kx = data.kx();
  const Eigen::Index kz = data.kz();
  const auto nd = static_cast<double>(n);

  // Stage 1: OLS of y2 on W = (X, Z).
  Matrix W(n, kx + kz);
  W << data.X, data.Z;
  const Eigen::ColPivHouseholderQR<Matrix> qr(W);
  if (qr.rank() < W.cols()) throw NearSingular("fit_2scml: first-stage design is rank deficient");
  const Vector theta2 = qr.solve(data.y2);
  const Vector v = data.y2 - W * theta2;

  // Stage 2: probit of y1 on R = (v_hat, y2, X), matching (rho_tilde, alpha, beta).
  const Eigen::Index k1 = 2 + kx;
  Matrix R(n, k1);
  R.col(0) = v;
  R.col(1) = data.y2;
  R.rightCols(kx) = data.X;
  const Eigen::ColPivHouseholderQR<Matrix> qr2(R);
  if (qr2.rank() < k1) throw NearSingular("fit_2scml: second-stage design is rank deficient");
  const ProbitFit probit = probit_newton(data.y1, R);

  FitResult out;
  out.method = Method::TwoStepCML;
  Vector flat(k1 + kx + kz);
  flat << probit.coef, theta2;
  out.theta_hat = ParamTheta::from_flat(flat, kx, kz);
  out.J_at_min = 0.0;
  out.converged = true;
  out.iterations = probit.iterations;
  out.gradient_norm = optim::inf_norm(R.transpose() * probit.terms.h);
  out.objective_history = {-probit.terms.loglik};
  out.num_moments = flat.size();
  out.n = n;

  // Stacked just-identified moments m_i = [h_i R_i; W_i v_i]; flat order of
  // the stack coincides with ParamTheta's.
  const Eigen::Index p = flat.size();
  const double rho_tilde = probit.coef(0);
  const Vector& h = probit.terms.h;
  const Vector& dh = probit.terms.dh;

  Matrix A = Matrix::Zero(p, p);
  const Matrix dhR = R.array().colwise() * dh.array();
  A.topLeftCorner(k1, k1) = R.transpose() * dhR / nd;
  Matrix a12 = -rho_tilde * (dhR.transpose() * W);
  a12.row(0) -= (W.transpose() * h).transpose();
  A.topRightCorner(k1, kx + kz) = a12 / nd;
  A.bottomRightCorner(kx + kz, kx + kz) = -(W.transpose() * W) / nd;

  Matrix M(n, p);
  M.leftCols(k1) = R.array().colwise() * h.array();
  M.rightCols(kx + kz) = W.array().colwise() * v.array();
  const Matrix B = M.transpose() * M / nd;

  const Eigen::PartialPivLU<Matrix> lu(A);
  if (!std::isfinite(lu.determinant()) || std::abs(lu.determinant()) < 1e-300) {
    out.vcov = nan_matrix(p);
    out.vcov_available = false;
    return out;
  }
  const Matrix Ainv = lu.inverse();
  out.vcov = symmetrize(Ainv * B * Ainv.transpose()) / nd;
  out.vcov_available = out.vcov.allFinite();
  return out;
}

JTest j_statistic(const FitResult& fit) {
  const Eigen::Index p = fit.num_params();
  if (fit.num_moments <= p) {
    throw DomainError("j_statistic: overidentification test needs more moments than parameters");
  }
  JTest out;
  out.J = fit.J_at_min;
  out.df = static_cast<unsigned>(fit.num_moments - p);
  out.pvalue = out.J <= 0.0 ? 1.0 : chi2_sf(out.J, out.df);
  return out;
}

TestReport wald_test(const FitResult& fit, Eigen::Index coordinate, double null_value,
                     double level) {
  if (!fit.vcov_available) throw DomainError("wald_test: covariance not available");
  if (coordinate < 0 || coordinate >= fit.num_params()) {
    throw DomainError("wald_test: coordinate out of range");
  }
  if (!(level > 0.0 && level < 1.0)) throw DomainError("wald_test: level must lie in (0, 1)");
  const double var = fit.vcov(coordinate, coordinate);
  if (!(var > 0.0)) throw DomainError("wald_test: non-positive variance");

  const double estimate = fit.theta_hat.flat()(coordinate);
  TestReport out;
  out.test = "Wald";
  out.statistic = (estimate - null_value) * (estimate - null_value) / var;
  out.critical_value = chi2_quantile(1.0 - level, 1.0);
  out.reject = out.statistic > out.critical_value;
  const double half = normal_quantile(1.0 - level / 2.0) * std::sqrt(var);
  out.confidence_interval = std::make_pair(estimate - half, estimate + half);
  out.source = "chi-square quantile";
  return out;
}

namespace {

// Effects as a function of the flat parameter (in the fit's own units).
Vector effects_at(const Vector& flat, Eigen::Index kx, double y2_mean, const RowVector& x_mean,
                  const std::optional<ScaleInfo>& scaling) {
  const double alpha = flat(ParamTheta::kAlpha);
  const Vector beta = flat.segment(2, kx);
  const double index = alpha * y2_mean + x_mean.dot(beta);
  const double dens = normal_pdf(std::clamp(index, -kIndexClamp, kIndexClamp));
  Vector out(kx);
  out(0) = dens * alpha;
  out.tail(kx - 1) = dens * beta.tail(kx - 1);
  if (scaling) {
    out(0) /= scaling->y2_sd;
    for (Eigen::Index j = 1; j < kx; ++j) out(j) /= scaling->x_sd(j);
  }
  return out;
}

}  // namespace

Vector marginal_effects(const FitResult& fit, const Dataset& data) {
  return effects_at(fit.theta_hat.flat(), data.kx(), data.y2.mean(), data.X.colwise().mean(),
                    fit.scaling);
}

Vector marginal_effect_standard_errors(const FitResult& fit, const Dataset& data) {
  const Eigen::Index kx = data.kx();
  if (!fit.vcov_available) return Vector::Constant(kx, kNaN);
  const double y2_mean = data.y2.mean();
  const RowVector x_mean = data.X.colwise().mean();
  const Vector flat = fit.theta_hat.flat();
  Matrix jac(kx, flat.size());
  for (Eigen::Index k = 0; k < flat.size(); ++k) {
    const double step = 1e-6 * std::max(1.0, std::abs(flat(k)));
    Vector up = flat;
    Vector down = flat;
    up(k) += step;
    down(k) -= step;
    jac.col(k) = (effects_at(up, kx, y2_mean, x_mean, fit.scaling) -
                  effects_at(down, kx, y2_mean, x_mean, fit.scaling)) /
                 (2.0 * step);
  }
  return (jac * fit.vcov * jac.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();
}

FitResult to_original_units(const FitResult& fit) {
  if (!fit.scaling) return fit;
  FitResult out = fit;
  out.theta_hat = unstandardize(fit.theta_hat, *fit.scaling);
  const Matrix A = unstandardize_jacobian(*fit.scaling);
  out.vcov = fit.vcov_available ? Matrix(symmetrize(A * fit.vcov * A.transpose())) : fit.vcov;
  out.scaling.reset();
  return out;
}

double implied_correlation(const FitResult& fit, const Dataset& data) {
  const ParamTheta& t = fit.theta_hat;
  const Vector v = data.y2 - data.X * t.pi - data.Z * t.xi;
  const double sigma_v = std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
  return correlation_from_rho_tilde(t.rho_tilde, sigma_v);
}

}  // namespace weakid
