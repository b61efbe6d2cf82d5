#include <gtest/gtest.h>

#include <algorithm>

#include <Eigen/Eigenvalues>

#include "support.hpp"
#include "weakid/errors.hpp"
#include "weakid/estimators.hpp"
#include "weakid/numerics/distributions.hpp"

using namespace weakid;

namespace {

McDesign strong_design(Eigen::Index n) {
  McDesign d;
  d.n = n;
  d.lambda = 0.1;
  d.rho = 0.5;
  return d;
}

// Probit log likelihood of y1 on (v(theta2), y2, X), written out directly.
double probit_loglik(const Dataset& data, const Vector& coef, const Vector& theta2) {
  const Eigen::Index kx = data.kx();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double v = data.y2(i) - data.X.row(i).dot(theta2.head(kx)) -
                     data.Z.row(i).dot(theta2.tail(data.kz()));
    const double idx = coef(0) * v + coef(1) * data.y2(i) + data.X.row(i).dot(coef.tail(kx));
    ll += data.y1(i) > 0.5 ? std::log(normal_cdf(idx)) : std::log(normal_cdf(-idx));
  }
  return ll;
}

// Stacked just-identified moments of the two-step estimator as a function of
// the full flat parameter.
Vector stacked_mean(const Dataset& data, const Vector& flat) {
  const Eigen::Index kx = data.kx();
  const Eigen::Index kz = data.kz();
  const Eigen::Index k1 = 2 + kx;
  Vector out = Vector::Zero(flat.size());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    RowVector w(kx + kz);
    w << data.X.row(i), data.Z.row(i);
    const double v = data.y2(i) - w.dot(flat.tail(kx + kz));
    RowVector r(k1);
    r << v, data.y2(i), data.X.row(i);
    const double idx = r.dot(flat.head(k1));
    const double cdf = normal_cdf(idx);
    const double h = normal_pdf(idx) * (data.y1(i) - cdf) / (cdf * normal_cdf(-idx));
    out.head(k1) += h * r.transpose();
    out.tail(kx + kz) += v * w.transpose();
  }
  return out / static_cast<double>(data.n());
}

Matrix stacked_outer(const Dataset& data, const Vector& flat) {
  const Eigen::Index kx = data.kx();
  const Eigen::Index kz = data.kz();
  const Eigen::Index k1 = 2 + kx;
  Matrix B = Matrix::Zero(flat.size(), flat.size());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    RowVector w(kx + kz);
    w << data.X.row(i), data.Z.row(i);
    const double v = data.y2(i) - w.dot(flat.tail(kx + kz));
    RowVector r(k1);
    r << v, data.y2(i), data.X.row(i);
    const double idx = r.dot(flat.head(k1));
    const double cdf = normal_cdf(idx);
    const double h = normal_pdf(idx) * (data.y1(i) - cdf) / (cdf * normal_cdf(-idx));
    Vector m(flat.size());
    m << h * r.transpose(), v * w.transpose();
    B += m * m.transpose();
  }
  return B / static_cast<double>(data.n());
}

CugmmOptions quick_options() {
  CugmmOptions o;
  o.restarts = 2;
  return o;
}

}  // namespace

TEST(TwoStep, FirstStageIsOls) {
  const Dataset data = weakid::testing::simulate(800, 0.1, 11);
  const FitResult fit = fit_2scml(data);
  Matrix W(data.n(), 2);
  W << data.X, data.Z;
  const Vector ols = (W.transpose() * W).ldlt().solve(W.transpose() * data.y2);
  EXPECT_NEAR(fit.theta_hat.pi(0), ols(0), 1e-10);
  EXPECT_NEAR(fit.theta_hat.xi(0), ols(1), 1e-10);
  EXPECT_EQ(fit.method, Method::TwoStepCML);
  EXPECT_TRUE(fit.converged);
}

TEST(TwoStep, ProbitStageMaximizesLikelihood) {
  const Dataset data = weakid::testing::simulate(800, 0.1, 12);
  const FitResult fit = fit_2scml(data);
  const Vector flat = fit.theta_hat.flat();
  const Vector coef = flat.head(3);
  const Vector theta2 = flat.tail(2);
  const auto ll = [&](const Vector& c) { return Vector::Constant(1, probit_loglik(data, c, theta2)); };
  const Matrix score = weakid::testing::numeric_jacobian(ll, coef);
  EXPECT_LT(score.cwiseAbs().maxCoeff() / data.n(), 1e-7);
  // Concave at the optimum, and no nearby point does better.
  const Matrix hess = weakid::testing::numeric_jacobian(
      [&](const Vector& c) { return Vector(weakid::testing::numeric_jacobian(ll, c, 1e-5).transpose()); },
      coef, 1e-4);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (hess + hess.transpose()));
  EXPECT_LT(eig.eigenvalues().maxCoeff(), 0.0);
  const double best = probit_loglik(data, coef, theta2);
  RngStream s(3, 0);
  for (int k = 0; k < 50; ++k) {
    Vector c = coef;
    for (Eigen::Index j = 0; j < 3; ++j) c(j) += 0.05 * s.normal();
    EXPECT_LE(probit_loglik(data, c, theta2), best + 1e-9);
  }
}

TEST(TwoStep, SandwichMatchesNumericOracle) {
  const Dataset data = weakid::testing::simulate(600, 0.1, 13);
  const FitResult fit = fit_2scml(data);
  ASSERT_TRUE(fit.vcov_available);
  const Vector flat = fit.theta_hat.flat();
  EXPECT_LT(stacked_mean(data, flat).cwiseAbs().maxCoeff(), 1e-8);
  const Matrix A = weakid::testing::numeric_jacobian([&](const Vector& x) { return stacked_mean(data, x); },
                                             flat, 1e-5);
  const Matrix Ainv = A.inverse();
  const Matrix V = Ainv * stacked_outer(data, flat) * Ainv.transpose() / data.n();
  const Vector se_oracle = V.diagonal().cwiseSqrt();
  const Vector se = fit.standard_errors();
  for (Eigen::Index k = 0; k < flat.size(); ++k) EXPECT_NEAR(se(k) / se_oracle(k), 1.0, 1e-4) << k;
  EXPECT_LT((fit.vcov - fit.vcov.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TwoStep, CovarianceScalesWithSampleSize) {
  const Vector small = fit_2scml(weakid::testing::simulate(2000, 0.1, 14)).standard_errors();
  const Vector large = fit_2scml(weakid::testing::simulate(8000, 0.1, 14)).standard_errors();
  // se ~ 1/sqrt(n); the drifting first stage moves this a little.
  for (Eigen::Index k = 0; k < small.size(); ++k) EXPECT_NEAR(small(k) / large(k), 2.0, 0.5) << k;
}

TEST(TwoStep, DetectsSeparation) {
  Dataset data = weakid::testing::simulate(300, 0.1, 15);
  for (Eigen::Index i = 0; i < data.n(); ++i) data.y1(i) = data.y2(i) > 0.3 ? 1.0 : 0.0;
  EXPECT_THROW(fit_2scml(data), SeparationDetected);
}

TEST(TwoStep, RankDeficientDesign) {
  Dataset data = weakid::testing::simulate(300, 0.1, 16);
  data.Z.col(0).setConstant(2.0);
  EXPECT_THROW(fit_2scml(data), NearSingular);
}

TEST(Cugmm, IsGlobalMinimumAgainstRandomPoints) {
  const McDesign d = strong_design(400);
  const Dataset data = weakid::testing::simulate(d.n, d.lambda, 17);
  const MomentSystem sys = default_instruments(data, InstrumentSpec::MonteCarlo);
  const FitResult fit = fit_cugmm(sys, data, fit_2scml(data).theta_hat, quick_options());
  ASSERT_TRUE(fit.converged);
  EXPECT_LT(fit.gradient_norm, 1e-6);
  EXPECT_GE(fit.J_at_min, 0.0);
  CuObjective obj(sys, data);
  EXPECT_NEAR(obj.value(fit.theta_hat.flat()), fit.J_at_min, 1e-9);
  RngStream s(17, 5);
  for (int k = 0; k < 100; ++k) {
    Vector x = fit.theta_hat.flat();
    const double scale = k % 2 == 0 ? 0.05 : 1.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) += scale * s.normal();
    EXPECT_GE(obj.value(x), fit.J_at_min - 1e-6);
  }
}

TEST(Cugmm, CovarianceIsInverseInformation) {
  const McDesign d = strong_design(1000);
  const Dataset data = weakid::testing::simulate(d.n, d.lambda, 18);
  const MomentSystem sys = default_instruments(data, InstrumentSpec::MonteCarlo);
  const FitResult fit = fit_cugmm(sys, data, fit_2scml(data).theta_hat, quick_options());
  ASSERT_TRUE(fit.vcov_available);
  const MomentEval ev = evaluate(sys, data, fit.theta_hat, fit.theta_hat);
  const Matrix info = ev.G.transpose() * ev.S.inverse() * ev.G;
  EXPECT_LT((fit.vcov * info * d.n - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-6);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(fit.vcov);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(Cugmm, AgreesWithTwoStepUnderStrongInstruments) {
  const McDesign d = strong_design(4000);
  const Dataset data = weakid::testing::simulate(d.n, d.lambda, 19);
  const FitResult two = fit_2scml(data);
  const FitResult cu =
      fit_cugmm(default_instruments(data, InstrumentSpec::MonteCarlo), data, two.theta_hat, quick_options());
  const Vector diff = cu.theta_hat.flat() - two.theta_hat.flat();
  const Vector se = two.standard_errors();
  for (Eigen::Index k = 0; k < diff.size(); ++k) EXPECT_LT(std::abs(diff(k)), se(k)) << k;
}

TEST(Cugmm, JustIdentifiedReproducesTwoStep) {
  const Dataset data = weakid::testing::simulate(700, 0.1, 20);
  const FitResult two = fit_2scml(data);
  const ParamTheta t = two.theta_hat;
  // Probit score weights frozen at the two-step estimate make the moment
  // system exactly the two-step first-order conditions.
  const auto a = [t](double y2, const RowVector& x, const RowVector& z) {
    const double v = y2 - x.dot(t.pi) - z.dot(t.xi);
    const double idx = t.alpha * y2 + x.dot(t.beta) + t.rho_tilde * v;
    const double cdf = normal_cdf(idx);
    Vector out(3);
    out << v, y2, x(0);
    return Vector(out * (normal_pdf(idx) / (cdf * normal_cdf(-idx))));
  };
  const auto b = [](const RowVector& x, const RowVector& z) {
    Vector out(2);
    out << x(0), z(0);
    return out;
  };
  const MomentSystem sys = custom_instruments("score", 3, a, 2, b);
  ParamTheta init = t;
  init.alpha += 0.05;
  init.rho_tilde -= 0.05;
  const FitResult cu = fit_cugmm(sys, data, init, quick_options());
  EXPECT_LT(cu.J_at_min, 1e-8);
  EXPECT_LT((cu.theta_hat.flat() - t.flat()).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_THROW(j_statistic(cu), DomainError);
}

TEST(Cugmm, RejectsNonFiniteStart) {
  const Dataset data = weakid::testing::simulate(200, 0.1, 21);
  ParamTheta init = ParamTheta::zeros(1, 1);
  init.alpha = std::nan("");
  EXPECT_THROW(fit_cugmm(default_instruments(data, InstrumentSpec::MonteCarlo), data, init),
               DomainError);
}

TEST(Cugmm, DeterministicGivenSeed) {
  const Dataset data = weakid::testing::simulate(300, 0.4, 22);
  const MomentSystem sys = default_instruments(data, InstrumentSpec::MonteCarlo);
  const ParamTheta init = fit_2scml(data).theta_hat;
  const FitResult a = fit_cugmm(sys, data, init, quick_options());
  const FitResult b = fit_cugmm(sys, data, init, quick_options());
  EXPECT_EQ(a.theta_hat.flat(), b.theta_hat.flat());
  EXPECT_EQ(a.J_at_min, b.J_at_min);
}

TEST(Inference, JStatistic) {
  const Dataset data = weakid::testing::simulate(600, 0.1, 23);
  const FitResult fit = fit_cugmm(default_instruments(data, InstrumentSpec::MonteCarlo), data,
                                  fit_2scml(data).theta_hat, quick_options());
  const JTest j = j_statistic(fit);
  EXPECT_EQ(j.df, 1u);
  EXPECT_DOUBLE_EQ(j.J, fit.J_at_min);
  EXPECT_NEAR(j.pvalue, chi2_sf(j.J, 1), 1e-15);
}

TEST(Inference, WaldTest) {
  const Dataset data = weakid::testing::simulate(600, 0.1, 24);
  const FitResult fit = fit_2scml(data);
  const double est = fit.theta_hat.alpha;
  const double se = fit.standard_errors()(ParamTheta::kAlpha);
  const TestReport w = wald_test(fit, ParamTheta::kAlpha, est - 2.5 * se);
  EXPECT_NEAR(w.statistic, 6.25, 1e-10);
  EXPECT_NEAR(w.critical_value, 3.841459, 1e-5);
  EXPECT_TRUE(w.reject);
  EXPECT_EQ(w.decision(), "Reject");
  ASSERT_TRUE(w.confidence_interval);
  EXPECT_NEAR(w.confidence_interval->first, est - 1.959964 * se, 1e-6 * se);
  EXPECT_FALSE(wald_test(fit, ParamTheta::kAlpha, est + se).reject);
  EXPECT_THROW(wald_test(fit, 9, 0.0), DomainError);
  EXPECT_THROW(wald_test(fit, 1, 0.0, 1.5), DomainError);
  FitResult broken = fit;
  broken.vcov_available = false;
  EXPECT_THROW(wald_test(broken, 1, 0.0), DomainError);
}

TEST(Inference, WaldSizeUnderStrongInstruments) {
  McDesign d = strong_design(10000);
  int rejections = 0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    RngStream s = replication_stream(d, static_cast<std::size_t>(r));
    const FitResult fit = fit_2scml(generate(d, s));
    rejections += wald_test(fit, ParamTheta::kAlpha, d.alpha0).reject ? 1 : 0;
  }
  const double rate = static_cast<double>(rejections) / reps;
  // 0.05 +/- 3 binomial standard errors.
  EXPECT_NEAR(rate, 0.05, 3.0 * std::sqrt(0.05 * 0.95 / reps));
}

TEST(Inference, MarginalEffectsAreIndexDerivatives) {
  const Dataset data = weakid::testing::simulate(600, 0.1, 25);
  const FitResult fit = fit_2scml(data);
  const ParamTheta& t = fit.theta_hat;
  const double ybar = data.y2.mean();
  const double xbar = data.X.col(0).mean();
  const double h = 1e-6;
  const auto prob = [&](double y2) { return normal_cdf(t.alpha * y2 + xbar * t.beta(0)); };
  const Vector me = marginal_effects(fit, data);
  ASSERT_EQ(me.size(), 1);
  EXPECT_NEAR(me(0), (prob(ybar + h) - prob(ybar - h)) / (2 * h), 1e-8);
  const Vector se = marginal_effect_standard_errors(fit, data);
  EXPECT_GT(se(0), 0.0);
}

TEST(Inference, StandardizedFitMapsBackToOriginalUnits) {
  Dataset data = weakid::testing::simulate(900, 0.1, 26);
  data.X.conservativeResize(Eigen::NoChange, 2);
  RngStream s(26, 3);
  for (Eigen::Index i = 0; i < data.n(); ++i) data.X(i, 1) = 3.0 + 2.0 * s.normal();
  const FitResult raw = fit_2scml(data);
  const Standardized st = standardize(data);
  FitResult scaled = fit_2scml(st.data);
  scaled.scaling = st.scale;
  const FitResult back = to_original_units(scaled);
  EXPECT_LT((back.theta_hat.flat() - raw.theta_hat.flat()).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LT((back.vcov - raw.vcov).cwiseAbs().maxCoeff(), 1e-7 * raw.vcov.cwiseAbs().maxCoeff());
  EXPECT_LT((marginal_effects(scaled, st.data) - marginal_effects(raw, data)).cwiseAbs().maxCoeff(),
            1e-8);
  EXPECT_NEAR(implied_correlation(scaled, st.data), implied_correlation(raw, data), 1e-8);
}
