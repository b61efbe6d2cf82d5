#include <gtest/gtest.h>

#include "weakid/optimize.hpp"

using namespace weakid;
using namespace weakid::optim;

namespace {

double rosenbrock(const Vector& x, Vector& g) {
  const double a = 1.0 - x(0);
  const double b = x(1) - x(0) * x(0);
  g.resize(2);
  g(0) = -2.0 * a - 400.0 * x(0) * b;
  g(1) = 200.0 * b;
  return a * a + 100.0 * b * b;
}

// Badly scaled convex quadratic with minimum at (1, -2, 3).
double quadratic(const Vector& x, Vector& g) {
  Vector c(3);
  c << 1.0, -2.0, 3.0;
  Vector w(3);
  w << 1.0, 1e3, 1e-2;
  const Vector d = x - c;
  g = 2.0 * w.cwiseProduct(d);
  return d.dot(w.cwiseProduct(d));
}

}  // namespace

TEST(Bfgs, SolvesRosenbrock) {
  Vector x0(2);
  x0 << -1.2, 1.0;
  const OptimResult r = bfgs(rosenbrock, x0);
  ASSERT_TRUE(r.converged) << r.status;
  EXPECT_NEAR(r.x(0), 1.0, 1e-5);
  EXPECT_NEAR(r.x(1), 1.0, 1e-5);
  EXPECT_LT(inf_norm(r.gradient), 1e-6);
  for (std::size_t k = 1; k < r.history.size(); ++k) EXPECT_LE(r.history[k], r.history[k - 1]);
}

TEST(Bfgs, SolvesScaledQuadratic) {
  const OptimResult r = bfgs(quadratic, Vector::Zero(3));
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), 1.0, 1e-6);
  EXPECT_NEAR(r.x(1), -2.0, 1e-6);
  EXPECT_NEAR(r.x(2), 3.0, 1e-4);
}

TEST(Bfgs, ReportsNonFiniteStart) {
  const auto bad = [](const Vector&, Vector& g) {
    g = Vector::Zero(1);
    return std::nan("");
  };
  const OptimResult r = bfgs(bad, Vector::Zero(1));
  EXPECT_FALSE(r.converged);
}

TEST(NelderMead, SolvesRosenbrock) {
  Vector x0(2);
  x0 << -1.2, 1.0;
  Vector g;
  const OptimResult r = nelder_mead([&g](const Vector& x) { return rosenbrock(x, g); }, x0);
  EXPECT_NEAR(r.x(0), 1.0, 1e-4);
  EXPECT_NEAR(r.x(1), 1.0, 1e-4);
  EXPECT_LT(r.value, 1e-8);
}

TEST(NelderMead, TreatsNonFiniteAsInfinite) {
  // Undefined left of zero; minimum at 2.
  const auto f = [](const Vector& x) { return std::log(x(0)) * 0.0 + (x(0) - 2.0) * (x(0) - 2.0); };
  Vector x0(1);
  x0 << 0.1;
  const OptimResult r = nelder_mead(f, x0);
  EXPECT_NEAR(r.x(0), 2.0, 1e-4);
}

TEST(NewtonPolish, FinishesNearMinimum) {
  Vector x0(2);
  x0 << 0.9, 0.8;
  const OptimResult r = newton_polish(rosenbrock, x0);
  ASSERT_TRUE(r.converged) << r.status;
  EXPECT_NEAR(r.x(0), 1.0, 1e-6);
  EXPECT_NEAR(r.x(1), 1.0, 1e-6);
}

TEST(NewtonPolish, QuadraticInOneStep) {
  const OptimResult r = newton_polish(quadratic, Vector::Zero(3));
  ASSERT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 2);
  EXPECT_NEAR(r.x(2), 3.0, 1e-6);
}
