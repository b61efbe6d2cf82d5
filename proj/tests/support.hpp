#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "weakid/model.hpp"
#include "weakid/montecarlo.hpp"
#include "weakid/numerics/rng.hpp"

namespace weakid::testing {

inline std::string data_path(const std::string& file) {
  return std::string(WEAKID_TEST_DATA_DIR) + "/" + file;
}

/// Simulated draw from the drifting design; lambda small means strong instruments.
inline Dataset simulate(Eigen::Index n, double lambda, std::uint64_t seed, double rho = 0.5,
                        std::size_t index = 0) {
  McDesign d;
  d.n = n;
  d.lambda = lambda;
  d.rho = rho;
  d.seed = seed;
  RngStream stream = replication_stream(d, index);
  return generate(d, stream);
}

inline ParamTheta truth(const McDesign& d) {
  ParamTheta t = ParamTheta::zeros(1, 1);
  t.rho_tilde = d.rho_tilde0();
  t.alpha = d.alpha0;
  t.beta(0) = d.beta0;
  t.pi(0) = d.pi0;
  t.xi(0) = implied_xi(d);
  return t;
}

/// Central-difference Jacobian of a vector function.
inline Matrix numeric_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                               double rel_step = 1e-6) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel_step * std::max(1.0, std::abs(x(k)));
    Vector up = x;
    Vector down = x;
    up(k) += h;
    down(k) -= h;
    jac.col(k) = (f(up) - f(down)) / (2.0 * h);
  }
  return jac;
}

}  // namespace weakid::testing
