#pragma once

#include <cstddef>
#include <vector>

#include "weakid/errors.hpp"

namespace weakid {

/// Gauss-Hermite rule for the standard normal weight: sum_k w_k f(x_k) ~ E[f(X)],
/// X ~ N(0, 1). Weights sum to one.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Rule with `n` nodes (Golub-Welsch on the probabilists' Hermite recurrence).
/// Rules are cached; the returned reference stays valid for the program's lifetime.
const GaussHermiteRule& gauss_hermite_rule(std::size_t n);

/// E[f(Z)] for Z ~ N(0, sigma^2) using an `nodes`-point Gauss-Hermite rule.
/// Exact for polynomials of degree up to 2 * nodes - 1.
template <class F>
double gh_expectation(F&& f, double sigma, std::size_t nodes) {
  if (!(sigma > 0.0)) throw DomainError("gh_expectation: sigma must be positive");
  if (nodes < 16) throw DomainError("gh_expectation: at least 16 nodes required");
  const GaussHermiteRule& rule = gauss_hermite_rule(nodes);
  double sum = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    sum += rule.weights[k] * f(sigma * rule.nodes[k]);
  }
  return sum;
}

}  // namespace weakid
