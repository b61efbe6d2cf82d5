#pragma once

#include <functional>
#include <string>
#include <vector>

#include "weakid/numerics/linalg.hpp"

namespace weakid::optim {

/// Objective returning f(x) and writing the gradient into the second argument.
using ValueGradFn = std::function<double(const Vector&, Vector&)>;
using ValueFn = std::function<double(const Vector&)>;

struct BfgsOptions {
  int max_iterations = 2000;
  double gradient_tol = 1e-6;       ///< on the infinity norm
  double relative_value_tol = 1e-10;
  double max_step_norm = 5.0;       ///< trust cap on a single line-search step
};

struct NelderMeadOptions {
  int max_evaluations = 20000;
  double initial_scale = 0.25;
  double value_tol = 1e-12;
  double simplex_tol = 1e-9;
};

struct OptimResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  int iterations = 0;
  bool converged = false;  ///< gradient criterion met
  std::string status;
  std::vector<double> history;  ///< objective value after each accepted step
};

/// Quasi-Newton minimization with an inverse-Hessian BFGS update and a
/// backtracking Armijo line search. Non-finite objective values count as
/// failed trial points.
OptimResult bfgs(const ValueGradFn& f, Vector x0, const BfgsOptions& options = {});

/// Derivative-free simplex search, used to escape stalled line searches.
OptimResult nelder_mead(const ValueFn& f, Vector x0, const NelderMeadOptions& options = {});

struct NewtonOptions {
  int max_iterations = 50;
  double gradient_tol = 1e-6;
};

/// Newton iterations with a Hessian built from central differences of the
/// analytic gradient (eigenvalues floored to keep it positive definite).
/// Used to finish BFGS runs that stall in flat, badly scaled valleys.
OptimResult newton_polish(const ValueGradFn& f, Vector x0, const NewtonOptions& options = {});

/// Infinity norm helper.
inline double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace weakid::optim
