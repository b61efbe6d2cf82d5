#include "weakid/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace weakid::optim {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-14;
constexpr int kMaxBacktracks = 60;
// Consecutive tiny-improvement iterations that count as a stall.
constexpr int kStallIterations = 5;

}  // namespace

OptimResult bfgs(const ValueGradFn& f, Vector x0, const BfgsOptions& options) {
  const Eigen::Index p = x0.size();
  OptimResult out;
  out.x = std::move(x0);
  out.gradient.resize(p);
  out.value = f(out.x, out.gradient);
  if (!std::isfinite(out.value) || !out.gradient.allFinite()) {
    out.status = "non-finite objective at start";
    return out;
  }
  out.history.push_back(out.value);

  Matrix hinv = Matrix::Identity(p, p);
  bool fresh_hessian = true;
  int stall = 0;
  Vector trial_grad(p);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    out.iterations = iter;
    if (inf_norm(out.gradient) < options.gradient_tol) {
      out.converged = true;
      out.status = "gradient tolerance met";
      return out;
    }

    Vector direction = -hinv * out.gradient;
    double slope = direction.dot(out.gradient);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      fresh_hessian = true;
      direction = -out.gradient;
      slope = -out.gradient.squaredNorm();
    }
    double step = 1.0;
    const double dnorm = direction.norm();
    if (dnorm * step > options.max_step_norm) step = options.max_step_norm / dnorm;

    bool accepted = false;
    Vector trial;
    double trial_value = 0.0;
    for (int bt = 0; bt < kMaxBacktracks && step > kMinStep; ++bt) {
      trial = out.x + step * direction;
      trial_value = f(trial, trial_grad);
      if (std::isfinite(trial_value) && trial_grad.allFinite() &&
          trial_value <= out.value + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }

    if (!accepted) {
      if (fresh_hessian) {
        out.status = "line search failed";
        return out;
      }
      hinv.setIdentity();
      fresh_hessian = true;
      continue;
    }

    const Vector s = trial - out.x;
    const Vector y = trial_grad - out.gradient;
    const double sy = s.dot(y);
    const double previous = out.value;
    out.x = trial;
    out.value = trial_value;
    out.gradient = trial_grad;
    out.history.push_back(out.value);

    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh_hessian) {
        hinv *= sy / y.squaredNorm();
        fresh_hessian = false;
      }
      const double rho = 1.0 / sy;
      const Vector hy = hinv * y;
      const double yhy = y.dot(hy);
      hinv += ((1.0 + rho * yhy) * rho) * (s * s.transpose()) -
              rho * (hy * s.transpose() + s * hy.transpose());
    }

    const double change = std::abs(previous - out.value) / std::max(1.0, std::abs(out.value));
    stall = change < options.relative_value_tol ? stall + 1 : 0;
    if (stall >= kStallIterations) {
      out.iterations = iter + 1;
      out.converged = inf_norm(out.gradient) < options.gradient_tol;
      out.status = out.converged ? "gradient tolerance met" : "objective stalled";
      return out;
    }
  }
  out.iterations = options.max_iterations;
  out.converged = inf_norm(out.gradient) < options.gradient_tol;
  out.status = out.converged ? "gradient tolerance met" : "iteration limit reached";
  return out;
}

OptimResult nelder_mead(const ValueFn& f, Vector x0, const NelderMeadOptions& options) {
  const Eigen::Index p = x0.size();
  const auto safe = [&f](const Vector& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Vector> simplex(p + 1, x0);
  std::vector<double> values(p + 1);
  values[0] = safe(x0);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double h = options.initial_scale * std::max(1.0, std::abs(x0(k)));
    simplex[k + 1](k) += h;
    values[k + 1] = safe(simplex[k + 1]);
  }
  int evaluations = static_cast<int>(p + 1);

  OptimResult out;
  std::vector<std::size_t> order(p + 1);
  while (evaluations < options.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    out.history.push_back(values[best]);

    double spread = 0.0;
    for (const Vector& v : simplex) spread = std::max(spread, inf_norm(v - simplex[best]));
    if (std::abs(values[worst] - values[best]) < options.value_tol && spread < options.simplex_tol) {
      out.status = "simplex converged";
      break;
    }

    Vector centroid = Vector::Zero(p);
    for (std::size_t k = 0; k < simplex.size(); ++k) {
      if (k != worst) centroid += simplex[k];
    }
    centroid /= static_cast<double>(p);

    const Vector reflected = centroid + (centroid - simplex[worst]);
    const double fr = safe(reflected);
    ++evaluations;
    if (fr < values[best]) {
      const Vector expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = safe(expanded);
      ++evaluations;
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
    } else if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
    } else {
      const bool outside = fr < values[worst];
      const Vector contracted = outside ? Vector(centroid + 0.5 * (reflected - centroid))
                                        : Vector(centroid + 0.5 * (simplex[worst] - centroid));
      const double fc = safe(contracted);
      ++evaluations;
      if (fc < std::min(fr, values[worst])) {
        simplex[worst] = contracted;
        values[worst] = fc;
      } else {
        for (std::size_t k = 0; k < simplex.size(); ++k) {
          if (k == best) continue;
          simplex[k] = simplex[best] + 0.5 * (simplex[k] - simplex[best]);
          values[k] = safe(simplex[k]);
          ++evaluations;
        }
      }
    }
  }
  if (out.status.empty()) out.status = "evaluation limit reached";

  const auto best_it = std::min_element(values.begin(), values.end());
  out.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  out.value = *best_it;
  out.iterations = evaluations;
  return out;
}

OptimResult newton_polish(const ValueGradFn& f, Vector x0, const NewtonOptions& options) {
  const Eigen::Index p = x0.size();
  OptimResult out;
  out.x = std::move(x0);
  out.gradient.resize(p);
  out.value = f(out.x, out.gradient);
  if (!std::isfinite(out.value) || !out.gradient.allFinite()) {
    out.status = "non-finite objective at start";
    return out;
  }
  out.history.push_back(out.value);

  Vector gp(p), gm(p), trial_grad(p);
  Matrix hess(p, p);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    out.iterations = iter;
    const double gnorm = inf_norm(out.gradient);
    if (gnorm < options.gradient_tol) {
      out.converged = true;
      out.status = "gradient tolerance met";
      return out;
    }
    for (Eigen::Index k = 0; k < p; ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(out.x(k)));
      Vector xp = out.x;
      Vector xm = out.x;
      xp(k) += h;
      xm(k) -= h;
      const double fp = f(xp, gp);
      const double fm = f(xm, gm);
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        out.status = "non-finite objective while differencing";
        return out;
      }
      hess.col(k) = (gp - gm) / (2.0 * h);
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (hess + hess.transpose()));
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    const Vector lambda = eig.eigenvalues().cwiseAbs().cwiseMax(std::max(1e-10 * top, 1e-300));
    const Vector direction =
        -eig.eigenvectors() * (eig.eigenvectors().transpose() * out.gradient).cwiseQuotient(lambda);

    // Near the minimum the objective is flat to rounding, so a step that
    // keeps the value within noise and shrinks the gradient is also accepted.
    const double noise = 1e-10 * std::max(1.0, std::abs(out.value));
    double step = 1.0;
    bool accepted = false;
    Vector trial;
    double trial_value = 0.0;
    for (int bt = 0; bt < 40; ++bt) {
      trial = out.x + step * direction;
      trial_value = f(trial, trial_grad);
      if (std::isfinite(trial_value) && trial_grad.allFinite() &&
          (trial_value < out.value ||
           (trial_value <= out.value + noise && inf_norm(trial_grad) < gnorm))) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      out.status = "newton step rejected";
      return out;
    }
    out.x = trial;
    out.value = trial_value;
    out.gradient = trial_grad;
    out.history.push_back(out.value);
  }
  out.iterations = options.max_iterations;
  out.converged = inf_norm(out.gradient) < options.gradient_tol;
  out.status = out.converged ? "gradient tolerance met" : "iteration limit reached";
  return out;
}

}  // namespace weakid::optim
