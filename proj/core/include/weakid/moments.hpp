#pragma once

#include <functional>
#include <optional>
#include <string>

#include "weakid/model.hpp"
#include "weakid/numerics/linalg.hpp"

namespace weakid {

/// The probit index is clamped to this magnitude before Phi/phi are applied.
inline constexpr double kIndexClamp = 37.0;

/// One row of a Dataset.
struct Observation {
  double y1 = 0.0;
  double y2 = 0.0;
  RowVector x;
  RowVector z;
};

Observation observation(const Dataset& data, Eigen::Index i);

/// v(theta2) = y2 - x'pi - z'xi.
double residual_reduced(const ParamTheta& theta, const Observation& obs);

/// y1 - Phi(alpha*y2 + x'beta + rho_tilde * v(theta2)).
double residual_structural(const ParamTheta& theta, const Observation& obs);

/// Instrument functions of the stacked moment g_i = a_i r1_i + b_i r2_i.
///
/// a_i = [a_tilde(y2, x, z); 0] and b_i = [0; b_tilde(x, z)], so the two
/// supports are disjoint by construction: rows [0, h1) belong to the
/// structural block and rows [h1, h1 + h2) to the reduced form.
struct MomentSystem {
  using StructuralBuilder =
      std::function<Vector(double y2, const RowVector& x, const RowVector& z)>;
  using ReducedBuilder = std::function<Vector(const RowVector& x, const RowVector& z)>;

  std::string name;
  Eigen::Index h1 = 0;
  Eigen::Index h2 = 0;
  StructuralBuilder a_builder;
  ReducedBuilder b_builder;

  Eigen::Index H() const { return h1 + h2; }

  /// Full-length a_i and b_i for one observation (zero padded).
  Vector a(const Observation& obs) const;
  Vector b(const Observation& obs) const;
};

enum class InstrumentSpec {
  /// a = (1, y2, z, z^2, 0, 0), b = (0, 0, 0, 0, 1, z); needs kx = kz = 1.
  MonteCarlo,
  /// a = (1, y2, x without intercept, z, 0...), b = (0..., 1, x without intercept, z).
  Empirical,
};

/// Builds the default instrument functions. Throws ConfigError when the
/// specification is incompatible with the dataset dimensions or H < p.
MomentSystem default_instruments(const Dataset& data, InstrumentSpec spec);

/// User-supplied instrument functions; `h1`/`h2` are the block lengths.
MomentSystem custom_instruments(std::string name, Eigen::Index h1,
                                MomentSystem::StructuralBuilder a_builder, Eigen::Index h2,
                                MomentSystem::ReducedBuilder b_builder);

/// Sample moment quantities at a parameter.
struct MomentEval {
  Vector gbar;  ///< (1/n) sum g_i(theta)
  Matrix S;     ///< block-diagonal centered covariance at theta_for_weight
  Matrix G;     ///< analytic Jacobian d gbar / d theta'
};

/// Weighting matrix S_n(theta) held as per-block Cholesky factors.
struct WeightFactor {
  SpdFactor structural;
  SpdFactor reduced;
  bool regularized() const { return structural.regularized() || reduced.regularized(); }
};

/// Continuously-updated GMM objective J_n(theta, theta_w) = n gbar(theta)' S_n(theta_w)^{-1} gbar(theta)
/// for one (system, dataset) pair. Instrument matrices are materialized once.
class CuObjective {
 public:
  CuObjective(const MomentSystem& system, const Dataset& data);

  Eigen::Index num_moments() const { return system_.H(); }
  Eigen::Index num_params() const { return 2 + 2 * data_->kx() + data_->kz(); }
  Eigen::Index n() const { return data_->n(); }
  const Dataset& data() const { return *data_; }
  const MomentSystem& system() const { return system_; }
  const Matrix& a_tilde() const { return a_tilde_; }
  const Matrix& b_tilde() const { return b_tilde_; }

  /// Per-observation moment matrix (n x H).
  Matrix moments(const Vector& theta) const;

  /// gbar, S (at theta_for_weight) and the analytic Jacobian at theta.
  MomentEval evaluate(const ParamTheta& theta, const ParamTheta& theta_for_weight) const;

  /// Factorized S_n(theta). Throws NearSingular if either block is irreparable.
  WeightFactor weight(const Vector& theta) const;

  /// J_n(theta, theta) (continuously updated).
  double value(const Vector& theta) const;

  /// J_n(theta, theta) and its gradient, including the derivative of S_n(theta).
  double value_and_gradient(const Vector& theta, Vector& gradient) const;

  /// J_n(theta, theta_w) with the weighting matrix pinned at theta_w.
  double pinned_value(const Vector& theta, const WeightFactor& weight) const;

 private:
  struct Pointwise {
    Vector v;      // reduced-form residual
    Vector r1;     // structural residual
    Vector dens;   // phi(clamped index)
  };
  Pointwise pointwise(const Vector& theta) const;
  void block_means(const Pointwise& pw, Vector& g1, Vector& g2) const;
  WeightFactor weight_from(const Pointwise& pw) const;

  MomentSystem system_;
  const Dataset* data_;
  Matrix a_tilde_;
  Matrix b_tilde_;
  Matrix xz_;  // [X, Z]
};

/// Convenience wrapper around CuObjective::evaluate.
MomentEval evaluate(const MomentSystem& system, const Dataset& data, const ParamTheta& theta,
                    const ParamTheta& theta_for_weight);

}  // namespace weakid
