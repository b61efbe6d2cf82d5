#pragma once

#include <Eigen/Dense>

namespace weakid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// If the first attempt fails, or the smallest pivot is below 1e-12 times the
/// largest, a ridge of 1e-10 * trace(A) / dim is added to the diagonal once and
/// the factorization is retried. A second failure throws NearSingular. Whether
/// the ridge was needed is reported through `regularized()`.
class SpdFactor {
 public:
  explicit SpdFactor(const Matrix& a);

  Matrix solve(const Matrix& b) const { return llt_.solve(b); }
  Vector solve(const Vector& b) const { return llt_.solve(b); }

  /// Inverse of the factored matrix; only for small matrices reported to users.
  Matrix inverse() const;

  /// b' A^{-1} b without forming the inverse.
  double quad_form(const Vector& b) const;

  bool regularized() const { return regularized_; }
  Eigen::Index dim() const { return dim_; }

 private:
  Eigen::LLT<Matrix> llt_;
  Eigen::Index dim_ = 0;
  bool regularized_ = false;
};

/// Solves A X = B for symmetric positive definite A, using SpdFactor's policy.
Matrix solve_spd(const Matrix& a, const Matrix& b);

/// Relative asymmetry max|A - A'| / max(1, max|A|).
double asymmetry(const Matrix& a);

}  // namespace weakid
