#include "weakid/numerics/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "weakid/errors.hpp"

namespace weakid {

namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kPivotRatio = 1e-12;
constexpr double kRidgeScale = 1e-10;

bool well_conditioned(const Eigen::LLT<Matrix>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const Vector pivots = llt.matrixLLT().diagonal().array().square();
  if (!pivots.allFinite()) return false;
  return pivots.minCoeff() >= kPivotRatio * pivots.maxCoeff();
}

}  // namespace

double asymmetry(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

SpdFactor::SpdFactor(const Matrix& a) : dim_(a.rows()) {
  if (a.rows() != a.cols()) throw DomainError("SpdFactor: matrix must be square");
  if (dim_ == 0) throw DomainError("SpdFactor: empty matrix");
  if (!a.allFinite()) throw NearSingular("SpdFactor: non-finite entries");
  if (asymmetry(a) > kSymmetryTol) throw DomainError("SpdFactor: matrix is not symmetric");

  llt_.compute(a);
  if (well_conditioned(llt_)) return;

  const double trace = a.trace();
  if (!(trace > 0.0)) throw NearSingular("SpdFactor: non-positive trace");
  Matrix ridged = a;
  ridged.diagonal().array() += kRidgeScale * trace / static_cast<double>(dim_);
  llt_.compute(ridged);
  regularized_ = true;
  if (!well_conditioned(llt_)) {
    throw NearSingular("SpdFactor: matrix remains near-singular after ridge regularization");
  }
}

Matrix SpdFactor::inverse() const { return llt_.solve(Matrix::Identity(dim_, dim_)); }

double SpdFactor::quad_form(const Vector& b) const {
  const Vector half = llt_.matrixL().solve(b);
  return half.squaredNorm();
}

Matrix solve_spd(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DomainError("solve_spd: dimension mismatch");
  return SpdFactor(a).solve(b);
}

}  // namespace weakid
