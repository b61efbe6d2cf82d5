#include "weakid/moments.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "weakid/errors.hpp"
#include "weakid/numerics/distributions.hpp"

namespace weakid {

namespace {

double clamp_index(double index) { return std::clamp(index, -kIndexClamp, kIndexClamp); }

Matrix centered_covariance(const Matrix& g) {
  const Matrix centered = g.rowwise() - g.colwise().mean();
  return (centered.transpose() * centered) / static_cast<double>(g.rows());
}

}  // namespace

Observation observation(const Dataset& data, Eigen::Index i) {
  return Observation{data.y1(i), data.y2(i), data.X.row(i), data.Z.row(i)};
}

double residual_reduced(const ParamTheta& theta, const Observation& obs) {
  return obs.y2 - obs.x.dot(theta.pi) - obs.z.dot(theta.xi);
}

double residual_structural(const ParamTheta& theta, const Observation& obs) {
  const double v = residual_reduced(theta, obs);
  const double index = theta.alpha * obs.y2 + obs.x.dot(theta.beta) + theta.rho_tilde * v;
  return obs.y1 - normal_cdf(clamp_index(index));
}

Vector MomentSystem::a(const Observation& obs) const {
  Vector full = Vector::Zero(H());
  full.head(h1) = a_builder(obs.y2, obs.x, obs.z);
  return full;
}

Vector MomentSystem::b(const Observation& obs) const {
  Vector full = Vector::Zero(H());
  full.tail(h2) = b_builder(obs.x, obs.z);
  return full;
}

MomentSystem default_instruments(const Dataset& data, InstrumentSpec spec) {
  const Eigen::Index kx = data.kx();
  const Eigen::Index kz = data.kz();
  const Eigen::Index p = 2 + 2 * kx + kz;
  MomentSystem system;

  switch (spec) {
    case InstrumentSpec::MonteCarlo:
      if (kx != 1 || kz != 1) {
        throw ConfigError("Monte Carlo instruments require an intercept-only X and one instrument");
      }
      system.name = "mc";
      system.h1 = 4;
      system.h2 = 2;
      system.a_builder = [](double y2, const RowVector&, const RowVector& z) {
        Vector a(4);
        a << 1.0, y2, z(0), z(0) * z(0);
        return a;
      };
      system.b_builder = [](const RowVector&, const RowVector& z) {
        Vector b(2);
        b << 1.0, z(0);
        return b;
      };
      break;

    case InstrumentSpec::Empirical:
      system.name = "empirical";
      system.h1 = 1 + kx + kz;
      system.h2 = kx + kz;
      system.a_builder = [kx, kz](double y2, const RowVector& x, const RowVector& z) {
        Vector a(1 + kx + kz);
        a(0) = 1.0;
        a(1) = y2;
        a.segment(2, kx - 1) = x.tail(kx - 1).transpose();
        a.tail(kz) = z.transpose();
        return a;
      };
      system.b_builder = [kx, kz](const RowVector& x, const RowVector& z) {
        Vector b(kx + kz);
        b(0) = 1.0;
        b.segment(1, kx - 1) = x.tail(kx - 1).transpose();
        b.tail(kz) = z.transpose();
        return b;
      };
      break;
  }

  if (system.H() < p) {
    throw ConfigError("instrument specification yields fewer moments than parameters");
  }
  return system;
}

MomentSystem custom_instruments(std::string name, Eigen::Index h1,
                                MomentSystem::StructuralBuilder a_builder, Eigen::Index h2,
                                MomentSystem::ReducedBuilder b_builder) {
  if (h1 < 1 || h2 < 1) throw ConfigError("custom_instruments: both blocks must be non-empty");
  return MomentSystem{std::move(name), h1, h2, std::move(a_builder), std::move(b_builder)};
}

CuObjective::CuObjective(const MomentSystem& system, const Dataset& data)
    : system_(system), data_(&data) {
  const Eigen::Index n = data.n();
  if (system_.H() < num_params()) {
    throw ConfigError("CuObjective: fewer moments than parameters");
  }
  a_tilde_.resize(n, system_.h1);
  b_tilde_.resize(n, system_.h2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Observation obs = observation(data, i);
    const Vector a = system_.a_builder(obs.y2, obs.x, obs.z);
    const Vector b = system_.b_builder(obs.x, obs.z);
    if (a.size() != system_.h1 || b.size() != system_.h2) {
      throw ConfigError("instrument builder returned a vector of the wrong length");
    }
    a_tilde_.row(i) = a.transpose();
    b_tilde_.row(i) = b.transpose();
  }
  xz_.resize(n, data.kx() + data.kz());
  xz_ << data.X, data.Z;
}

CuObjective::Pointwise CuObjective::pointwise(const Vector& theta) const {
  const Dataset& d = *data_;
  const Eigen::Index kx = d.kx();
  const Eigen::Index kz = d.kz();
  const double rho_tilde = theta(ParamTheta::kRhoTilde);
  const double alpha = theta(ParamTheta::kAlpha);

  Pointwise pw;
  pw.v = d.y2 - xz_ * theta.segment(2 + kx, kx + kz);
  const Vector index = alpha * d.y2 + d.X * theta.segment(2, kx) + rho_tilde * pw.v;
  const Eigen::Index n = d.n();
  pw.r1.resize(n);
  pw.dens.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = clamp_index(index(i));
    pw.r1(i) = d.y1(i) - normal_cdf(c);
    pw.dens(i) = normal_pdf(c);
  }
  (void)kz;
  return pw;
}

Matrix CuObjective::moments(const Vector& theta) const {
  const Pointwise pw = pointwise(theta);
  Matrix g(n(), num_moments());
  g.leftCols(system_.h1) = a_tilde_.array().colwise() * pw.r1.array();
  g.rightCols(system_.h2) = b_tilde_.array().colwise() * pw.v.array();
  return g;
}

void CuObjective::block_means(const Pointwise& pw, Vector& g1, Vector& g2) const {
  const double inv_n = 1.0 / static_cast<double>(n());
  g1 = a_tilde_.transpose() * pw.r1 * inv_n;
  g2 = b_tilde_.transpose() * pw.v * inv_n;
}

WeightFactor CuObjective::weight_from(const Pointwise& pw) const {
  const Matrix g1 = a_tilde_.array().colwise() * pw.r1.array();
  const Matrix g2 = b_tilde_.array().colwise() * pw.v.array();
  return WeightFactor{SpdFactor(centered_covariance(g1)), SpdFactor(centered_covariance(g2))};
}

WeightFactor CuObjective::weight(const Vector& theta) const { return weight_from(pointwise(theta)); }

double CuObjective::value(const Vector& theta) const {
  const Pointwise pw = pointwise(theta);
  Vector g1, g2;
  block_means(pw, g1, g2);
  const WeightFactor w = weight_from(pw);
  return static_cast<double>(n()) * (w.structural.quad_form(g1) + w.reduced.quad_form(g2));
}

double CuObjective::pinned_value(const Vector& theta, const WeightFactor& weight) const {
  const Pointwise pw = pointwise(theta);
  Vector g1, g2;
  block_means(pw, g1, g2);
  return static_cast<double>(n()) *
         (weight.structural.quad_form(g1) + weight.reduced.quad_form(g2));
}

double CuObjective::value_and_gradient(const Vector& theta, Vector& gradient) const {
  const Dataset& d = *data_;
  const Eigen::Index kx = d.kx();
  const Eigen::Index kz = d.kz();
  const auto nd = static_cast<double>(n());
  const double rho_tilde = theta(ParamTheta::kRhoTilde);

  const Pointwise pw = pointwise(theta);
  Vector g1, g2;
  block_means(pw, g1, g2);
  const WeightFactor weight = weight_from(pw);
  const Vector w1 = weight.structural.solve(g1);
  const Vector w2 = weight.reduced.solve(g2);
  const double value = nd * (g1.dot(w1) + g2.dot(w2));

  // Projections of each observation's instruments on the weighted mean moments.
  const Vector aw = a_tilde_ * w1;  // w1' a_i
  const Vector bw = b_tilde_ * w2;  // w2' b_i
  const Vector e1 = aw.cwiseProduct(pw.r1).array() - g1.dot(w1);
  const Vector e2 = bw.cwiseProduct(pw.v).array() - g2.dot(w2);

  // Structural block: d g1_i / d theta = -a_i phi_i d_i', with
  // d_i = (v_i, y2_i, x_i, -rho_tilde x_i, -rho_tilde z_i).
  // Coefficient c_i multiplies d_i in sum_i c_i d_i.
  //   2n w1' Gbar1      -> c_i = -2 aw_i phi_i
  //   -2 sum e1_i w1'G1i -> c_i = +2 e1_i aw_i phi_i
  const Vector c1 = (2.0 * aw.array() * pw.dens.array() * (e1.array() - 1.0)).matrix();
  // Reduced block: d g2_i / d theta = -b_i (0, 0, 0, x_i, z_i).
  const Vector c2 = (2.0 * bw.array() * (e2.array() - 1.0)).matrix();

  gradient.resize(num_params());
  gradient(ParamTheta::kRhoTilde) = c1.dot(pw.v);
  gradient(ParamTheta::kAlpha) = c1.dot(d.y2);
  gradient.segment(2, kx) = d.X.transpose() * c1;
  gradient.segment(2 + kx, kx + kz) = xz_.transpose() * (c2 - rho_tilde * c1);
  return value;
}

MomentEval CuObjective::evaluate(const ParamTheta& theta, const ParamTheta& theta_for_weight) const {
  const Dataset& d = *data_;
  const Eigen::Index kx = d.kx();
  const Eigen::Index kz = d.kz();
  const Vector flat = theta.flat();
  const Pointwise pw = pointwise(flat);
  const auto nd = static_cast<double>(n());

  MomentEval eval;
  Vector g1, g2;
  block_means(pw, g1, g2);
  eval.gbar.resize(num_moments());
  eval.gbar << g1, g2;

  const Pointwise pw_w = pointwise(theta_for_weight.flat());
  const Matrix m1 = a_tilde_.array().colwise() * pw_w.r1.array();
  const Matrix m2 = b_tilde_.array().colwise() * pw_w.v.array();
  eval.S = Matrix::Zero(num_moments(), num_moments());
  eval.S.topLeftCorner(system_.h1, system_.h1) = centered_covariance(m1);
  eval.S.bottomRightCorner(system_.h2, system_.h2) = centered_covariance(m2);

  Matrix dindex(n(), num_params());
  dindex.col(ParamTheta::kRhoTilde) = pw.v;
  dindex.col(ParamTheta::kAlpha) = d.y2;
  dindex.middleCols(2, kx) = d.X;
  dindex.middleCols(2 + kx, kx + kz) = -theta.rho_tilde * xz_;

  eval.G = Matrix::Zero(num_moments(), num_params());
  const Matrix weighted = dindex.array().colwise() * pw.dens.array();
  eval.G.topRows(system_.h1) = -(a_tilde_.transpose() * weighted) / nd;
  eval.G.bottomRows(system_.h2).middleCols(2 + kx, kx + kz) = -(b_tilde_.transpose() * xz_) / nd;
  return eval;
}

MomentEval evaluate(const MomentSystem& system, const Dataset& data, const ParamTheta& theta,
                    const ParamTheta& theta_for_weight) {
  return CuObjective(system, data).evaluate(theta, theta_for_weight);
}

}  // namespace weakid
