#pragma once

namespace weakid {

/// Standard normal CDF. Saturates to 0/1 far in the tails.
double normal_cdf(double x);

/// Standard normal density exp(-x^2/2)/sqrt(2 pi).
double normal_pdf(double x);

/// Inverse of normal_cdf on (0, 1). Throws DomainError outside.
double normal_quantile(double p);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed directly.
double gamma_q(double a, double x);

/// Chi-square CDF with `df` degrees of freedom.
double chi2_cdf(double x, unsigned df);

/// Chi-square survival function 1 - chi2_cdf, accurate in the upper tail.
double chi2_sf(double x, unsigned df);

/// Chi-square quantile: q such that chi2_cdf(q, df) == p.
/// Throws DomainError unless 0 < p < 1 and df >= 1.
double chi2_quantile(double p, unsigned df);

}  // namespace weakid
