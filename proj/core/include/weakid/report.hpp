#pragma once

#include <optional>
#include <string>
#include <utility>

namespace weakid {

/// Outcome of a single hypothesis test, ready for report emission.
struct TestReport {
  std::string test;
  double statistic = 0.0;
  double critical_value = 0.0;
  bool reject = false;
  /// Symmetric confidence interval, when the test defines one.
  std::optional<std::pair<double, double>> confidence_interval;
  /// Where the critical value comes from ("chi-square quantile", "table-sourced", ...).
  std::string source;

  std::string decision() const { return reject ? "Reject" : "Not Reject"; }
};

}  // namespace weakid
