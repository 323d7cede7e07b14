#pragma once

#include <span>

namespace byteshot::harness {

struct SignificanceResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int pairs = 0;
};

/// Paired t-test on per-category rates with n-1 degrees of freedom and a
/// two-sided p-value. Throws DegenerateInput for mismatched or short inputs
/// and when the differences have zero variance.
SignificanceResult paired_t_test(std::span<const double> rates_a, std::span<const double> rates_b);

}  // namespace byteshot::harness
