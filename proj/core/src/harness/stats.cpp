#include "byteshot/harness/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "byteshot/error.hpp"

namespace byteshot::harness {

SignificanceResult paired_t_test(std::span<const double> rates_a, std::span<const double> rates_b) {
  if (rates_a.size() != rates_b.size())
    throw Error(ErrorCode::DegenerateInput, "rate lists differ in length");
  const std::size_t n = rates_a.size();
  if (n < 2) throw Error(ErrorCode::DegenerateInput, "need at least two pairs, got " + std::to_string(n));

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = rates_a[i] - rates_b[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n - 1);
  if (!(var > 0.0)) throw Error(ErrorCode::DegenerateInput, "differences have zero variance");

  SignificanceResult r;
  r.pairs = static_cast<int>(n);
  r.statistic = mean / std::sqrt(var / static_cast<double>(n));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  r.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.statistic))), 0.0, 1.0);
  return r;
}

}  // namespace byteshot::harness
