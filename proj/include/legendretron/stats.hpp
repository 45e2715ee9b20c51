#pragma once

// Summary statistics for repeated runs.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace legendretron {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); absent for n < 2.
inline std::optional<double> sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return std::nullopt;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Standard error of the mean; absent for n < 2.
inline std::optional<double> standard_error(std::span<const double> xs) {
  const auto sd = sample_stddev(xs);
  if (!sd) return std::nullopt;
  return *sd / std::sqrt(static_cast<double>(xs.size()));
}

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p_value = 1.0;  // two-sided
};

/// Welch's unequal-variance t-test. Absent when either sample has fewer
/// than two values. Two constant, equal samples give p = 1.
inline std::optional<WelchResult> welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) return std::nullopt;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = *sample_stddev(a) * *sample_stddev(a) / na;
  const double vb = *sample_stddev(b) * *sample_stddev(b) / nb;
  const double diff = mean(a) - mean(b);
  WelchResult r;
  if (va + vb == 0.0) {
    r.t = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    r.dof = na + nb - 2.0;
    r.p_value = diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = diff / std::sqrt(va + vb);
  r.dof = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  const boost::math::students_t dist(r.dof);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

}  // namespace legendretron
