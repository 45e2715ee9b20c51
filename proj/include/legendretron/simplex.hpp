#pragma once

// Maps between logits in R^{C-1}, the projected simplex (first C-1
// probabilities, summing to at most one) and the full probability simplex.
//
// softmax+ is the gradient of LogSumExp+(x) = log(1 + sum_k exp(x_k)): the
// usual softmax with an extra logit pinned at zero. It is a bijection from
// R^{C-1} onto the open projected simplex.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace legendretron {

/// Absolute tolerance for simplex membership checks.
inline constexpr double kSimplexTolerance = 1e-12;

namespace detail {

/// Neumaier-compensated sum.
inline double accurate_sum(std::span<const double> values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

inline void require_finite(std::span<const double> x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
  }
}

inline void require_probabilities(std::span<const double> p, const char* what) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string(what) + ": entry outside [0,1]");
    }
  }
}

}  // namespace detail

/// A point of the probability simplex: C probabilities summing to one.
class SimplexPoint {
 public:
  explicit SimplexPoint(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw std::invalid_argument("SimplexPoint: empty");
    detail::require_probabilities(p_, "SimplexPoint");
    if (std::abs(detail::accurate_sum(p_) - 1.0) > kSimplexTolerance) {
      throw std::invalid_argument("SimplexPoint: probabilities do not sum to one");
    }
  }

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const { return p_; }

  friend bool operator==(const SimplexPoint&, const SimplexPoint&) = default;

 private:
  std::vector<double> p_;
};

/// First C-1 coordinates of a simplex point. The missing mass
/// (1 - sum of entries) is carried alongside so that points produced from
/// log-probabilities or by projection keep the last probability at full
/// relative precision, even when it is far below the rounding error of the
/// sum.
class ProjectedSimplexPoint {
 public:
  explicit ProjectedSimplexPoint(std::vector<double> p) : p_(std::move(p)) {
    detail::require_probabilities(p_, "ProjectedSimplexPoint");
    const double remainder = 1.0 - detail::accurate_sum(p_);
    if (remainder < -kSimplexTolerance) {
      throw std::invalid_argument("ProjectedSimplexPoint: probabilities sum above one");
    }
    remainder_ = std::max(remainder, 0.0);
  }

  /// Builds a point whose missing mass is known more accurately than
  /// 1 - sum(p). The two must agree to within the simplex tolerance.
  static ProjectedSimplexPoint with_remainder(std::vector<double> p, double remainder) {
    ProjectedSimplexPoint out(std::move(p));
    if (!(remainder >= 0.0 && remainder <= 1.0) ||
        std::abs(remainder - out.remainder_) > kSimplexTolerance) {
      throw std::invalid_argument("ProjectedSimplexPoint: inconsistent remainder");
    }
    out.remainder_ = remainder;
    return out;
  }

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const { return p_; }
  /// Probability of the last (implicit) class.
  double remainder() const { return remainder_; }

  /// True when every entry and the remainder are strictly positive.
  bool interior() const {
    return remainder_ > 0.0 && std::all_of(p_.begin(), p_.end(), [](double v) { return v > 0.0; });
  }

 private:
  std::vector<double> p_;
  double remainder_ = 1.0;
};

/// Unbounded logits in R^{C-1}.
class LogitVector {
 public:
  explicit LogitVector(std::vector<double> x) : x_(std::move(x)) {
    detail::require_finite(x_, "LogitVector");
  }
  std::size_t size() const { return x_.size(); }
  double operator[](std::size_t i) const { return x_[i]; }
  std::span<const double> values() const { return x_; }
  operator std::span<const double>() const { return x_; }

 private:
  std::vector<double> x_;
};

inline ProjectedSimplexPoint project(const SimplexPoint& p) {
  if (p.size() < 2) throw std::invalid_argument("project: need at least two classes");
  const auto v = p.values();
  return ProjectedSimplexPoint::with_remainder(std::vector<double>(v.begin(), v.end() - 1),
                                               v.back());
}

inline SimplexPoint unproject(const ProjectedSimplexPoint& p) {
  if (p.size() == 0) throw std::invalid_argument("unproject: degenerate dimension (C = 1)");
  std::vector<double> full(p.values().begin(), p.values().end());
  full.push_back(p.remainder());
  return SimplexPoint(std::move(full));
}

namespace detail {

/// Shift used by the stable forms: max(0, max_k x_k). Including the pinned
/// zero logit keeps every exponent non-positive for both signs of x.
inline double logit_shift(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, v);
  return m;
}

}  // namespace detail

/// LogSumExp+(x) = log(1 + sum_k exp(x_k)), evaluated in shifted form.
inline double log_sum_exp_plus(std::span<const double> x) {
  detail::require_finite(x, "log_sum_exp_plus");
  const double shift = detail::logit_shift(x);
  double s = std::exp(-shift);
  for (double v : x) s += std::exp(v - shift);
  return shift + std::log(s);
}

/// log of the full class-probability vector (length C) induced by softmax+:
/// (x_1 - x* - log S, ..., x_{C-1} - x* - log S, -x* - log S).
inline std::vector<double> stable_log_probs(std::span<const double> x) {
  detail::require_finite(x, "stable_log_probs");
  const double shift = detail::logit_shift(x);
  double s = std::exp(-shift);
  for (double v : x) s += std::exp(v - shift);
  const double log_s = std::log(s);
  std::vector<double> out;
  out.reserve(x.size() + 1);
  for (double v : x) out.push_back(v - shift - log_s);
  out.push_back(-shift - log_s);
  return out;
}

inline ProjectedSimplexPoint softmax_plus(std::span<const double> x) {
  const auto log_p = stable_log_probs(x);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = std::exp(log_p[i]);
  return ProjectedSimplexPoint::with_remainder(std::move(p), std::exp(log_p.back()));
}

/// Inverse of softmax+: x_i = log(p_i / (1 - sum_k p_k)). Only defined on the
/// open projected simplex.
inline LogitVector softmax_plus_inverse(const ProjectedSimplexPoint& p) {
  if (!p.interior()) {
    throw std::domain_error("softmax_plus_inverse: point on the simplex boundary");
  }
  const double log_rest = std::log(p.remainder());
  std::vector<double> x(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) x[i] = std::log(p[i]) - log_rest;
  return LogitVector(std::move(x));
}

}  // namespace legendretron
