#pragma once

// Proper losses: binary partial losses, conditional risk, a sampling
// properness check, the categorical negative log-likelihood, and canonical
// losses reconstructed from an inverse link by line integration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "legendretron/autodiff.hpp"
#include "legendretron/random.hpp"
#include "legendretron/simplex.hpp"

namespace legendretron {

/// A map R^n -> R^n.
using VectorField = std::function<std::vector<double>(std::span<const double>)>;

/// Loss for each possible outcome, length C. Entries may be +infinity
/// (e.g. log loss at a zero probability).
using PartialLossVector = std::vector<double>;

enum class BinaryLoss { kZeroOne, kSquare, kLog, kMatsushita };

/// Partial loss l_1(q) of a binary proper loss when the true label is the
/// positive class and q is the predicted probability of that class. The
/// 0-1 loss predicts the positive class when q >= 1/2.
inline double binary_partial_loss(BinaryLoss kind, double q) {
  switch (kind) {
    case BinaryLoss::kZeroOne:
      if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("zero-one loss: q outside [0,1]");
      return q >= 0.5 ? 0.0 : 1.0;
    case BinaryLoss::kSquare:
      if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("square loss: q outside [0,1]");
      return (1.0 - q) * (1.0 - q);
    case BinaryLoss::kLog:
      if (!(q > 0.0 && q <= 1.0)) throw std::domain_error("log loss: q outside (0,1]");
      return -std::log(q);
    case BinaryLoss::kMatsushita:
      if (!(q > 0.0 && q <= 1.0)) throw std::domain_error("Matsushita loss: q outside (0,1]");
      return 0.5 * std::sqrt((1.0 - q) / q);
  }
  throw std::invalid_argument("binary_partial_loss: unknown loss");
}

/// (l_1(q), l_1(1 - q)): both partial losses of a symmetric binary loss.
/// The zero-one loss breaks the q = 1/2 tie toward the first class.
inline PartialLossVector binary_loss_vector(BinaryLoss kind, const SimplexPoint& q) {
  if (q.size() != 2) throw std::invalid_argument("binary_loss_vector: need two classes");
  if (kind == BinaryLoss::kZeroOne) {
    const bool first = q[0] >= 0.5;
    return {first ? 0.0 : 1.0, first ? 1.0 : 0.0};
  }
  const auto partial = [&](double v) {
    return v <= 0.0 && kind != BinaryLoss::kSquare ? std::numeric_limits<double>::infinity()
                                                   : binary_partial_loss(kind, v);
  };
  return {partial(q[0]), partial(q[1])};
}

/// Multiclass log loss: l_i(q) = -log q_i.
inline PartialLossVector log_loss(const SimplexPoint& q) {
  PartialLossVector out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = q[i] > 0.0 ? -std::log(q[i]) : std::numeric_limits<double>::infinity();
  }
  return out;
}

/// Multiclass square (Brier) loss: l_i(q) = sum_j ([i == j] - q_j)^2.
inline PartialLossVector square_loss(const SimplexPoint& q) {
  double sq = 0.0;
  for (double v : q.values()) sq += v * v;
  PartialLossVector out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = sq - 2.0 * q[i] + 1.0;
  return out;
}

/// Conditional risk L(p, q) = sum_i p_i l_i(q), with 0 * inf taken as 0.
inline double conditional_risk(const SimplexPoint& p, std::span<const double> partial_losses) {
  if (p.size() != partial_losses.size()) {
    throw std::invalid_argument("conditional_risk: dimension mismatch");
  }
  double risk = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    risk += p[i] * partial_losses[i];
  }
  return risk;
}

inline double kl_divergence(const SimplexPoint& p, const SimplexPoint& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: dimension mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

using LossFunction = std::function<PartialLossVector(const SimplexPoint&)>;

struct PropernessReport {
  int classes = 0;
  int trials = 0;
  std::uint64_t seed = 0;
  int violations = 0;           // pairs with L(p,p) - L(p,q) > tolerance
  double max_violation = 0.0;   // max over pairs of L(p,p) - L(p,q)
  double tolerance = 1e-9;

  bool passed() const { return max_violation <= tolerance; }
};

/// Samples (p, q) uniformly from the open simplex and checks
/// L(p, p) <= L(p, q).
inline PropernessReport properness_check(const LossFunction& loss, int classes, int trials,
                                         std::uint64_t seed) {
  if (classes < 2 || trials < 1) throw std::invalid_argument("properness_check: bad arguments");
  PropernessReport report;
  report.classes = classes;
  report.trials = trials;
  report.seed = seed;
  report.max_violation = -std::numeric_limits<double>::infinity();
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const SimplexPoint p(uniform_simplex(rng, static_cast<std::size_t>(classes)));
    const SimplexPoint q(uniform_simplex(rng, static_cast<std::size_t>(classes)));
    const double gap = conditional_risk(p, loss(p)) - conditional_risk(p, loss(q));
    report.max_violation = std::max(report.max_violation, gap);
    if (gap > report.tolerance) ++report.violations;
  }
  return report;
}

/// -log p_y under softmax+, for a 1-based class y in 1 .. C.
inline double nll(std::span<const double> x, int y) {
  if (y < 1 || static_cast<std::size_t>(y) > x.size() + 1) {
    throw std::out_of_range("nll: class index out of range");
  }
  return -stable_log_probs(x)[static_cast<std::size_t>(y - 1)];
}

/// Recorded -log p_y; same shifted form as stable_log_probs, with the shift
/// held constant (the result does not depend on it).
inline ad::Var nll(std::span<const ad::Var> x, int y) {
  if (x.empty()) throw std::invalid_argument("nll: empty logits");
  if (y < 1 || static_cast<std::size_t>(y) > x.size() + 1) {
    throw std::out_of_range("nll: class index out of range");
  }
  ad::Tape& tape = *x.front().tape();
  double shift = 0.0;
  for (const auto& v : x) shift = std::max(shift, v.value());
  std::vector<ad::Var> terms;
  terms.reserve(x.size());
  for (const auto& v : x) terms.push_back(tape.exp(tape.affine(-shift, {1.0}, {v})));
  const std::vector<double> ones(terms.size(), 1.0);
  const ad::Var log_s = tape.log(tape.affine(std::exp(-shift), ones, terms));
  if (static_cast<std::size_t>(y) == x.size() + 1) return tape.affine(shift, {1.0}, {log_s});
  return tape.affine(shift, {1.0, -1.0}, {log_s, x[static_cast<std::size_t>(y - 1)]});
}

/// Recorded LogSumExp+; its gradient is softmax+.
inline ad::Var log_sum_exp_plus(std::span<const ad::Var> x) {
  return nll(x, static_cast<int>(x.size()) + 1);
}

/// Gauss-Legendre nodes and weights on [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
  // (P_n(x), P_n'(x)) by the three-term recurrence.
  const auto legendre = [n](double x) {
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    return std::pair<double, double>{p1, n * (x * p1 - p0) / (x * x - 1.0)};
  };
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      const auto [p, dp] = legendre(x);
      const double step = p / dp;
      x -= step;
      if (std::abs(step) < 1e-16) break;
    }
    const double dp = legendre(x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // Map [-1, 1] onto [0, 1].
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[lo] = 0.5 * (1.0 - x);
    rule.nodes[hi] = 0.5 * (1.0 + x);
    rule.weights[lo] = 0.5 * w;
    rule.weights[hi] = 0.5 * w;
  }
  return rule;
}

/// Potential of a conservative field along the segment from x0 to x:
/// F(x) - F(x0) = int_0^1 <link(x0 + t (x - x0)), x - x0> dt.
/// For an inverse canonical link this is the convex conjugate of the
/// negative projected Bayes risk, up to its value at x0.
inline double potential(const VectorField& link, std::span<const double> x,
                        std::span<const double> x0, int n_quad = 64) {
  if (x.size() != x0.size()) throw std::invalid_argument("potential: dimension mismatch");
  if (n_quad < 8) throw std::invalid_argument("potential: need at least 8 quadrature nodes");
  const QuadratureRule rule = gauss_legendre(n_quad);
  std::vector<double> dir(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dir[i] = x[i] - x0[i];
  std::vector<double> point(x.size());
  double total = 0.0;
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    for (std::size_t i = 0; i < x.size(); ++i) point[i] = x0[i] + rule.nodes[q] * dir[i];
    const auto f = link(point);
    if (f.size() != x.size()) throw std::invalid_argument("potential: field dimension mismatch");
    double inner = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) inner += f[i] * dir[i];
    total += rule.weights[q] * inner;
  }
  return total;
}

/// Potential along the polyline x0 -> waypoints... -> x.
inline double path_potential(const VectorField& link, std::span<const std::vector<double>> path,
                             int n_quad = 64) {
  if (path.size() < 2) throw std::invalid_argument("path_potential: need two points");
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    total += potential(link, path[k + 1], path[k], n_quad);
  }
  return total;
}

/// Canonical proper loss of an inverse link, as a function of the logit x:
/// (F(x) - x_1, ..., F(x) - x_{C-1}, F(x)) with F the potential of the link.
/// F is only determined up to an additive constant; `base_value` is the
/// value assigned to F(x0) and is added to every component.
inline PartialLossVector canonical_loss(const VectorField& link, std::span<const double> x,
                                        std::span<const double> x0, int n_quad = 64,
                                        double base_value = 0.0) {
  const double f = base_value + potential(link, x, x0, n_quad);
  PartialLossVector out(x.size() + 1);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f - x[i];
  out.back() = f;
  return out;
}

}  // namespace legendretron
