#pragma once

// Sampling-based checks of the convex-analysis structure of a vector field:
// Jacobian symmetry and definiteness, monotonicity and cyclic monotonicity.
// A pass means no counterexample was found at the sampled points.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "legendretron/autodiff.hpp"
#include "legendretron/convex_block.hpp"
#include "legendretron/losses.hpp"
#include "legendretron/model.hpp"
#include "legendretron/random.hpp"
#include "legendretron/simplex.hpp"

namespace legendretron {

inline constexpr double kSemiDefiniteThreshold = -1e-8;
inline constexpr double kAsymmetryTolerance = 1e-5;
inline constexpr double kCycleTolerance = 1e-9;
inline constexpr double kSampleRadius = 10.0;

using Matrix = Eigen::MatrixXd;

/// Central-difference Jacobian; column j is (F(x + h e_j) - F(x - h e_j)) / 2h.
inline Matrix numerical_jacobian(const VectorField& field, std::span<const double> x, double step = 1e-5) {
  if (!(step > 0.0)) throw std::invalid_argument("numerical_jacobian: step must be positive");
  const std::size_t n = x.size();
  std::vector<double> xp(x.begin(), x.end());
  Matrix jac;
  for (std::size_t j = 0; j < n; ++j) {
    xp[j] = x[j] + step;
    const std::vector<double> fp = field(xp);
    xp[j] = x[j] - step;
    const std::vector<double> fm = field(xp);
    xp[j] = x[j];
    if (j == 0) jac.resize(static_cast<Eigen::Index>(fp.size()), static_cast<Eigen::Index>(n));
    if (fp.size() != static_cast<std::size_t>(jac.rows()) || fm.size() != fp.size()) {
      throw std::invalid_argument("numerical_jacobian: field output size changed");
    }
    for (std::size_t i = 0; i < fp.size(); ++i) {
      if (!std::isfinite(fp[i]) || !std::isfinite(fm[i])) {
        throw std::domain_error("numerical_jacobian: non-finite field value");
      }
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - fm[i]) / (2.0 * step);
    }
  }
  return jac;
}

/// Ascending eigenvalues of a symmetric matrix.
inline std::vector<double> symmetric_eigenvalues(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("symmetric_eigenvalues: matrix not square");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("symmetric_eigenvalues: solver failed");
  const auto& ev = solver.eigenvalues();
  return std::vector<double>(ev.data(), ev.data() + ev.size());
}

struct JacobianReport {
  std::vector<double> point;
  double max_asymmetry = 0.0;  // max |J - J^T| entry
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  std::vector<double> min_eigenvector;  // of (J + J^T) / 2

  bool symmetric() const { return max_asymmetry < kAsymmetryTolerance; }
  bool semi_definite() const { return min_eigenvalue > kSemiDefiniteThreshold; }
  bool definite() const { return min_eigenvalue > 0.0; }
};

inline JacobianReport jacobian_report(std::span<const double> x, const Matrix& jac) {
  if (jac.rows() != jac.cols()) throw std::invalid_argument("jacobian_report: Jacobian not square");
  JacobianReport r;
  r.point.assign(x.begin(), x.end());
  r.max_asymmetry = jac.size() == 0 ? 0.0 : (jac - jac.transpose()).cwiseAbs().maxCoeff();
  const Matrix sym = 0.5 * (jac + jac.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw std::runtime_error("jacobian_report: solver failed");
  const auto& ev = solver.eigenvalues();
  r.min_eigenvalue = ev(0);
  r.max_eigenvalue = ev(ev.size() - 1);
  const auto v = solver.eigenvectors().col(0);
  r.min_eigenvector.assign(v.data(), v.data() + v.size());
  return r;
}

struct CertificationReport {
  int points = 0;
  std::uint64_t seed = 0;
  double radius = kSampleRadius;
  std::vector<JacobianReport> reports;
  double max_asymmetry = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();

  bool passed() const { return max_asymmetry < kAsymmetryTolerance && min_eigenvalue > 0.0; }
};

/// Jacobian symmetry and definiteness of `field` at `points` samples drawn
/// uniformly from the ball of the given radius.
inline CertificationReport certify_field(const VectorField& field, int dim, int points, std::uint64_t seed,
                                         double radius = kSampleRadius, double step = 1e-5) {
  if (dim < 1 || points < 1) throw std::invalid_argument("certify_field: need dim >= 1 and points >= 1");
  CertificationReport out;
  out.points = points;
  out.seed = seed;
  out.radius = radius;
  Rng rng(derive_seed(seed, 0xce57u));
  for (int k = 0; k < points; ++k) {
    const auto x = uniform_in_ball(rng, static_cast<std::size_t>(dim), radius);
    JacobianReport r = jacobian_report(x, numerical_jacobian(field, x, step));
    out.max_asymmetry = std::max(out.max_asymmetry, r.max_asymmetry);
    out.min_eigenvalue = std::min(out.min_eigenvalue, r.min_eigenvalue);
    out.reports.push_back(std::move(r));
  }
  return out;
}

/// u o v^{-1} as a field on logit space, with values in the projected simplex.
inline VectorField link_field(const LinkModel& model) {
  return [&model](std::span<const double> z) {
    const auto p = model.link(z);
    return std::vector<double>(p.values().begin(), p.values().end());
  };
}

inline CertificationReport certify_link(const LinkModel& model, int points, std::uint64_t seed,
                                        double radius = kSampleRadius) {
  return certify_field(link_field(model), model.shape().logit_dim(), points, seed, radius);
}

/// Exact Jacobian of u o v^{-1} at z by reverse accumulation, one row per
/// output coordinate.
inline Matrix link_jacobian(const LinkModel& model, std::span<const double> z) {
  const auto dim = static_cast<std::size_t>(model.shape().logit_dim());
  if (z.size() != dim) throw std::invalid_argument("link_jacobian: dimension mismatch");
  ad::Tape tape;
  std::vector<ad::Var> x;
  for (double v : z) x.push_back(tape.leaf(v));
  std::vector<BlockWeights<ad::Var>> blocks;
  for (const auto& b : model.chain().blocks()) blocks.push_back(as_constants(tape, b.weights()));
  const auto y = chain_apply(std::span<const BlockWeights<ad::Var>>(blocks), x);
  Matrix jac(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    const ad::Var p = ad::exp(-nll(y, static_cast<int>(i) + 1));
    const auto g = tape.gradient_values(p, x).values;
    for (std::size_t j = 0; j < dim; ++j) {
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g[j];
    }
  }
  return jac;
}

struct MonotoneReport {
  int pairs = 0;
  std::uint64_t seed = 0;
  double min_inner_product = std::numeric_limits<double>::infinity();
  int violations = 0;  // pairs with a negative inner product

  bool strictly_monotone() const { return min_inner_product > 0.0; }
};

inline double inner_product(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// <F(x) - F(z), x - z>.
inline double monotone_gap(const VectorField& field, std::span<const double> x, std::span<const double> z) {
  const auto fx = field(x);
  const auto fz = field(z);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (fx[i] - fz[i]) * (x[i] - z[i]);
  return s;
}

inline MonotoneReport check_monotone(const VectorField& field, int dim, int pairs, std::uint64_t seed,
                                     double radius = kSampleRadius) {
  if (pairs < 1 || dim < 1) throw std::invalid_argument("check_monotone: need pairs >= 1 and dim >= 1");
  MonotoneReport r;
  r.pairs = pairs;
  r.seed = seed;
  Rng rng(derive_seed(seed, 0x303u));
  for (int k = 0; k < pairs; ++k) {
    const auto x = uniform_in_ball(rng, static_cast<std::size_t>(dim), radius);
    const auto z = uniform_in_ball(rng, static_cast<std::size_t>(dim), radius);
    const double g = monotone_gap(field, x, z);
    r.min_inner_product = std::min(r.min_inner_product, g);
    if (g < 0.0) ++r.violations;
  }
  return r;
}

/// sum_i <F(x_i), x_{i+1} - x_i> over the closed cycle x_1, ..., x_n, x_1.
inline double cycle_sum(const VectorField& field, std::span<const std::vector<double>> cycle) {
  if (cycle.size() < 2) throw std::invalid_argument("cycle_sum: need at least two points");
  double s = 0.0;
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    const auto& x = cycle[i];
    const auto& next = cycle[(i + 1) % cycle.size()];
    const auto y = field(x);
    for (std::size_t j = 0; j < x.size(); ++j) s += y[j] * (next[j] - x[j]);
  }
  return s;
}

struct CyclicReport {
  int cycle_length = 0;
  int cycles = 0;
  std::uint64_t seed = 0;
  double max_sum = -std::numeric_limits<double>::infinity();
  int violations = 0;

  bool passed() const { return violations == 0; }
};

inline CyclicReport check_cyclic(const VectorField& field, int dim, int cycle_length, int cycles,
                                 std::uint64_t seed, double radius = kSampleRadius) {
  if (cycle_length < 2) throw std::invalid_argument("check_cyclic: cycle length must be at least 2");
  if (cycles < 1 || dim < 1) throw std::invalid_argument("check_cyclic: need cycles >= 1 and dim >= 1");
  CyclicReport r;
  r.cycle_length = cycle_length;
  r.cycles = cycles;
  r.seed = seed;
  Rng rng(derive_seed(seed, 0xc1c1eu));
  std::vector<std::vector<double>> cycle(static_cast<std::size_t>(cycle_length));
  for (int k = 0; k < cycles; ++k) {
    for (auto& x : cycle) x = uniform_in_ball(rng, static_cast<std::size_t>(dim), radius);
    const double s = cycle_sum(field, cycle);
    r.max_sum = std::max(r.max_sum, s);
    if (s > kCycleTolerance) ++r.violations;
  }
  return r;
}

/// A pair (x, z) with <F(x) - F(z), x - z> < 0, if one exists near a point
/// where the symmetrized Jacobian has a negative eigenvalue. Probes along the
/// offending eigenvector at shrinking scales, then at random nearby offsets.
inline std::optional<std::pair<std::vector<double>, std::vector<double>>> find_monotonicity_violation(
    const VectorField& field, const JacobianReport& report, std::uint64_t seed = 0) {
  const std::size_t n = report.point.size();
  const auto probe = [&](std::span<const double> dir, double t)
      -> std::optional<std::pair<std::vector<double>, std::vector<double>>> {
    std::vector<double> a(report.point), b(report.point);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] += t * dir[i];
      b[i] -= t * dir[i];
    }
    if (monotone_gap(field, a, b) < 0.0) return std::make_pair(a, b);
    return std::nullopt;
  };
  for (double t = 1.0; t > 1e-7; t *= 0.5) {
    if (auto hit = probe(report.min_eigenvector, t)) return hit;
  }
  Rng rng(derive_seed(seed, 0x5ea4c4u));
  for (int k = 0; k < 2000; ++k) {
    const double t = std::pow(10.0, -uniform(rng, 0.0, 6.0));
    std::vector<double> dir(n);
    const auto jitter = uniform_in_ball(rng, n, 1.0);
    for (std::size_t i = 0; i < n; ++i) dir[i] = report.min_eigenvector[i] + 0.5 * jitter[i];
    if (auto hit = probe(dir, t)) return hit;
  }
  return std::nullopt;
}

inline nlohmann::json to_json(const JacobianReport& r) {
  return {{"point", r.point},
          {"max_asymmetry", r.max_asymmetry},
          {"min_eigenvalue", r.min_eigenvalue},
          {"max_eigenvalue", r.max_eigenvalue}};
}

inline nlohmann::json to_json(const CertificationReport& r) {
  nlohmann::json j{{"points", r.points},
                   {"seed", r.seed},
                   {"radius", r.radius},
                   {"max_asymmetry", r.max_asymmetry},
                   {"min_eigenvalue", r.min_eigenvalue},
                   {"passed", r.passed()}};
  j["reports"] = nlohmann::json::array();
  for (const auto& rep : r.reports) j["reports"].push_back(to_json(rep));
  return j;
}

inline nlohmann::json to_json(const MonotoneReport& r) {
  return {{"pairs", r.pairs},
          {"seed", r.seed},
          {"min_inner_product", r.min_inner_product},
          {"violations", r.violations},
          {"passed", r.strictly_monotone()}};
}

inline nlohmann::json to_json(const CyclicReport& r) {
  return {{"cycle_length", r.cycle_length},
          {"cycles", r.cycles},
          {"seed", r.seed},
          {"max_sum", r.max_sum},
          {"violations", r.violations},
          {"passed", r.passed()}};
}

}  // namespace legendretron
