#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "legendretron/legendretron.hpp"
#include "test_support.hpp"

using namespace legendretron;

namespace {

const VectorField kIdentity = [](std::span<const double> x) { return std::vector<double>(x.begin(), x.end()); };
const VectorField kNegation = [](std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (auto& v : y) v = -v;
  return y;
};
const VectorField kRotation = [](std::span<const double> x) { return std::vector<double>{-x[1], x[0]}; };
const VectorField kAdversarial = [](std::span<const double> x) { return std::vector<double>{x[1], x[0] * x[1]}; };
const VectorField kSoftmaxPlus = [](std::span<const double> x) {
  const auto p = softmax_plus(x);
  return std::vector<double>(p.values().begin(), p.values().end());
};

}  // namespace

TEST(NumericalJacobian, IdentityAndSoftmaxPlus) {
  const Matrix i = numerical_jacobian(kIdentity, std::vector<double>{0.3, -2.0, 5.0});
  EXPECT_LT((i - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-9);
  const Matrix s = numerical_jacobian(kSoftmaxPlus, std::vector<double>{0.0, 0.0});
  EXPECT_NEAR(s(0, 0), 2.0 / 9, 1e-6);
  EXPECT_NEAR(s(0, 1), -1.0 / 9, 1e-6);
  EXPECT_NEAR(s(1, 0), -1.0 / 9, 1e-6);
  EXPECT_NEAR(s(1, 1), 2.0 / 9, 1e-6);
}

TEST(NumericalJacobian, Errors) {
  const VectorField blowup = [](std::span<const double> x) { return std::vector<double>{1.0 / (x[0] - 1e-5)}; };
  EXPECT_THROW(numerical_jacobian(blowup, std::vector<double>{0.0}), std::domain_error);
  EXPECT_THROW(numerical_jacobian(kIdentity, std::vector<double>{0.0}, 0.0), std::invalid_argument);
}

TEST(NumericalJacobian, ChainMatchesReverseModeRows) {
  const LinkModel model = test_util::random_model(ModelShape{4, 2, 2, 2, 4}, 3);
  const VectorField chain = [&](std::span<const double> x) { return chain_apply(model.chain(), x); };
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto x = uniform_in_ball(rng, 3, 5.0);
    const Matrix num = numerical_jacobian(chain, x);
    // Row i of the Jacobian is the gradient of output i.
    ad::Tape tape;
    std::vector<ad::Var> v;
    for (double c : x) v.push_back(tape.leaf(c));
    std::vector<BlockWeights<ad::Var>> blocks;
    for (const auto& b : model.chain().blocks()) blocks.push_back(as_constants(tape, b.weights()));
    const auto y = chain_apply(std::span<const BlockWeights<ad::Var>>(blocks), v);
    for (int i = 0; i < 3; ++i) {
      const auto row = tape.gradient_values(y[static_cast<std::size_t>(i)], v).values;
      for (int j = 0; j < 3; ++j) EXPECT_LT(std::fabs(num(i, j) - row[static_cast<std::size_t>(j)]), 1e-5);
    }
  }
}

TEST(SymmetricEigenvalues, MatchCharacteristicPolynomialRoots) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    Matrix a(2, 2);
    a << uniform(rng, -3, 3), uniform(rng, -3, 3), 0, uniform(rng, -3, 3);
    a(1, 0) = a(0, 1);
    const double tr = a.trace(), det = a.determinant();
    const double disc = std::sqrt(tr * tr / 4 - det);
    const auto ev = symmetric_eigenvalues(a);
    EXPECT_NEAR(ev[0], tr / 2 - disc, 1e-9);
    EXPECT_NEAR(ev[1], tr / 2 + disc, 1e-9);
  }
  for (int t = 0; t < 200; ++t) {
    Matrix a(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) a(i, j) = a(j, i) = uniform(rng, -3, 3);
    // Trigonometric roots of the characteristic cubic.
    const double q = a.trace() / 3;
    const Matrix shifted = a - q * Matrix::Identity(3, 3);
    const double p = std::sqrt((shifted * shifted).trace() / 6);
    const double r = std::clamp((shifted / p).determinant() / 2, -1.0, 1.0);
    const double phi = std::acos(r) / 3;
    const double l1 = q + 2 * p * std::cos(phi);
    const double l3 = q + 2 * p * std::cos(phi + 2 * M_PI / 3);
    const double l2 = 3 * q - l1 - l3;
    std::vector<double> expected{l1, l2, l3};
    std::sort(expected.begin(), expected.end());
    const auto ev = symmetric_eigenvalues(a);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(ev[static_cast<std::size_t>(i)], expected[static_cast<std::size_t>(i)], 1e-9);
  }
}

TEST(CheckMonotone, IdentityAndNegation) {
  const auto id = check_monotone(kIdentity, 3, 1000, 1);
  EXPECT_TRUE(id.strictly_monotone());
  EXPECT_EQ(id.violations, 0);
  // For the identity the inner product equals the squared distance.
  const std::vector<double> x{1.0, 2.0, 3.0}, z{0.0, 0.0, 1.0};
  EXPECT_DOUBLE_EQ(monotone_gap(kIdentity, x, z), 1.0 + 4.0 + 4.0);
  const auto neg = check_monotone(kNegation, 3, 1000, 1);
  EXPECT_EQ(neg.violations, 1000);
  EXPECT_FALSE(neg.strictly_monotone());
}

TEST(CheckCyclic, IdentityPassesNegationFails) {
  for (int n : {2, 3, 4}) EXPECT_TRUE(check_cyclic(kIdentity, 3, n, 200, 2).passed());
  const std::vector<std::vector<double>> two{{0.0, 0.0}, {1.0, 0.0}};
  EXPECT_DOUBLE_EQ(cycle_sum(kNegation, two), 1.0);
  EXPECT_FALSE(check_cyclic(kNegation, 2, 2, 10, 2).passed());
  EXPECT_THROW(check_cyclic(kIdentity, 2, 1, 10, 2), std::invalid_argument);
}

TEST(CheckCyclic, RotationIsMonotoneButNotCyclicallyMonotone) {
  const auto mono = check_monotone(kRotation, 2, 500, 3);
  EXPECT_GE(mono.min_inner_product, -1e-9);
  const std::vector<std::vector<double>> square{{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const std::vector<std::vector<double>> reversed{{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
  EXPECT_GT(std::max(cycle_sum(kRotation, square), cycle_sum(kRotation, reversed)), 0.0);
  EXPECT_FALSE(check_cyclic(kRotation, 2, 4, 200, 3).passed());
}

TEST(CheckCyclic, SoftmaxPlusPasses) {
  for (int n : {2, 3, 4}) EXPECT_TRUE(check_cyclic(kSoftmaxPlus, 3, n, 200, 4).passed());
}

TEST(CertifyLink, ZeroBlockModelPassesWithClosedFormSpectrum) {
  const LinkModel model = LinkModel::initialize(ModelShape{4, 3, 0, 2, 4}, 5);
  const auto cert = certify_link(model, 100, 5);
  EXPECT_TRUE(cert.passed());
  for (const auto& r : cert.reports) {
    const auto mu = softmax_plus(r.point);
    Matrix h(3, 3);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) h(a, b) = (a == b ? mu[a] : 0.0) - mu[a] * mu[b];
    const auto ev = symmetric_eigenvalues(h);
    EXPECT_NEAR(r.min_eigenvalue, ev.front(), 1e-6);
    EXPECT_NEAR(r.max_eigenvalue, ev.back(), 1e-6);
  }
}

TEST(CertifyLink, BinaryModelsAlwaysPass) {
  // In one dimension every increasing map is a gradient.
  const LinkModel model = test_util::random_model(ModelShape{2, 3, 2, 2, 4}, 6);
  EXPECT_TRUE(certify_link(model, 100, 6).passed());
  EXPECT_TRUE(check_monotone(link_field(model), 1, 1000, 6).strictly_monotone());
}

TEST(CertifyLink, NumericalJacobianMatchesExact) {
  const LinkModel model = test_util::random_model(ModelShape{4, 3, 2, 2, 4}, 7);
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const auto z = uniform_in_ball(rng, 3, 10.0);
    const Matrix d = numerical_jacobian(link_field(model), z) - link_jacobian(model, z);
    EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-8);
  }
}

// Composing softmax+ with a learned gradient map: the Jacobian is a product
// of two symmetric positive definite matrices, which is neither symmetric
// nor guaranteed to have a positive definite symmetric part.
TEST(CertifyLink, ComposedLinkJacobianIsNotSymmetric) {
  const LinkModel model = LinkModel::initialize(ModelShape{4, 3, 1, 2, 4}, 8);
  const auto cert = certify_link(model, 100, 8);
  EXPECT_GT(cert.max_asymmetry, 1e-3);
  EXPECT_FALSE(cert.passed());
}

TEST(CertifyLink, AdversarialFieldFails) {
  const auto cert = certify_field(kAdversarial, 2, 100, 9);
  EXPECT_FALSE(cert.passed());
}

TEST(Equivalence, CertifiedFieldsAreMonotone) {
  const LinkModel zero_block = LinkModel::initialize(ModelShape{4, 3, 0, 2, 4}, 10);
  GradientChain chain(3);
  Rng rng(10);
  chain.push_back(ConvexBlock::initialize(BlockShape{3, 2, 4}, rng));
  const VectorField block_field = [&](std::span<const double> x) { return chain_apply(chain, x); };
  const std::vector<std::pair<VectorField, int>> fields{
      {kIdentity, 3}, {kSoftmaxPlus, 2}, {link_field(zero_block), 3}, {block_field, 3}};
  for (const auto& [f, d] : fields) {
    ASSERT_TRUE(certify_field(f, d, 50, 11).passed());
    EXPECT_TRUE(check_monotone(f, d, 1000, 11).strictly_monotone());
  }
}

TEST(Equivalence, NonSemiDefiniteFieldsHaveMonotonicityViolations) {
  const LinkModel composed = LinkModel::initialize(ModelShape{4, 3, 2, 2, 4}, 12);
  const std::vector<std::pair<VectorField, int>> fields{
      {kNegation, 3}, {kAdversarial, 2}, {link_field(composed), 3}};
  for (const auto& [f, d] : fields) {
    const auto cert = certify_field(f, d, 100, 12);
    const auto worst = std::min_element(cert.reports.begin(), cert.reports.end(),
                                        [](const auto& a, const auto& b) { return a.min_eigenvalue < b.min_eigenvalue; });
    ASSERT_FALSE(worst->semi_definite());
    const auto pair = find_monotonicity_violation(f, *worst, 12);
    ASSERT_TRUE(pair.has_value());
    EXPECT_LT(monotone_gap(f, pair->first, pair->second), 0.0);
  }
}

TEST(Reports, SerializeToJson) {
  const auto cert = certify_field(kIdentity, 2, 3, 1);
  const auto j = to_json(cert);
  EXPECT_EQ(j["points"], 3);
  EXPECT_EQ(j["reports"].size(), 3u);
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_EQ(to_json(check_cyclic(kIdentity, 2, 3, 5, 1))["cycle_length"], 3);
  EXPECT_EQ(to_json(check_monotone(kIdentity, 2, 5, 1))["pairs"], 5);
}
