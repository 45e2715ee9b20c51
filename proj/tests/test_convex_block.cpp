#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "legendretron/legendretron.hpp"
#include "test_support.hpp"

using namespace legendretron;
using legendretron::test_util::fd_gradient;
using legendretron::test_util::rel_err;

namespace {

double sp(double v) { return std::log1p(std::exp(v)); }

// Straight-line evaluation from raw parameters, written against the layout
// only: per layer free weights, raw positive weights, bias; then w0, w1.
double reference_block(const BlockShape& s, const std::vector<double>& raw, const std::vector<double>& x) {
  std::size_t i = 0;
  std::vector<double> act;
  for (int k = 0; k <= s.depth; ++k) {
    const int rows = k == s.depth ? 1 : s.hidden;
    const int fc = k == 0 ? 0 : s.input_dim;
    const int pc = k == 0 ? s.input_dim : s.hidden;
    std::vector<double> z(rows, 0.0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < fc; ++c) z[r] += raw[i++] * x[c];
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < pc; ++c) z[r] += sp(raw[i++]) * (k == 0 ? x[c] : act[c]);
    for (int r = 0; r < rows; ++r) z[r] += raw[i++];
    act.assign(rows, 0.0);
    for (int r = 0; r < rows; ++r) act[r] = sp(z[r]);
  }
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return sp(raw[i]) * act[0] + sp(raw[i + 1]) * sq / 2.0;
}

ConvexBlock seeded_block(int d, int h, int m, std::uint64_t seed) {
  Rng rng(seed);
  return ConvexBlock::initialize(BlockShape{d, h, m}, rng);
}

}  // namespace

TEST(BlockShape, ParameterLayout) {
  const BlockShape s{3, 2, 4};
  // layer 0: 2x3 pos + 2 bias; layers 1..3: 2x3 free + 2x2 pos + 2 bias; layer 4: 3 + 2 + 1; w0, w1.
  EXPECT_EQ(s.param_count(), 8u + 3 * 12u + 6u + 2u);
  EXPECT_EQ(s.raw_w1_index(), s.param_count() - 1);
  EXPECT_THROW(BlockShape({0, 2, 4}).validate(), std::invalid_argument);
}

TEST(BlockEval, MatchesStraightLineReference) {
  const ConvexBlock b = seeded_block(3, 2, 4, 0);
  const std::vector<double> raw(b.params().begin(), b.params().end());
  for (const std::vector<double>& x : {std::vector<double>{0.0, 0.0, 0.0}, std::vector<double>{1.0, -2.0, 0.5}}) {
    EXPECT_NEAR(block_eval(b, x), reference_block(b.shape(), raw, x), 1e-13);
  }
}

TEST(BlockEval, QuadraticTermIsEvenAndScalesQuadratically) {
  ConvexBlock b = seeded_block(2, 3, 2, 1);
  // Switch off the network part: s(w0) -> ~0.
  b.set_param(b.shape().raw_w0_index(), -800.0);
  const std::vector<double> x{0.7, -1.3};
  const std::vector<double> neg{-0.7, 1.3};
  const std::vector<double> twice{1.4, -2.6};
  EXPECT_DOUBLE_EQ(block_eval(b, x), block_eval(b, neg));
  EXPECT_NEAR(block_eval(b, twice), 4.0 * block_eval(b, x), 1e-14);
  EXPECT_NEAR(block_eval(b, x), std::log(2.0) * (0.49 + 1.69) / 2.0, 1e-14);
}

TEST(BlockEval, RejectsDimensionMismatch) {
  const ConvexBlock b = seeded_block(2, 2, 2, 2);
  EXPECT_THROW(block_eval(b, std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(block_grad(b, std::vector<double>{1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST(BlockEval, IsConvexAlongSegments) {
  Rng rng(3);
  const ConvexBlock b = seeded_block(3, 4, 3, 3);
  for (int t = 0; t < 500; ++t) {
    const auto x = uniform_in_ball(rng, 3, 10.0);
    const auto z = uniform_in_ball(rng, 3, 10.0);
    std::vector<double> mid(3);
    for (int i = 0; i < 3; ++i) mid[i] = 0.5 * (x[i] + z[i]);
    EXPECT_LE(block_eval(b, mid), 0.5 * (block_eval(b, x) + block_eval(b, z)) + 1e-12);
  }
}

TEST(BlockGrad, MatchesFiniteDifferences) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const ConvexBlock b = seeded_block(1 + t % 4, 2 + t % 3, 1 + t % 4, 100 + t);
    const auto x = uniform_in_ball(rng, static_cast<std::size_t>(b.shape().input_dim), 5.0);
    const auto g = block_grad(b, x);
    const auto ref = fd_gradient([&](std::span<const double> v) { return block_eval(b, v); }, x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(rel_err(g[i], ref[i], 1e-6), 1e-5);
  }
}

TEST(BlockGrad, StronglyMonotone) {
  Rng rng(5);
  const ConvexBlock b = seeded_block(3, 2, 4, 5);
  const double mu = b.convexity_modulus();
  EXPECT_NEAR(mu, std::log(2.0), 1e-15);
  for (int t = 0; t < 1000; ++t) {
    const auto x = uniform_in_ball(rng, 3, 10.0);
    const auto z = uniform_in_ball(rng, 3, 10.0);
    const auto gx = block_grad(b, x);
    const auto gz = block_grad(b, z);
    double inner = 0.0, dist2 = 0.0;
    for (int i = 0; i < 3; ++i) {
      inner += (gx[i] - gz[i]) * (x[i] - z[i]);
      dist2 += (x[i] - z[i]) * (x[i] - z[i]);
    }
    EXPECT_GE(inner, mu * dist2 * (1.0 - 1e-12));
  }
  const std::vector<double> x{0.3, 0.2, -0.1};
  const auto g = block_grad(b, x);
  double same = 0.0;
  for (int i = 0; i < 3; ++i) same += (g[i] - g[i]) * (x[i] - x[i]);
  EXPECT_EQ(same, 0.0);
}

TEST(BlockGrad, JacobianIsSymmetricPositiveDefinite) {
  Rng rng(6);
  const ConvexBlock b = seeded_block(3, 3, 3, 6);
  const VectorField f = [&](std::span<const double> x) { return block_grad(b, x); };
  const auto report = certify_field(f, 3, 100, 6);
  EXPECT_LT(report.max_asymmetry, 1e-6);
  EXPECT_GT(report.min_eigenvalue, 0.0);
}

TEST(ChainApply, EmptyChainIsIdentity) {
  const GradientChain chain(3);
  const std::vector<double> x{1.0, -2.0, 3.5};
  EXPECT_EQ(chain_apply(chain, x), x);
}

TEST(ChainApply, SingleBlockEqualsBlockGrad) {
  GradientChain chain(2);
  chain.push_back(seeded_block(2, 2, 4, 7));
  const std::vector<double> x{0.4, -0.9};
  EXPECT_EQ(chain_apply(chain, x), block_grad(chain[0], x));
}

TEST(ChainApply, AppliesLastBlockFirst) {
  GradientChain chain(2);
  chain.push_back(seeded_block(2, 2, 4, 0));
  chain.push_back(seeded_block(2, 2, 4, 1));
  const std::vector<double> x{1.0, -1.0};
  const auto inner = block_grad(chain[1], x);
  const auto expected = block_grad(chain[0], inner);
  EXPECT_EQ(chain_apply(chain, x), expected);
  EXPECT_NE(chain_apply(chain, x), block_grad(chain[1], block_grad(chain[0], x)));
}

TEST(ChainApply, RejectsDimensionMismatch) {
  GradientChain chain(2);
  EXPECT_THROW(chain.push_back(seeded_block(3, 2, 2, 0)), std::invalid_argument);
  EXPECT_THROW(chain_apply(chain, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(ChainApply, StrictlyMonotoneForOneBlock) {
  GradientChain chain(3);
  chain.push_back(seeded_block(3, 2, 4, 8));
  const VectorField f = [&](std::span<const double> x) { return chain_apply(chain, x); };
  const auto r = check_monotone(f, 3, 1000, 8);
  EXPECT_TRUE(r.strictly_monotone());
}

TEST(ChainApply, OneBlockIsConservative) {
  GradientChain chain(3);
  chain.push_back(seeded_block(3, 2, 4, 9));
  const VectorField f = [&](std::span<const double> x) { return chain_apply(chain, x); };
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const auto a = uniform_in_ball(rng, 3, 5.0);
    const auto b = uniform_in_ball(rng, 3, 5.0);
    const auto m = uniform_in_ball(rng, 3, 5.0);
    const double direct = potential(f, b, a);
    const std::vector<std::vector<double>> path{a, m, b};
    const double bent = path_potential(f, path, 64);
    EXPECT_LT(rel_err(direct, bent, 1e-6), 1e-6);
  }
}

// Two or more blocks: a composition of gradient maps is not itself a
// gradient, so the Jacobian of the chain is not symmetric in general.
TEST(ChainApply, TwoBlockJacobianIsNotSymmetric) {
  GradientChain chain(3);
  chain.push_back(seeded_block(3, 2, 4, 10));
  chain.push_back(seeded_block(3, 2, 4, 11));
  const VectorField f = [&](std::span<const double> x) { return chain_apply(chain, x); };
  const auto r = certify_field(f, 3, 100, 10);
  EXPECT_GT(r.max_asymmetry, 1e-3);
}
