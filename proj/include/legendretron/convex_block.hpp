#pragma once

// Strongly convex scalar blocks g : R^d -> R and the map built from their
// gradients.
//
// Each block is a fully input convex network with softplus activations:
//
//   z_1 = L+_1 x + c_1
//   z_k = L_k x + L+_k s(z_{k-1}) + c_k          k = 2 .. M+1
//   g(x) = s(w0) s(z_{M+1}) + s(w1) |x|^2 / 2
//
// where s is softplus, L+ have positive entries and z_{M+1} is scalar. The
// positive matrices are stored unconstrained and passed through softplus at
// use. The quadratic term makes g strongly convex with modulus s(w1), so its
// gradient is an invertible, strongly monotone map.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "legendretron/autodiff.hpp"
#include "legendretron/random.hpp"

namespace legendretron {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Dimensions of one block: input dimension d, hidden width H, depth M.
struct BlockShape {
  int input_dim = 1;
  int hidden = 2;
  int depth = 4;

  void validate() const {
    if (input_dim < 1 || hidden < 1 || depth < 1) {
      throw std::invalid_argument("BlockShape: dimensions must be positive");
    }
  }

  // Layers are indexed 0 .. depth; layer `depth` is the scalar output.
  int rows(int layer) const { return layer == depth ? 1 : hidden; }
  int free_cols(int layer) const { return layer == 0 ? 0 : input_dim; }
  int pos_cols(int layer) const { return layer == 0 ? input_dim : hidden; }

  std::size_t layer_size(int layer) const {
    return static_cast<std::size_t>(rows(layer)) *
           static_cast<std::size_t>(free_cols(layer) + pos_cols(layer) + 1);
  }

  /// Offset of layer `layer` in the flat parameter vector. Within a layer
  /// the order is: free weights (row-major), raw positive weights
  /// (row-major), bias.
  std::size_t layer_offset(int layer) const {
    std::size_t off = 0;
    for (int k = 0; k < layer; ++k) off += layer_size(k);
    return off;
  }

  std::size_t raw_w0_index() const { return layer_offset(depth + 1); }
  std::size_t raw_w1_index() const { return raw_w0_index() + 1; }
  std::size_t param_count() const { return raw_w1_index() + 1; }

  friend bool operator==(const BlockShape&, const BlockShape&) = default;
};

/// Block weights with positivity already applied, over scalar type T
/// (double, or ad::Var while recording).
template <class T>
struct BlockWeights {
  BlockShape shape;
  std::vector<T> values;  // same layout as the raw parameters
  T h_scale{};            // s(w0)
  T quad_scale{};         // s(w1)

  std::span<const T> free_row(int layer, int row) const {
    const auto cols = static_cast<std::size_t>(shape.free_cols(layer));
    return std::span<const T>(values).subspan(shape.layer_offset(layer) + row * cols, cols);
  }
  std::span<const T> pos_row(int layer, int row) const {
    const auto cols = static_cast<std::size_t>(shape.pos_cols(layer));
    const std::size_t base = shape.layer_offset(layer) +
                             static_cast<std::size_t>(shape.rows(layer) * shape.free_cols(layer));
    return std::span<const T>(values).subspan(base + row * cols, cols);
  }
  const T& bias(int layer, int row) const {
    const std::size_t base =
        shape.layer_offset(layer) +
        static_cast<std::size_t>(shape.rows(layer) * (shape.free_cols(layer) + shape.pos_cols(layer)));
    return values[base + row];
  }
};

namespace detail {

inline double positive(double raw) { return softplus(raw); }
inline ad::Var positive(ad::Var raw) { return ad::softplus(raw); }

// bias + <free, x> + <pos, a>
inline double unit(double bias, std::span<const double> free, std::span<const double> x,
                   std::span<const double> pos, std::span<const double> a) {
  double z = bias;
  for (std::size_t i = 0; i < free.size(); ++i) z += free[i] * x[i];
  for (std::size_t i = 0; i < pos.size(); ++i) z += pos[i] * a[i];
  return z;
}

inline ad::Var unit(ad::Var bias, std::span<const ad::Var> free, std::span<const ad::Var> x,
                    std::span<const ad::Var> pos, std::span<const ad::Var> a) {
  ad::Tape& tape = *bias.tape();
  std::vector<ad::Var> lhs;
  std::vector<ad::Var> rhs;
  lhs.reserve(free.size() + pos.size() + 1);
  rhs.reserve(free.size() + pos.size() + 1);
  lhs.insert(lhs.end(), free.begin(), free.end());
  rhs.insert(rhs.end(), x.begin(), x.begin() + static_cast<std::ptrdiff_t>(free.size()));
  lhs.insert(lhs.end(), pos.begin(), pos.end());
  rhs.insert(rhs.end(), a.begin(), a.end());
  const ad::Var linear = tape.dot(lhs, rhs);
  return tape.affine(0.0, {1.0, 1.0}, {linear, bias});
}

inline double output(double h_scale, double h, double quad_scale, std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return h_scale * h + quad_scale * 0.5 * sq;
}

inline ad::Var output(ad::Var h_scale, ad::Var h, ad::Var quad_scale, std::span<const ad::Var> x) {
  ad::Tape& tape = *h.tape();
  const ad::Var half_sq = tape.affine(0.0, {0.5}, {tape.dot(x, x)});
  const ad::Var a[2] = {h_scale, quad_scale};
  const ad::Var b[2] = {h, half_sq};
  return tape.dot(a, b);
}

}  // namespace detail

/// Applies the positivity reparameterization to raw block parameters.
template <class T>
BlockWeights<T> effective_weights(const BlockShape& shape, std::span<const T> raw) {
  if (raw.size() != shape.param_count()) {
    throw std::invalid_argument("effective_weights: parameter count mismatch");
  }
  BlockWeights<T> w{shape, std::vector<T>(raw.begin(), raw.end()), T{}, T{}};
  for (int k = 0; k <= shape.depth; ++k) {
    const std::size_t base = shape.layer_offset(k) +
                             static_cast<std::size_t>(shape.rows(k) * shape.free_cols(k));
    const std::size_t count = static_cast<std::size_t>(shape.rows(k) * shape.pos_cols(k));
    for (std::size_t i = 0; i < count; ++i) w.values[base + i] = detail::positive(raw[base + i]);
  }
  w.h_scale = detail::positive(raw[shape.raw_w0_index()]);
  w.quad_scale = detail::positive(raw[shape.raw_w1_index()]);
  return w;
}

/// g(x) for effective weights `w`.
template <class T>
T block_value(const BlockWeights<T>& w, std::span<const T> x) {
  const BlockShape& shape = w.shape;
  if (x.size() != static_cast<std::size_t>(shape.input_dim)) {
    throw std::invalid_argument("block_value: input dimension mismatch");
  }
  std::vector<T> act;
  for (int k = 0; k <= shape.depth; ++k) {
    std::vector<T> next;
    next.reserve(static_cast<std::size_t>(shape.rows(k)));
    const std::span<const T> pos_input = k == 0 ? x : std::span<const T>(act);
    for (int j = 0; j < shape.rows(k); ++j) {
      const T z = detail::unit(w.bias(k, j), w.free_row(k, j), x, w.pos_row(k, j), pos_input);
      next.push_back(detail::positive(z));
    }
    act = std::move(next);
  }
  return detail::output(w.h_scale, act.front(), w.quad_scale, x);
}

/// Recorded gradient of the block at `x`; differentiable again.
inline std::vector<ad::Var> block_gradient(const BlockWeights<ad::Var>& w,
                                           std::span<const ad::Var> x) {
  const ad::Var g = block_value(w, x);
  return g.tape()->gradient(g, x);
}

/// Records the weights of a numeric block as constants on `tape`.
inline BlockWeights<ad::Var> as_constants(ad::Tape& tape, const BlockWeights<double>& w) {
  BlockWeights<ad::Var> out{w.shape, {}, tape.constant(w.h_scale), tape.constant(w.quad_scale)};
  out.values.reserve(w.values.size());
  for (double v : w.values) out.values.push_back(tape.constant(v));
  return out;
}

/// One strongly convex block with its raw (unconstrained) parameters.
class ConvexBlock {
 public:
  ConvexBlock(BlockShape shape, std::vector<double> params)
      : shape_(shape), params_(std::move(params)) {
    shape_.validate();
    if (params_.size() != shape_.param_count()) {
      throw std::invalid_argument("ConvexBlock: parameter count mismatch");
    }
    for (double v : params_) {
      if (!std::isfinite(v)) throw std::invalid_argument("ConvexBlock: non-finite parameter");
    }
    weights_ = effective_weights<double>(shape_, params_);
  }

  /// Entries of every weight matrix uniform in [-a, a] with a = 1/sqrt(fan_in);
  /// biases use the fan-in of the whole unit; raw_w0 = raw_w1 = 0.
  static ConvexBlock initialize(const BlockShape& shape, Rng& rng) {
    shape.validate();
    std::vector<double> p(shape.param_count(), 0.0);
    std::size_t i = 0;
    for (int k = 0; k <= shape.depth; ++k) {
      const int rows = shape.rows(k);
      const double a_free = shape.free_cols(k) > 0 ? 1.0 / std::sqrt(shape.free_cols(k)) : 0.0;
      const double a_pos = 1.0 / std::sqrt(shape.pos_cols(k));
      const double a_bias = 1.0 / std::sqrt(shape.free_cols(k) + shape.pos_cols(k));
      for (int n = 0; n < rows * shape.free_cols(k); ++n) p[i++] = uniform(rng, -a_free, a_free);
      for (int n = 0; n < rows * shape.pos_cols(k); ++n) p[i++] = uniform(rng, -a_pos, a_pos);
      for (int n = 0; n < rows; ++n) p[i++] = uniform(rng, -a_bias, a_bias);
    }
    return ConvexBlock(shape, std::move(p));
  }

  const BlockShape& shape() const { return shape_; }
  std::span<const double> params() const { return params_; }
  const BlockWeights<double>& weights() const { return weights_; }

  double raw_w0() const { return params_[shape_.raw_w0_index()]; }
  double raw_w1() const { return params_[shape_.raw_w1_index()]; }
  /// Strong-convexity modulus s(w1).
  double convexity_modulus() const { return weights_.quad_scale; }

  void set_param(std::size_t index, double value) {
    if (index >= params_.size() || !std::isfinite(value)) {
      throw std::invalid_argument("ConvexBlock::set_param: bad index or value");
    }
    params_[index] = value;
    weights_ = effective_weights<double>(shape_, params_);
  }

  friend bool operator==(const ConvexBlock& a, const ConvexBlock& b) {
    return a.shape_ == b.shape_ && a.params_ == b.params_;
  }

 private:
  BlockShape shape_;
  std::vector<double> params_;
  BlockWeights<double> weights_;
};

inline double block_eval(const ConvexBlock& block, std::span<const double> x) {
  return block_value<double>(block.weights(), x);
}

/// Gradient of the block at `x`, by reverse accumulation on a scratch tape.
inline std::vector<double> block_grad(const ConvexBlock& block, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(block.shape().input_dim)) {
    throw std::invalid_argument("block_grad: input dimension mismatch");
  }
  ad::Tape tape;
  const BlockWeights<ad::Var> w = as_constants(tape, block.weights());
  std::vector<ad::Var> v;
  v.reserve(x.size());
  for (double c : x) v.push_back(tape.leaf(c));
  return tape.gradient_values(block_value(w, std::span<const ad::Var>(v)), v).values;
}

/// The map grad g_1 o grad g_2 o ... o grad g_B. Block B is applied first.
/// An empty chain is the identity.
class GradientChain {
 public:
  explicit GradientChain(int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("GradientChain: dimension must be positive");
  }
  GradientChain(int dim, std::vector<ConvexBlock> blocks) : GradientChain(dim) {
    for (auto& b : blocks) push_back(std::move(b));
  }

  void push_back(ConvexBlock block) {
    if (block.shape().input_dim != dim_) {
      throw std::invalid_argument("GradientChain: block input dimension mismatch");
    }
    blocks_.push_back(std::move(block));
  }

  int dim() const { return dim_; }
  std::size_t size() const { return blocks_.size(); }
  bool empty() const { return blocks_.empty(); }
  const ConvexBlock& operator[](std::size_t i) const { return blocks_[i]; }
  ConvexBlock& operator[](std::size_t i) { return blocks_[i]; }
  const std::vector<ConvexBlock>& blocks() const { return blocks_; }

  friend bool operator==(const GradientChain&, const GradientChain&) = default;

 private:
  int dim_;
  std::vector<ConvexBlock> blocks_;
};

inline std::vector<double> chain_apply(const GradientChain& chain, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(chain.dim())) {
    throw std::invalid_argument("chain_apply: input dimension mismatch");
  }
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t i = chain.size(); i-- > 0;) y = block_grad(chain[i], y);
  return y;
}

/// Recorded version of chain_apply over weights already on the tape.
inline std::vector<ad::Var> chain_apply(std::span<const BlockWeights<ad::Var>> blocks,
                                        std::span<const ad::Var> x) {
  std::vector<ad::Var> y(x.begin(), x.end());
  for (std::size_t i = blocks.size(); i-- > 0;) y = block_gradient(blocks[i], y);
  return y;
}

}  // namespace legendretron
