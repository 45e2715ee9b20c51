#pragma once

// The link model: logits z = W x + b, the learned map v^{-1} = grad g_1 o
// ... o grad g_B, and the fixed squashing u = softmax+, so that class
// probabilities are (u o v^{-1})(z) followed by appending the last class.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "legendretron/autodiff.hpp"
#include "legendretron/convex_block.hpp"
#include "legendretron/data.hpp"
#include "legendretron/losses.hpp"
#include "legendretron/random.hpp"
#include "legendretron/simplex.hpp"

namespace legendretron {

struct ModelShape {
  int classes = 2;
  int features = 1;
  int blocks = 0;
  int hidden = 2;
  int layers = 4;

  void validate() const {
    if (classes < 2) throw std::invalid_argument("ModelShape: need at least two classes");
    if (features < 1) throw std::invalid_argument("ModelShape: need at least one feature");
    if (blocks < 0 || hidden < 1 || layers < 1) {
      throw std::invalid_argument("ModelShape: invalid block configuration");
    }
  }

  int logit_dim() const { return classes - 1; }
  BlockShape block_shape() const { return BlockShape{classes - 1, hidden, layers}; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(classes - 1) * static_cast<std::size_t>(features);
  }
  std::size_t bias_offset() const { return weight_count(); }
  std::size_t block_offset(int block) const {
    return weight_count() + static_cast<std::size_t>(classes - 1) +
           static_cast<std::size_t>(block) * block_shape().param_count();
  }
  std::size_t param_count() const { return block_offset(blocks); }

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

class LinkModel {
 public:
  LinkModel(ModelShape shape, std::vector<double> weights, std::vector<double> bias,
            GradientChain chain, std::vector<double> label_map = {})
      : shape_(shape),
        weights_(std::move(weights)),
        bias_(std::move(bias)),
        chain_(std::move(chain)),
        label_map_(std::move(label_map)) {
    shape_.validate();
    if (weights_.size() != shape_.weight_count() ||
        bias_.size() != static_cast<std::size_t>(shape_.logit_dim()) ||
        chain_.dim() != shape_.logit_dim() || chain_.size() != static_cast<std::size_t>(shape_.blocks)) {
      throw std::invalid_argument("LinkModel: parameter dimensions do not match the shape");
    }
    for (const auto& b : chain_.blocks()) {
      if (!(b.shape() == shape_.block_shape())) {
        throw std::invalid_argument("LinkModel: block shape does not match the model shape");
      }
    }
    if (!label_map_.empty() && label_map_.size() != static_cast<std::size_t>(shape_.classes)) {
      throw std::invalid_argument("LinkModel: label map size differs from class count");
    }
    for (double v : weights_) {
      if (!std::isfinite(v)) throw std::invalid_argument("LinkModel: non-finite weight");
    }
    for (double v : bias_) {
      if (!std::isfinite(v)) throw std::invalid_argument("LinkModel: non-finite bias");
    }
  }

  /// W = 0, b = 0 and freshly initialized blocks drawn from `seed`.
  static LinkModel initialize(const ModelShape& shape, std::uint64_t seed,
                              std::vector<double> label_map = {}) {
    shape.validate();
    Rng rng(derive_seed(seed, 0xb10cu));
    GradientChain chain(shape.logit_dim());
    for (int i = 0; i < shape.blocks; ++i) chain.push_back(ConvexBlock::initialize(shape.block_shape(), rng));
    return LinkModel(shape, std::vector<double>(shape.weight_count(), 0.0),
                     std::vector<double>(static_cast<std::size_t>(shape.logit_dim()), 0.0),
                     std::move(chain), std::move(label_map));
  }

  /// Parameters in the order W (row-major), b, block 1, ..., block B.
  std::vector<double> flatten() const {
    std::vector<double> theta;
    theta.reserve(shape_.param_count());
    theta.insert(theta.end(), weights_.begin(), weights_.end());
    theta.insert(theta.end(), bias_.begin(), bias_.end());
    for (const auto& b : chain_.blocks()) theta.insert(theta.end(), b.params().begin(), b.params().end());
    return theta;
  }

  static LinkModel from_flat(const ModelShape& shape, std::span<const double> theta,
                             std::vector<double> label_map = {}) {
    shape.validate();
    if (theta.size() != shape.param_count()) {
      throw std::invalid_argument("LinkModel::from_flat: parameter count mismatch");
    }
    GradientChain chain(shape.logit_dim());
    const std::size_t block_size = shape.block_shape().param_count();
    for (int i = 0; i < shape.blocks; ++i) {
      const auto part = theta.subspan(shape.block_offset(i), block_size);
      chain.push_back(ConvexBlock(shape.block_shape(), std::vector<double>(part.begin(), part.end())));
    }
    const auto w = theta.first(shape.weight_count());
    const auto b = theta.subspan(shape.bias_offset(), static_cast<std::size_t>(shape.logit_dim()));
    return LinkModel(shape, std::vector<double>(w.begin(), w.end()),
                     std::vector<double>(b.begin(), b.end()), std::move(chain), std::move(label_map));
  }

  const ModelShape& shape() const { return shape_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> bias() const { return bias_; }
  const GradientChain& chain() const { return chain_; }
  GradientChain& chain() { return chain_; }
  const std::vector<double>& label_map() const { return label_map_; }

  /// z = W x + b.
  std::vector<double> logits(const SparseRow& x) const {
    const auto p = static_cast<std::size_t>(shape_.features);
    std::vector<double> z(bias_);
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const std::size_t j = x.indices[k] - 1;
      if (j >= p) throw std::invalid_argument("LinkModel: feature index beyond model dimension");
      for (std::size_t r = 0; r < z.size(); ++r) z[r] += weights_[r * p + j] * x.values[k];
    }
    return z;
  }

  /// u o v^{-1}: the inverse canonical link on logit space.
  ProjectedSimplexPoint link(std::span<const double> z) const {
    return softmax_plus(chain_apply(chain_, z));
  }

  /// log class probabilities (length C) for one input.
  std::vector<double> log_probs(const SparseRow& x) const {
    return stable_log_probs(chain_apply(chain_, logits(x)));
  }

  friend bool operator==(const LinkModel&, const LinkModel&) = default;

 private:
  ModelShape shape_;
  std::vector<double> weights_;
  std::vector<double> bias_;
  GradientChain chain_;
  std::vector<double> label_map_;
};

inline SimplexPoint predict_probs(const LinkModel& model, const SparseRow& x) {
  return unproject(model.link(model.logits(x)));
}

/// 1-based index of the largest entry; ties go to the smallest index.
inline int argmax_class(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax_class: empty scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return static_cast<int>(best) + 1;
}

/// Most probable class (1-based). Ranked on log-probabilities, which order
/// classes exactly as the probabilities do but do not underflow.
inline int predict_class(const LinkModel& model, const SparseRow& x) {
  return argmax_class(model.log_probs(x));
}

/// One example's forward pass recorded on a tape. Only parameters the
/// example touches become leaves: the W columns of its nonzero features, b,
/// and every block parameter. `param_ids[k]` is the flat-parameter index of
/// `params[k]`.
struct RecordedForward {
  std::vector<std::size_t> param_ids;
  std::vector<ad::Var> params;
  std::vector<ad::Var> link_logits;  // v^{-1}(W x + b)
};

inline RecordedForward record_forward(ad::Tape& tape, const ModelShape& shape,
                                      std::span<const double> theta, const SparseRow& x) {
  if (theta.size() != shape.param_count()) {
    throw std::invalid_argument("record_forward: parameter count mismatch");
  }
  const auto p = static_cast<std::size_t>(shape.features);
  const auto dim = static_cast<std::size_t>(shape.logit_dim());
  RecordedForward rec;

  std::vector<BlockWeights<ad::Var>> blocks;
  const std::size_t block_size = shape.block_shape().param_count();
  for (int i = 0; i < shape.blocks; ++i) {
    const std::size_t first = rec.params.size();
    for (std::size_t k = 0; k < block_size; ++k) {
      rec.param_ids.push_back(shape.block_offset(i) + k);
      rec.params.push_back(tape.leaf(theta[shape.block_offset(i) + k]));
    }
    const auto raw = std::span<const ad::Var>(rec.params).subspan(first, block_size);
    blocks.push_back(effective_weights<ad::Var>(shape.block_shape(), raw));
  }

  std::vector<ad::Var> z;
  z.reserve(dim);
  std::vector<ad::Var> args;
  std::vector<double> coefs;
  for (std::size_t r = 0; r < dim; ++r) {
    args.clear();
    coefs.clear();
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const std::size_t j = x.indices[k] - 1;
      if (j >= p) throw std::invalid_argument("record_forward: feature index beyond model dimension");
      const std::size_t id = r * p + j;
      rec.param_ids.push_back(id);
      rec.params.push_back(tape.leaf(theta[id]));
      args.push_back(rec.params.back());
      coefs.push_back(x.values[k]);
    }
    rec.param_ids.push_back(shape.bias_offset() + r);
    rec.params.push_back(tape.leaf(theta[shape.bias_offset() + r]));
    args.push_back(rec.params.back());
    coefs.push_back(1.0);
    z.push_back(tape.affine(0.0, coefs, args));
  }
  rec.link_logits = chain_apply(std::span<const BlockWeights<ad::Var>>(blocks), z);
  return rec;
}

/// Problems reading a model file.
class ModelFileError : public std::runtime_error {
 public:
  enum class Kind { kIo, kVersion, kCorrupt, kDimension };

  ModelFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatName = "legendretron-model";

inline nlohmann::json model_to_json(const LinkModel& model) {
  nlohmann::json j;
  const ModelShape& s = model.shape();
  j["format"] = kModelFormatName;
  j["version"] = kModelFormatVersion;
  j["classes"] = s.classes;
  j["features"] = s.features;
  j["blocks"] = s.blocks;
  j["hidden"] = s.hidden;
  j["layers"] = s.layers;
  j["label_map"] = model.label_map();
  j["W"] = std::vector<double>(model.weights().begin(), model.weights().end());
  j["b"] = std::vector<double>(model.bias().begin(), model.bias().end());
  j["chain"] = nlohmann::json::array();
  for (const auto& block : model.chain().blocks()) {
    j["chain"].push_back({{"params", std::vector<double>(block.params().begin(), block.params().end())}});
  }
  return j;
}

inline LinkModel model_from_json(const nlohmann::json& j) {
  using Kind = ModelFileError::Kind;
  try {
    if (!j.is_object() || j.value("format", std::string()) != kModelFormatName) {
      throw ModelFileError(Kind::kCorrupt, "model file: not a legendretron model");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw ModelFileError(Kind::kVersion, "model file: unsupported format version " +
                                               std::to_string(j.at("version").get<int>()));
    }
    ModelShape shape{j.at("classes").get<int>(), j.at("features").get<int>(), j.at("blocks").get<int>(),
                     j.at("hidden").get<int>(), j.at("layers").get<int>()};
    try {
      shape.validate();
    } catch (const std::invalid_argument& e) {
      throw ModelFileError(Kind::kDimension, std::string("model file: ") + e.what());
    }
    auto weights = j.at("W").get<std::vector<double>>();
    auto bias = j.at("b").get<std::vector<double>>();
    auto label_map = j.at("label_map").get<std::vector<double>>();
    const auto& chain_json = j.at("chain");
    if (weights.size() != shape.weight_count() || bias.size() != static_cast<std::size_t>(shape.logit_dim()) ||
        !chain_json.is_array() || chain_json.size() != static_cast<std::size_t>(shape.blocks) ||
        (!label_map.empty() && label_map.size() != static_cast<std::size_t>(shape.classes))) {
      throw ModelFileError(Kind::kDimension, "model file: array sizes disagree with declared dimensions");
    }
    GradientChain chain(shape.logit_dim());
    for (const auto& b : chain_json) {
      auto params = b.at("params").get<std::vector<double>>();
      if (params.size() != shape.block_shape().param_count()) {
        throw ModelFileError(Kind::kDimension, "model file: block parameter count disagrees with shape");
      }
      chain.push_back(ConvexBlock(shape.block_shape(), std::move(params)));
    }
    return LinkModel(shape, std::move(weights), std::move(bias), std::move(chain), std::move(label_map));
  } catch (const nlohmann::json::exception& e) {
    throw ModelFileError(Kind::kCorrupt, std::string("model file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ModelFileError(Kind::kCorrupt, std::string("model file: ") + e.what());
  }
}

/// Writes the model as JSON. `extra` entries (e.g. a run manifest) are
/// stored alongside the parameters.
inline void save_model(const LinkModel& model, const std::string& path,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = model_to_json(model);
  for (const auto& [key, value] : extra.items()) j[key] = value;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelFileError(ModelFileError::Kind::kIo, "cannot write model file " + path);
  out << j.dump(1) << '\n';
  if (!out) throw ModelFileError(ModelFileError::Kind::kIo, "failed writing model file " + path);
}

inline LinkModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFileError(ModelFileError::Kind::kIo, "cannot read model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFileError(ModelFileError::Kind::kCorrupt, std::string("model file: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace legendretron
