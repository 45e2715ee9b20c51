#pragma once

// Minibatch Adam training of the link model on the categorical negative
// log-likelihood, with a step learning-rate schedule, plus evaluation
// metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "legendretron/autodiff.hpp"
#include "legendretron/data.hpp"
#include "legendretron/losses.hpp"
#include "legendretron/model.hpp"
#include "legendretron/random.hpp"

namespace legendretron {

struct TrainConfig {
  int epochs = 240;
  int batch_size = 64;
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  double lr_decay = 0.95;  // multiplicative factor gamma
  int decay_step = 4;      // epochs between decays
  int blocks = 2;
  int hidden = 2;
  int layers = 4;
  std::uint64_t seed = 0;

  /// Small and mid-sized datasets: B=2, H=2, M=4, lr 0.01, gamma 0.95
  /// every 4 epochs, 240 epochs, batch 64.
  static TrainConfig standard() { return TrainConfig{}; }

  /// Image-scale datasets: B=1, H=4, M=4, lr 0.001, gamma 0.7 every 4
  /// epochs, 200 epochs, batch 128.
  static TrainConfig image_scale() {
    TrainConfig c;
    c.blocks = 1;
    c.hidden = 4;
    c.layers = 4;
    c.learning_rate = 0.001;
    c.lr_decay = 0.7;
    c.decay_step = 4;
    c.epochs = 200;
    c.batch_size = 128;
    return c;
  }

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("TrainConfig: learning rate must be positive");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
      throw std::invalid_argument("TrainConfig: weight decay must be non-negative");
    }
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
      throw std::invalid_argument("TrainConfig: lr decay must lie in (0, 1]");
    }
    if (decay_step < 1) throw std::invalid_argument("TrainConfig: decay step must be positive");
    if (blocks < 0 || hidden < 1 || layers < 1) {
      throw std::invalid_argument("TrainConfig: invalid block configuration");
    }
  }
};

/// alpha * gamma^floor(epoch / S) for a 0-based epoch.
inline double learning_rate_at(const TrainConfig& cfg, int epoch) {
  return cfg.learning_rate * std::pow(cfg.lr_decay, epoch / cfg.decay_step);
}

struct Metrics {
  double accuracy = 0.0;
  double mean_nll = 0.0;
  std::optional<double> auc;      // two-class problems only
  std::vector<double> epoch_nll;  // mean training NLL per epoch
  std::size_t examples = 0;
};

/// Adam with bias correction; coupled weight decay is applied by the caller.
class Adam {
 public:
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<double> theta, std::span<const double> grad, double lr) {
    if (theta.size() != m_.size() || grad.size() != m_.size()) {
      throw std::invalid_argument("Adam::step: size mismatch");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      theta[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
};

/// Mean NLL over a batch and its gradient with respect to every model
/// parameter. `gradient.reached[i]` is false for parameters no example in
/// the batch depends on.
struct BatchGradient {
  double loss = 0.0;
  ad::ParamGradient gradient;
};

inline BatchGradient batch_loss_gradient(const ModelShape& shape, std::span<const double> theta,
                                         const LabeledDataset& data,
                                         std::span<const std::size_t> batch, ad::Tape& tape) {
  if (batch.empty()) throw std::invalid_argument("batch_loss_gradient: empty batch");
  BatchGradient out;
  out.gradient.values.assign(theta.size(), 0.0);
  out.gradient.reached.assign(theta.size(), false);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    tape.clear();
    const RecordedForward rec = record_forward(tape, shape, theta, data.row(i));
    const ad::Var loss = nll(rec.link_logits, data.label(i));
    const ad::ParamGradient g = ad::grad_params(tape, loss, rec.params);
    out.loss += scale * loss.value();
    for (std::size_t k = 0; k < rec.params.size(); ++k) {
      if (!g.reached[k]) continue;
      out.gradient.values[rec.param_ids[k]] += scale * g.values[k];
      out.gradient.reached[rec.param_ids[k]] = true;
    }
  }
  return out;
}

/// Raised when the loss or its gradient becomes non-finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(int epoch, std::size_t batch, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                           ": " + what),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  int epoch_;
  std::size_t batch_;
};

/// Mann-Whitney estimate of P(score of a positive > score of a negative),
/// ties counted as one half. nullopt when either class is absent.
inline std::optional<double> rank_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

/// Accuracy, mean NLL and (for C = 2) AUC of class 2 against class 1.
inline Metrics evaluate(const LinkModel& model, const LabeledDataset& data) {
  const int classes = model.shape().classes;
  Metrics m;
  m.examples = data.size();
  std::size_t correct = 0;
  double nll_sum = 0.0;
  std::vector<double> scores;
  std::vector<std::uint8_t> positive;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = data.label(i);
    if (y < 1 || y > classes) throw std::invalid_argument("evaluate: label outside the model's classes");
    const auto lp = model.log_probs(data.row(i));
    if (argmax_class(lp) == y) ++correct;
    nll_sum -= lp[static_cast<std::size_t>(y - 1)];
    if (classes == 2) {
      scores.push_back(lp[1]);
      positive.push_back(y == 2 ? 1 : 0);
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  m.mean_nll = nll_sum / static_cast<double>(data.size());
  if (classes == 2) {
    m.auc = rank_auc(scores, positive);
  }
  return m;
}

struct TrainResult {
  LinkModel model;
  Metrics metrics;  // on the training data, with the per-epoch trace
};

/// Model shape for a dataset under a config.
inline ModelShape shape_for(const LabeledDataset& data, const TrainConfig& cfg) {
  return ModelShape{data.n_classes(), data.n_features(), cfg.blocks, cfg.hidden, cfg.layers};
}

/// Jointly learns W, b and the blocks of v^{-1} by minibatch Adam on the
/// mean NLL. Each epoch is a full pass over a fresh seeded permutation; the
/// last short batch is kept.
inline TrainResult train_legendretron(const LabeledDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.n_classes() < 2) throw std::invalid_argument("train: need at least two classes");
  const ModelShape shape = shape_for(data, cfg);
  const LinkModel initial = LinkModel::initialize(shape, cfg.seed, data.label_map());
  std::vector<double> theta = initial.flatten();
  Adam adam(theta.size());
  Rng order_rng(derive_seed(cfg.seed, 0x0dde5u));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  ad::Tape tape;
  std::vector<double> epoch_nll;
  epoch_nll.reserve(static_cast<std::size_t>(cfg.epochs));
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    shuffle(order, order_rng);
    double total = 0.0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      const std::size_t stop = std::min(order.size(), start + batch);
      const std::span<const std::size_t> ids(order.data() + start, stop - start);
      BatchGradient bg = batch_loss_gradient(shape, theta, data, ids, tape);
      if (!std::isfinite(bg.loss)) throw TrainingError(epoch, b, "non-finite loss");
      auto& grad = bg.gradient.values;
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) throw TrainingError(epoch, b, "non-finite gradient");
        if (cfg.weight_decay > 0.0) grad[i] += cfg.weight_decay * theta[i];
      }
      adam.step(theta, grad, lr);
      total += bg.loss * static_cast<double>(ids.size());
    }
    epoch_nll.push_back(total / static_cast<double>(order.size()));
  }

  for (double v : theta) {
    if (!std::isfinite(v)) throw TrainingError(cfg.epochs, 0, "non-finite parameter");
  }
  TrainResult result{LinkModel::from_flat(shape, theta, data.label_map()), {}};
  result.metrics = evaluate(result.model, data);
  result.metrics.epoch_nll = std::move(epoch_nll);
  return result;
}

/// Multinomial logistic regression: the same loop with v^{-1} the identity.
inline TrainResult train_mlr(const LabeledDataset& data, const TrainConfig& cfg) {
  TrainConfig linear = cfg;
  linear.blocks = 0;
  return train_legendretron(data, linear);
}

}  // namespace legendretron
