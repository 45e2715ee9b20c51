#pragma once

// Labelled sparse datasets: LIBSVM text parsing and serialization, seeded
// train/test splits, symmetric label noise and projected-categorical
// sampling.
//
// Class labels are 1-based throughout (1 .. C). Feature indices are 1-based
// as in the LIBSVM format.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "legendretron/random.hpp"
#include "legendretron/simplex.hpp"

namespace legendretron {

/// Sparse feature vector; indices are 1-based and strictly increasing.
struct SparseRow {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t nnz() const { return indices.size(); }
  friend bool operator==(const SparseRow&, const SparseRow&) = default;
};

class LabeledDataset {
 public:
  /// `label_map[c-1]` is the raw label of class c; empty when the labels
  /// were never remapped.
  LabeledDataset(std::vector<SparseRow> rows, std::vector<int> labels, int n_features,
                 int n_classes, std::vector<double> label_map = {})
      : rows_(std::move(rows)),
        labels_(std::move(labels)),
        n_features_(n_features),
        n_classes_(n_classes),
        label_map_(std::move(label_map)) {
    if (rows_.empty()) throw std::invalid_argument("LabeledDataset: empty dataset");
    if (rows_.size() != labels_.size()) {
      throw std::invalid_argument("LabeledDataset: rows and labels differ in length");
    }
    if (n_features_ < 1 || n_classes_ < 1) {
      throw std::invalid_argument("LabeledDataset: dimensions must be positive");
    }
    if (!label_map_.empty() && label_map_.size() != static_cast<std::size_t>(n_classes_)) {
      throw std::invalid_argument("LabeledDataset: label map size differs from class count");
    }
    for (const auto& r : rows_) {
      if (r.indices.size() != r.values.size()) {
        throw std::invalid_argument("LabeledDataset: malformed sparse row");
      }
      for (std::size_t k = 0; k < r.indices.size(); ++k) {
        if (r.indices[k] < 1 || r.indices[k] > static_cast<std::uint32_t>(n_features_) ||
            (k > 0 && r.indices[k] <= r.indices[k - 1])) {
          throw std::invalid_argument("LabeledDataset: feature index out of order or range");
        }
      }
    }
    for (int y : labels_) {
      if (y < 1 || y > n_classes_) throw std::invalid_argument("LabeledDataset: label out of range");
    }
  }

  std::size_t size() const { return rows_.size(); }
  const std::vector<SparseRow>& rows() const { return rows_; }
  const SparseRow& row(std::size_t i) const { return rows_[i]; }
  const std::vector<int>& labels() const { return labels_; }
  int label(std::size_t i) const { return labels_[i]; }
  int n_features() const { return n_features_; }
  int n_classes() const { return n_classes_; }
  const std::vector<double>& label_map() const { return label_map_; }

  LabeledDataset subset(std::span<const std::size_t> ids) const {
    std::vector<SparseRow> rows;
    std::vector<int> labels;
    rows.reserve(ids.size());
    labels.reserve(ids.size());
    for (std::size_t i : ids) {
      rows.push_back(rows_.at(i));
      labels.push_back(labels_.at(i));
    }
    return LabeledDataset(std::move(rows), std::move(labels), n_features_, n_classes_, label_map_);
  }

  LabeledDataset with_labels(std::vector<int> labels) const {
    return LabeledDataset(rows_, std::move(labels), n_features_, n_classes_, label_map_);
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::vector<SparseRow> rows_;
  std::vector<int> labels_;
  int n_features_;
  int n_classes_;
  std::vector<double> label_map_;
};

/// Malformed LIBSVM input. Line and column are 1-based; line 0 refers to the
/// input as a whole.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                           ": " + what),
        line_(line),
        column_(column),
        reason_(what) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string reason_;
};

struct ParseOptions {
  /// Declared feature count; indices above it are rejected. Defaults to the
  /// largest index seen.
  std::optional<int> n_features;
  /// Fixed raw-label map (class c has raw label map[c-1]). When empty the
  /// map is built from the sorted distinct labels of the input.
  std::vector<double> label_map;
  /// Declared class count; must be at least the number of mapped classes.
  std::optional<int> n_classes;
};

namespace detail {

inline bool parse_real(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return false;
  const char* end = token.data() + token.size();
  const auto res = std::from_chars(token.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline LabeledDataset parse_libsvm(std::istream& in, const ParseOptions& options = {}) {
  std::vector<SparseRow> rows;
  std::vector<double> raw_labels;
  std::vector<std::pair<std::size_t, std::size_t>> label_pos;  // (line, column)
  std::uint32_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);

    std::vector<std::pair<std::size_t, std::string_view>> tokens;  // (column, text)
    const std::string_view view(line);
    std::size_t pos = 0;
    while (pos < view.size()) {
      while (pos < view.size() && (view[pos] == ' ' || view[pos] == '\t')) ++pos;
      if (pos >= view.size()) break;
      const std::size_t start = pos;
      while (pos < view.size() && view[pos] != ' ' && view[pos] != '\t') ++pos;
      tokens.emplace_back(start + 1, view.substr(start, pos - start));
    }
    if (tokens.empty()) continue;

    double label = 0.0;
    if (!detail::parse_real(tokens[0].second, label)) {
      throw ParseError(line_no, tokens[0].first, "malformed label '" + std::string(tokens[0].second) + "'");
    }

    SparseRow row;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto [column, tok] = tokens[t];
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(line_no, column, "expected index:value, got '" + std::string(tok) + "'");
      }
      const std::string_view idx_text = tok.substr(0, colon);
      const std::string_view val_text = tok.substr(colon + 1);
      std::uint64_t index = 0;
      const char* idx_end = idx_text.data() + idx_text.size();
      const auto res = std::from_chars(idx_text.data(), idx_end, index);
      if (idx_text.empty() || res.ec != std::errc() || res.ptr != idx_end) {
        throw ParseError(line_no, column, "malformed feature index '" + std::string(idx_text) + "'");
      }
      if (index == 0 || index > 0xffffffffULL) {
        throw ParseError(line_no, column, "feature index out of range");
      }
      double value = 0.0;
      if (!detail::parse_real(val_text, value)) {
        throw ParseError(line_no, column + colon + 1,
                         "malformed feature value '" + std::string(val_text) + "'");
      }
      if (!row.indices.empty() && index <= row.indices.back()) {
        throw ParseError(line_no, column, "feature indices must be strictly increasing");
      }
      if (options.n_features && index > static_cast<std::uint64_t>(*options.n_features)) {
        throw ParseError(line_no, column, "feature index exceeds declared feature count");
      }
      row.indices.push_back(static_cast<std::uint32_t>(index));
      row.values.push_back(value);
      max_index = std::max(max_index, static_cast<std::uint32_t>(index));
    }
    rows.push_back(std::move(row));
    raw_labels.push_back(label);
    label_pos.emplace_back(line_no, tokens[0].first);
  }

  if (rows.empty()) throw ParseError(0, 0, "empty input");

  std::vector<double> label_map = options.label_map;
  if (label_map.empty()) {
    label_map = raw_labels;
    std::sort(label_map.begin(), label_map.end());
    label_map.erase(std::unique(label_map.begin(), label_map.end()), label_map.end());
  }
  std::map<double, int> code;
  for (std::size_t c = 0; c < label_map.size(); ++c) code.emplace(label_map[c], static_cast<int>(c) + 1);

  std::vector<int> labels;
  labels.reserve(raw_labels.size());
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    const auto it = code.find(raw_labels[i]);
    if (it == code.end()) {
      throw ParseError(label_pos[i].first, label_pos[i].second,
                       "label " + detail::format_real(raw_labels[i]) + " not in label map");
    }
    labels.push_back(it->second);
  }

  int n_classes = static_cast<int>(label_map.size());
  if (options.n_classes) {
    if (*options.n_classes < n_classes) {
      throw ParseError(0, 0, "declared class count is smaller than the number of labels");
    }
    // Unseen classes get placeholder raw labels after the largest one.
    double next = label_map.empty() ? 1.0 : label_map.back() + 1.0;
    while (n_classes < *options.n_classes) {
      label_map.push_back(next);
      next += 1.0;
      ++n_classes;
    }
  }
  const int n_features = options.n_features ? *options.n_features : std::max<int>(1, static_cast<int>(max_index));
  return LabeledDataset(std::move(rows), std::move(labels), n_features, n_classes, std::move(label_map));
}

inline LabeledDataset parse_libsvm(std::string_view text, const ParseOptions& options = {}) {
  std::istringstream in{std::string(text)};
  return parse_libsvm(in, options);
}

/// LIBSVM text with raw labels and shortest round-trip number formatting.
inline std::string serialize_libsvm(const LabeledDataset& data) {
  std::string out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = data.label(i);
    out += detail::format_real(data.label_map().empty() ? static_cast<double>(y)
                                                        : data.label_map()[y - 1]);
    const auto& r = data.row(i);
    for (std::size_t k = 0; k < r.nnz(); ++k) {
      out += ' ';
      out += std::to_string(r.indices[k]);
      out += ':';
      out += detail::format_real(r.values[k]);
    }
    out += '\n';
  }
  return out;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded permutation; the first floor(n * train_frac) rows go to training.
inline SplitIndices split_indices(std::size_t n, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw std::invalid_argument("split: train fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac));
  if (n_train == 0 || n_train == n) throw std::invalid_argument("split: one side would be empty");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, 0x5b1u));
  shuffle(perm, rng);
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  return out;
}

inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, double train_frac,
                                                       std::uint64_t seed) {
  const SplitIndices ids = split_indices(data.size(), train_frac, seed);
  return {data.subset(ids.train), data.subset(ids.test)};
}

struct NoiseSpec {
  double eta = 0.0;
  std::uint64_t seed = 0;
};

/// Symmetric label noise: each label is kept with probability 1 - eta and
/// otherwise replaced by one of the other C - 1 classes uniformly. Row i
/// draws from its own stream derived from (seed, row_ids[i]), so corrupting
/// a subset equals subsetting the corrupted labels when original row ids
/// are passed. `row_ids` defaults to 0 .. n-1.
inline std::vector<int> inject_symmetric_noise(std::span<const int> labels, int n_classes,
                                               const NoiseSpec& spec,
                                               std::span<const std::size_t> row_ids = {}) {
  if (!(spec.eta >= 0.0 && spec.eta <= 1.0)) {
    throw std::invalid_argument("inject_symmetric_noise: eta must lie in [0, 1]");
  }
  if (n_classes < 2 && spec.eta > 0.0) {
    throw std::invalid_argument("inject_symmetric_noise: need at least two classes");
  }
  if (!row_ids.empty() && row_ids.size() != labels.size()) {
    throw std::invalid_argument("inject_symmetric_noise: row id count mismatch");
  }
  std::vector<int> out(labels.begin(), labels.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 1 || out[i] > n_classes) {
      throw std::invalid_argument("inject_symmetric_noise: label out of range");
    }
    const std::size_t id = row_ids.empty() ? i : row_ids[i];
    Rng rng(derive_seed(spec.seed, id));
    if (uniform01(rng) < spec.eta) {
      // Draw among the C - 1 other classes, skipping the original.
      int c = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n_classes - 1))) + 1;
      if (c >= out[i]) ++c;
      out[i] = c;
    }
  }
  return out;
}

/// Draws from the projected categorical distribution: each sample is a
/// {0,1}^{C-1} vector with at most one 1; entry i is set with probability
/// p_i and the all-zero vector (the last class) has probability 1 - sum p.
inline std::vector<std::vector<std::uint8_t>> sample_projected_categorical(
    const ProjectedSimplexPoint& p, std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xca7u));
  std::vector<std::vector<std::uint8_t>> out(n, std::vector<std::uint8_t>(p.size(), 0));
  for (auto& sample : out) {
    const double u = uniform01(rng);
    double cumulative = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      cumulative += p[i];
      if (u < cumulative) {
        sample[i] = 1;
        break;
      }
    }
  }
  return out;
}

/// Per-feature standardization fitted on one dataset and applied to others.
/// Off by default in the tools.
class Standardizer {
 public:
  static Standardizer fit(const LabeledDataset& data) {
    const auto p = static_cast<std::size_t>(data.n_features());
    std::vector<double> sum(p, 0.0);
    std::vector<double> sum_sq(p, 0.0);
    for (const auto& r : data.rows()) {
      for (std::size_t k = 0; k < r.nnz(); ++k) {
        sum[r.indices[k] - 1] += r.values[k];
        sum_sq[r.indices[k] - 1] += r.values[k] * r.values[k];
      }
    }
    Standardizer s;
    const auto n = static_cast<double>(data.size());
    s.mean_.resize(p);
    s.scale_.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      s.mean_[j] = sum[j] / n;
      const double var = std::max(sum_sq[j] / n - s.mean_[j] * s.mean_[j], 0.0);
      s.scale_[j] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    }
    return s;
  }

  LabeledDataset transform(const LabeledDataset& data) const {
    if (static_cast<std::size_t>(data.n_features()) != mean_.size()) {
      throw std::invalid_argument("Standardizer: feature count mismatch");
    }
    std::vector<SparseRow> rows;
    rows.reserve(data.size());
    std::vector<double> dense(mean_.size());
    for (const auto& r : data.rows()) {
      std::fill(dense.begin(), dense.end(), 0.0);
      for (std::size_t k = 0; k < r.nnz(); ++k) dense[r.indices[k] - 1] = r.values[k];
      SparseRow out;
      for (std::size_t j = 0; j < dense.size(); ++j) {
        const double v = (dense[j] - mean_[j]) * scale_[j];
        if (v != 0.0) {
          out.indices.push_back(static_cast<std::uint32_t>(j + 1));
          out.values.push_back(v);
        }
      }
      rows.push_back(std::move(out));
    }
    return LabeledDataset(std::move(rows), data.labels(), data.n_features(), data.n_classes(),
                          data.label_map());
  }

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& scale() const { return scale_; }

 private:
  std::vector<double> mean_;
  std::vector<double> scale_;
};

}  // namespace legendretron
