#pragma once

// Repeated split experiments: for each run, a seeded 80/20-style split,
// symmetric noise on the training labels, training, and evaluation on the
// clean test labels.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "legendretron/data.hpp"
#include "legendretron/random.hpp"
#include "legendretron/stats.hpp"
#include "legendretron/training.hpp"

namespace legendretron {

enum class Algorithm { kLegendreTron, kMlr };

inline const char* algorithm_name(Algorithm a) { return a == Algorithm::kLegendreTron ? "lt" : "mlr"; }

inline std::optional<Algorithm> parse_algorithm(const std::string& s) {
  if (s == "lt") return Algorithm::kLegendreTron;
  if (s == "mlr") return Algorithm::kMlr;
  return std::nullopt;
}

inline TrainResult train(Algorithm algo, const LabeledDataset& data, const TrainConfig& cfg) {
  return algo == Algorithm::kLegendreTron ? train_legendretron(data, cfg) : train_mlr(data, cfg);
}

struct RunResult {
  int run = 0;
  std::uint64_t seed = 0;  // training seed
  double eta = 0.0;
  Algorithm algo = Algorithm::kLegendreTron;
  double test_acc = 0.0;
  double test_nll = 0.0;
  int epochs = 0;
  double wall_s = 0.0;
  std::optional<std::string> error;  // set when the run failed
};

/// Seeds for run r, derived from the experiment seed. Split and noise do
/// not depend on eta or the algorithm, so every (eta, algo) cell of a run
/// sees the same split, and larger eta corrupts a superset of rows.
struct RunSeeds {
  std::uint64_t split;
  std::uint64_t noise;
  std::uint64_t train;
};

inline RunSeeds run_seeds(std::uint64_t seed, int run) {
  const auto r = static_cast<std::uint64_t>(run);
  return {derive_seed(seed, 0x5000u + r), derive_seed(seed, 0x6000u + r), derive_seed(seed, 0x7000u + r)};
}

inline RunResult run_split(const LabeledDataset& data, TrainConfig cfg, double train_frac, double eta,
                           Algorithm algo, int run, std::uint64_t seed) {
  const RunSeeds seeds = run_seeds(seed, run);
  RunResult out;
  out.run = run;
  out.seed = seeds.train;
  out.eta = eta;
  out.algo = algo;
  out.epochs = cfg.epochs;
  const auto start = std::chrono::steady_clock::now();
  try {
    const SplitIndices ids = split_indices(data.size(), train_frac, seeds.split);
    LabeledDataset train_set = data.subset(ids.train);
    const LabeledDataset test_set = data.subset(ids.test);
    if (eta > 0.0) {
      train_set = train_set.with_labels(
          inject_symmetric_noise(train_set.labels(), data.n_classes(), NoiseSpec{eta, seeds.noise}, ids.train));
    }
    cfg.seed = seeds.train;
    const TrainResult trained = train(algo, train_set, cfg);
    const Metrics m = evaluate(trained.model, test_set);
    out.test_acc = m.accuracy;
    out.test_nll = m.mean_nll;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Every (run, eta, algo) cell, ordered run-major then eta then algo
/// regardless of completion order. Cells run on `jobs` worker threads.
/// A failing cell records its error and does not stop the others.
inline std::vector<RunResult> bench_splits(const LabeledDataset& data, const TrainConfig& cfg, int runs,
                                           double train_frac, const std::vector<double>& etas,
                                           const std::vector<Algorithm>& algos, std::uint64_t seed,
                                           int jobs = 1) {
  struct Cell {
    int run;
    double eta;
    Algorithm algo;
  };
  std::vector<Cell> cells;
  for (int r = 0; r < runs; ++r) {
    for (double eta : etas) {
      for (Algorithm a : algos) cells.push_back({r, eta, a});
    }
  }
  std::vector<RunResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      results[i] = run_split(data, cfg, train_frac, cells[i].eta, cells[i].algo, cells[i].run, seed);
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

struct SummaryRow {
  double eta = 0.0;
  Algorithm algo = Algorithm::kLegendreTron;
  int runs = 0;  // successful runs
  int failed = 0;
  std::optional<double> mean_acc;
  std::optional<double> stderr_acc;
  std::optional<double> mean_nll;
  std::optional<double> welch_p;  // LT against MLR at the same eta
};

inline std::vector<double> accuracies(const std::vector<RunResult>& results, double eta, Algorithm algo) {
  std::vector<double> acc;
  for (const auto& r : results) {
    if (r.eta == eta && r.algo == algo && !r.error) acc.push_back(r.test_acc);
  }
  return acc;
}

inline std::vector<SummaryRow> summarize(const std::vector<RunResult>& results, const std::vector<double>& etas,
                                         const std::vector<Algorithm>& algos) {
  std::vector<SummaryRow> rows;
  for (double eta : etas) {
    const auto lt = accuracies(results, eta, Algorithm::kLegendreTron);
    const auto mlr = accuracies(results, eta, Algorithm::kMlr);
    const auto welch = welch_t_test(lt, mlr);
    for (Algorithm a : algos) {
      SummaryRow row;
      row.eta = eta;
      row.algo = a;
      std::vector<double> nlls;
      for (const auto& r : results) {
        if (r.eta != eta || r.algo != a) continue;
        if (r.error) {
          ++row.failed;
        } else {
          nlls.push_back(r.test_nll);
        }
      }
      const auto acc = accuracies(results, eta, a);
      row.runs = static_cast<int>(acc.size());
      if (!acc.empty()) {
        row.mean_acc = mean(acc);
        row.mean_nll = mean(nlls);
      }
      row.stderr_acc = standard_error(acc);
      if (welch) row.welch_p = welch->p_value;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace legendretron
