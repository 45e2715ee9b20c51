// legendretron command-line tool: train, eval, verify, noise-sweep,
// bench-splits.
//
// Exit codes: 0 success, 1 unexpected error, 2 bad flags, 3 data or model
// file error, 4 training aborted on a non-finite loss, 5 certification
// failure.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "legendretron/legendretron.hpp"

#ifndef LEGENDRETRON_GIT_DESCRIBE
#define LEGENDRETRON_GIT_DESCRIBE "unknown"
#endif

namespace lt = legendretron;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kError = 1, kBadFlags = 2, kDataError = 3, kNanAbort = 4, kCertFailed = 5 };

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("LEGENDRETRON_DATA_DIR"); dir != nullptr && fs::path(path).is_relative()) {
    const fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream ss;
  ss << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

struct LoadedData {
  lt::LabeledDataset data;
  std::string path;
  std::string digest;
};

LoadedData load_data(const std::string& flag, const lt::ParseOptions& options = {}) {
  const std::string path = resolve_data_path(flag);
  const std::string text = read_file(path);
  try {
    return {lt::parse_libsvm(std::string_view(text), options), path, fnv1a_hex(text)};
  } catch (const lt::ParseError& e) {
    throw DataError(path + ":" + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json config_json(const lt::TrainConfig& c) {
  return {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay}, {"lr_decay", c.lr_decay},   {"decay_step", c.decay_step},
          {"blocks", c.blocks},         {"hidden", c.hidden},         {"layers", c.layers},
          {"seed", c.seed}};
}

json manifest(const std::string& command, const json& config, std::uint64_t seed, const std::string& digest,
              double wall_s) {
  return {{"command", command},
          {"config", config},
          {"seed", seed},
          {"dataset_digest", digest},
          {"started_utc", utc_timestamp()},
          {"wall_s", wall_s},
          {"git_describe", LEGENDRETRON_GIT_DESCRIBE}};
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

json metrics_json(const lt::Metrics& m) {
  json j{{"accuracy", m.accuracy}, {"mean_nll", m.mean_nll}, {"examples", m.examples}};
  j["auc"] = m.auc ? json(*m.auc) : json(nullptr);
  if (!m.epoch_nll.empty()) j["epoch_nll"] = m.epoch_nll;
  return j;
}

json dataset_json(const lt::LabeledDataset& d) {
  return {{"N", d.size()}, {"p", d.n_features()}, {"C", d.n_classes()}, {"label_map", d.label_map()}};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

// Shared training flags.
struct TrainFlags {
  lt::TrainConfig cfg;
  std::string preset = "default";
  CLI::Option* epochs = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* gamma = nullptr;
  CLI::Option* step = nullptr;
  CLI::Option* blocks = nullptr;
  CLI::Option* hidden = nullptr;
  CLI::Option* layers = nullptr;
  CLI::Option* batch = nullptr;

  void add(CLI::App* app) {
    app->add_option("--appendix-l", preset, "Hyperparameter preset: default or mnist")
        ->check(CLI::IsMember({"default", "mnist"}));
    epochs = app->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    lr = app->add_option("--lr", cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    gamma = app->add_option("--gamma", cfg.lr_decay, "Learning-rate decay factor in (0, 1]")
                ->check(CLI::Range(0.0, 1.0));
    step = app->add_option("--step", cfg.decay_step, "Epochs between decays")->check(CLI::PositiveNumber);
    blocks = app->add_option("--blocks", cfg.blocks, "Number of convex blocks B")->check(CLI::NonNegativeNumber);
    hidden = app->add_option("--hidden", cfg.hidden, "Hidden width H")->check(CLI::PositiveNumber);
    layers = app->add_option("--layers", cfg.layers, "Depth M")->check(CLI::PositiveNumber);
    batch = app->add_option("--batch", cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    app->add_option("--weight-decay", cfg.weight_decay, "Coupled L2 weight decay")->check(CLI::NonNegativeNumber);
  }

  // Preset first, then any explicitly given flag wins.
  lt::TrainConfig resolve() const {
    lt::TrainConfig out = preset == "mnist" ? lt::TrainConfig::image_scale() : lt::TrainConfig::standard();
    out.weight_decay = cfg.weight_decay;
    if (epochs->count()) out.epochs = cfg.epochs;
    if (lr->count()) out.learning_rate = cfg.learning_rate;
    if (gamma->count()) out.lr_decay = cfg.lr_decay;
    if (step->count()) out.decay_step = cfg.decay_step;
    if (blocks->count()) out.blocks = cfg.blocks;
    if (hidden->count()) out.hidden = cfg.hidden;
    if (layers->count()) out.layers = cfg.layers;
    if (batch->count()) out.batch_size = cfg.batch_size;
    if (out.lr_decay <= 0.0) throw CLI::ValidationError("--gamma", "must lie in (0, 1]");
    return out;
  }
};

void validate_flags(const lt::TrainConfig& cfg) {
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("config", e.what());
  }
}

std::vector<lt::Algorithm> parse_algos(const std::vector<std::string>& names) {
  std::vector<lt::Algorithm> out;
  for (const auto& n : names) {
    const auto a = lt::parse_algorithm(n);
    if (!a) throw CLI::ValidationError("--algos", "unknown algorithm " + n);
    out.push_back(*a);
  }
  return out;
}

std::string runs_csv(const std::vector<lt::RunResult>& results) {
  std::ostringstream out;
  out << "run,seed,eta,algo,test_acc,test_nll,epochs,wall_s\n";
  for (const auto& r : results) {
    out << r.run << ',' << r.seed << ',' << fmt(r.eta) << ',' << lt::algorithm_name(r.algo) << ','
        << (r.error ? "NA" : fmt(r.test_acc)) << ',' << (r.error ? "NA" : fmt(r.test_nll)) << ',' << r.epochs
        << ',' << fmt(r.wall_s) << '\n';
  }
  return out.str();
}

std::string summary_csv(const std::vector<lt::SummaryRow>& rows) {
  std::ostringstream out;
  out << "eta,algo,runs,failed,mean_acc_pct,stderr_acc_pct,mean_nll,welch_p\n";
  for (const auto& s : rows) {
    const auto pct = [](const std::optional<double>& v) -> std::optional<double> {
      if (!v) return std::nullopt;
      return 100.0 * *v;
    };
    out << fmt(s.eta) << ',' << lt::algorithm_name(s.algo) << ',' << s.runs << ',' << s.failed << ','
        << fmt(pct(s.mean_acc)) << ',' << fmt(pct(s.stderr_acc)) << ',' << fmt(s.mean_nll) << ','
        << fmt(s.welch_p) << '\n';
  }
  return out.str();
}

void report_failures(const std::vector<lt::RunResult>& results) {
  for (const auto& r : results) {
    if (r.error) {
      std::cerr << "run " << r.run << " eta " << r.eta << " " << lt::algorithm_name(r.algo)
                << " failed: " << *r.error << '\n';
    }
  }
}

std::string sibling(const std::string& path, const std::string& suffix) {
  return path.empty() || path == "-" ? std::string() : path + suffix;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn proper canonical multiclass losses and class probabilities"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a LIBSVM dataset");
  std::string data_path, model_out, metrics_out, algo_name = "lt";
  std::optional<int> classes;
  std::uint64_t seed = 0;
  double noise_eta = 0.0;
  bool standardize = false;
  TrainFlags train_flags;
  train_cmd->add_option("--data", data_path, "LIBSVM dataset")->required();
  train_cmd->add_option("--model-out", model_out, "Model file to write")->required();
  train_cmd->add_option("--metrics-out", metrics_out, "Metrics JSON (default: <model-out>.metrics.json)");
  train_cmd->add_option("--algo", algo_name, "lt or mlr")->check(CLI::IsMember({"lt", "mlr"}));
  train_cmd->add_option("--classes", classes, "Declared class count")->check(CLI::Range(2, 1 << 20));
  train_cmd->add_option("--seed", seed, "Run seed");
  train_cmd->add_option("--noise-eta", noise_eta, "Symmetric label-noise rate on training labels")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_flag("--standardize", standardize, "Standardize features before training");
  train_flags.add(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a LIBSVM dataset");
  std::string model_path;
  eval_cmd->add_option("--model", model_path, "Model file")->required();
  eval_cmd->add_option("--data", data_path, "LIBSVM dataset")->required();
  eval_cmd->add_option("--metrics-out", metrics_out, "Metrics JSON (default: stdout)");

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "Certify the learned link of a model");
  int points = 100, pairs = 1000, cycles = 200;
  std::string report_out;
  verify_cmd->add_option("--model", model_path, "Model file")->required();
  verify_cmd->add_option("--points", points, "Jacobian sample points")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--pairs", pairs, "Monotonicity pairs")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--cycles", cycles, "Cycles per cycle length")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--seed", seed, "Sampling seed");
  verify_cmd->add_option("--out", report_out, "Report JSON (default: stdout)");

  // noise-sweep and bench-splits share most flags
  std::vector<double> etas{0.0};
  std::vector<std::string> algo_names{"lt", "mlr"};
  double train_frac = 0.8;
  int runs = 20, jobs = 1;
  std::string csv_out, summary_out;
  TrainFlags bench_flags;
  auto add_experiment_flags = [&](CLI::App* cmd, TrainFlags& flags) {
    cmd->add_option("--data", data_path, "LIBSVM dataset")->required();
    cmd->add_option("--etas", etas, "Noise levels")->check(CLI::Range(0.0, 1.0))->delimiter(',');
    cmd->add_option("--algos", algo_names, "Algorithms (lt, mlr)")->delimiter(',');
    cmd->add_option("--train-frac", train_frac, "Training fraction")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--seed", seed, "Experiment seed");
    cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out", csv_out, "Per-run CSV (default: stdout)");
    cmd->add_option("--summary-out", summary_out, "Summary CSV (default: <out>.summary.csv or stderr)");
    cmd->add_flag("--standardize", standardize, "Standardize features (fitted on all rows)");
    flags.add(cmd);
  };
  auto* sweep_cmd = app.add_subcommand("noise-sweep", "One split per noise level, both algorithms");
  TrainFlags sweep_flags;
  add_experiment_flags(sweep_cmd, sweep_flags);
  auto* bench_cmd = app.add_subcommand("bench-splits", "Repeated random splits per noise level");
  add_experiment_flags(bench_cmd, bench_flags);
  bench_cmd->add_option("--runs", runs, "Repetitions")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadFlags;
  }

  const std::string command = [&] {
    std::string c;
    for (int i = 0; i < argc; ++i) c += (i ? " " : "") + std::string(argv[i]);
    return c;
  }();

  try {
    if (*train_cmd) {
      const lt::TrainConfig cfg = [&] {
        lt::TrainConfig c = train_flags.resolve();
        c.seed = seed;
        if (algo_name == "mlr") c.blocks = 0;
        return c;
      }();
      validate_flags(cfg);
      lt::ParseOptions options;
      options.n_classes = classes;
      LoadedData loaded = load_data(data_path, options);
      lt::LabeledDataset data = loaded.data;
      if (standardize) data = lt::Standardizer::fit(data).transform(data);
      lt::LabeledDataset train_set = data;
      if (noise_eta > 0.0) {
        train_set = data.with_labels(lt::inject_symmetric_noise(
            data.labels(), data.n_classes(), lt::NoiseSpec{noise_eta, lt::derive_seed(seed, 0x6000u)}));
      }
      const auto start = std::chrono::steady_clock::now();
      const lt::TrainResult result = lt::train(*lt::parse_algorithm(algo_name), train_set, cfg);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      json config = config_json(cfg);
      config["algo"] = algo_name;
      config["noise_eta"] = noise_eta;
      config["standardize"] = standardize;
      const json man = manifest(command, config, seed, loaded.digest, wall);
      lt::save_model(result.model, model_out, json{{"manifest", man}});
      lt::Metrics m = lt::evaluate(result.model, data);
      m.epoch_nll = result.metrics.epoch_nll;
      const json out{{"metrics", metrics_json(m)},
                     {"dataset", dataset_json(data)},
                     {"model", model_out},
                     {"manifest", man}};
      write_text(metrics_out.empty() ? model_out + ".metrics.json" : metrics_out, out.dump(2) + "\n");
      return kOk;
    }

    if (*eval_cmd) {
      const lt::LinkModel model = lt::load_model(model_path);
      lt::ParseOptions options;
      options.n_features = model.shape().features;
      options.label_map = model.label_map();
      const LoadedData loaded = load_data(data_path, options);
      const lt::Metrics m = lt::evaluate(model, loaded.data);
      const json out{{"metrics", metrics_json(m)},
                     {"dataset", dataset_json(loaded.data)},
                     {"model", model_path},
                     {"manifest", manifest(command, json::object(), 0, loaded.digest, 0.0)}};
      write_text(metrics_out, out.dump(2) + "\n");
      return kOk;
    }

    if (*verify_cmd) {
      const lt::LinkModel model = lt::load_model(model_path);
      const int dim = model.shape().logit_dim();
      const lt::VectorField field = lt::link_field(model);
      const auto cert = lt::certify_link(model, points, seed);
      const auto mono = lt::check_monotone(field, dim, pairs, seed);
      json cyclic = json::array();
      bool cyclic_ok = true;
      for (int n : {2, 3, 4}) {
        const auto r = lt::check_cyclic(field, dim, n, cycles, seed);
        cyclic_ok = cyclic_ok && r.passed();
        cyclic.push_back(lt::to_json(r));
      }
      const bool ok = cert.passed() && mono.strictly_monotone() && cyclic_ok;
      const json out{{"model", model_path},
                     {"passed", ok},
                     {"jacobian", lt::to_json(cert)},
                     {"monotone", lt::to_json(mono)},
                     {"cyclic", cyclic},
                     {"manifest", manifest(command, json{{"points", points}, {"pairs", pairs}, {"cycles", cycles}},
                                           seed, fnv1a_hex(read_file(model_path)), 0.0)}};
      write_text(report_out, out.dump(2) + "\n");
      if (!ok) {
        std::cerr << "certification failed: max asymmetry " << cert.max_asymmetry << ", min eigenvalue "
                  << cert.min_eigenvalue << ", min monotone inner product " << mono.min_inner_product << '\n';
      }
      return ok ? kOk : kCertFailed;
    }

    if (*sweep_cmd || *bench_cmd) {
      const bool bench = static_cast<bool>(*bench_cmd);
      const lt::TrainConfig cfg = (bench ? bench_flags : sweep_flags).resolve();
      validate_flags(cfg);
      if (!(train_frac > 0.0 && train_frac < 1.0)) {
        throw CLI::ValidationError("--train-frac", "must lie in (0, 1)");
      }
      const auto algos = parse_algos(algo_names);
      LoadedData loaded = load_data(data_path);
      lt::LabeledDataset data = loaded.data;
      if (standardize) data = lt::Standardizer::fit(data).transform(data);
      const int n_runs = bench ? runs : 1;
      const auto start = std::chrono::steady_clock::now();
      const auto results = lt::bench_splits(data, cfg, n_runs, train_frac, etas, algos, seed, jobs);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      report_failures(results);
      write_text(csv_out, runs_csv(results));
      const std::string summary_path = summary_out.empty() ? sibling(csv_out, ".summary.csv") : summary_out;
      const std::string summary = summary_csv(lt::summarize(results, etas, algos));
      if (summary_path.empty()) {
        std::cerr << summary;
      } else {
        write_text(summary_path, summary);
      }
      json config = config_json(cfg);
      config["runs"] = n_runs;
      config["etas"] = etas;
      config["algos"] = algo_names;
      config["train_frac"] = train_frac;
      config["standardize"] = standardize;
      const json man = manifest(command, config, seed, loaded.digest, wall);
      const std::string manifest_path = sibling(csv_out, ".manifest.json");
      if (!manifest_path.empty()) write_text(manifest_path, man.dump(2) + "\n");
      return kOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadFlags;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const lt::ModelFileError& e) {
    std::cerr << "model file error: " << e.what() << '\n';
    return kDataError;
  } catch (const lt::TrainingError& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kNanAbort;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}
