#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = LEGENDRETRON_CLI;
const std::string kData = LEGENDRETRON_DATA_DIR;

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("legendretron_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST(Cli, MissingRequiredFlagIsUsageError) {
  EXPECT_EQ(run("train --model-out " + (scratch() / "m.json").string()), 2);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("train --data x --model-out y --batch 0"), 2);
  EXPECT_EQ(run("bench-splits --data x --algos lt,foo"), 2);
}

TEST(Cli, TrainAndEvalMlrOnIris) {
  const auto model = scratch() / "iris_mlr.json";
  ASSERT_EQ(run("train --data " + kData + "/iris.scale --algo mlr --epochs 100 --model-out " + model.string()), 0);
  const json metrics = load_json(model.string() + ".metrics.json");
  EXPECT_GT(metrics["metrics"]["accuracy"].get<double>(), 0.8);
  EXPECT_EQ(metrics["dataset"]["C"], 3);
  EXPECT_TRUE(metrics["manifest"].contains("dataset_digest"));
  const auto eval_out = scratch() / "iris_eval.json";
  ASSERT_EQ(run("eval --model " + model.string() + " --data " + kData + "/iris.scale --metrics-out " +
                eval_out.string()),
            0);
  const json ev = load_json(eval_out);
  EXPECT_EQ(ev["metrics"]["accuracy"], metrics["metrics"]["accuracy"]);
  EXPECT_EQ(ev["metrics"]["mean_nll"], metrics["metrics"]["mean_nll"]);
}

TEST(Cli, RelativeDataPathFallsBackToDataDir) {
  const auto model = scratch() / "rel.json";
  const std::string cmd = "LEGENDRETRON_DATA_DIR=" + kData + " \"" + kCli +
                          "\" train --data wine.scale --algo mlr --epochs 1 --model-out " + model.string() +
                          " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 0);
}

TEST(Cli, ZeroBlocksMatchesMlr) {
  const auto a = scratch() / "b0.json";
  const auto b = scratch() / "mlr.json";
  const std::string common = "--data " + kData + "/wine.scale --epochs 5 --seed 4 ";
  ASSERT_EQ(run("train " + common + "--algo lt --blocks 0 --model-out " + a.string()), 0);
  ASSERT_EQ(run("train " + common + "--algo mlr --model-out " + b.string()), 0);
  EXPECT_EQ(load_json(a.string() + ".metrics.json")["metrics"], load_json(b.string() + ".metrics.json")["metrics"]);
}

TEST(Cli, CorruptAndMissingInputsAreDataErrors) {
  const auto bad = scratch() / "corrupt.json";
  write(bad, "{\"format\": \"legendretron-model\", \"version\": 1, \"W\": [1,");
  EXPECT_EQ(run("eval --model " + bad.string() + " --data " + kData + "/iris.scale"), 3);
  const auto bad_data = scratch() / "bad.libsvm";
  write(bad_data, "1 2:1 1:1\n");
  EXPECT_EQ(run("train --data " + bad_data.string() + " --model-out " + (scratch() / "x.json").string()), 3);
  EXPECT_EQ(run("train --data " + (scratch() / "absent").string() + " --model-out " +
                (scratch() / "x.json").string()),
            3);
}

TEST(Cli, NonFiniteTrainingAborts) {
  const auto data = scratch() / "huge.libsvm";
  write(data, "1 1:1e300\n2 1:-1e300\n");
  EXPECT_EQ(run("train --data " + data.string() + " --lr 1e10 --epochs 5 --model-out " +
                (scratch() / "nan.json").string()),
            4);
}

TEST(Cli, VerifyPassesForLinearLinkAndReportsComposedLinkFailure) {
  const auto mlr = scratch() / "verify_mlr.json";
  ASSERT_EQ(run("train --data " + kData + "/wine.scale --algo mlr --epochs 2 --model-out " + mlr.string()), 0);
  const auto report = scratch() / "verify_mlr_report.json";
  EXPECT_EQ(run("verify --model " + mlr.string() + " --points 20 --pairs 100 --cycles 20 --out " + report.string()),
            0);
  EXPECT_TRUE(load_json(report)["passed"].get<bool>());

  // A learned link with convex blocks and three classes is a product of two
  // symmetric Jacobians and fails the symmetry check.
  const auto lt = scratch() / "verify_lt.json";
  ASSERT_EQ(run("train --data " + kData + "/wine.scale --algo lt --blocks 2 --epochs 0 --model-out " + lt.string()),
            0);
  const auto lt_report = scratch() / "verify_lt_report.json";
  EXPECT_EQ(run("verify --model " + lt.string() + " --out " + lt_report.string()), 5);
  const json j = load_json(lt_report);
  EXPECT_FALSE(j["passed"].get<bool>());
  EXPECT_GT(j["jacobian"]["max_asymmetry"].get<double>(), 1e-5);
}

TEST(Cli, BenchSplitsWritesEveryCell) {
  const auto out = scratch() / "bench.csv";
  ASSERT_EQ(run("bench-splits --data " + kData + "/iris.scale --runs 2 --epochs 2 --etas 0,0.2,0.5 --algos lt,mlr "
                "--out " + out.string()),
            0);
  std::istringstream csv(slurp(out));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "run,seed,eta,algo,test_acc,test_nll,epochs,wall_s");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3 * 2 * 2);
  EXPECT_TRUE(fs::exists(out.string() + ".summary.csv"));
  EXPECT_TRUE(load_json(out.string() + ".manifest.json").contains("git_describe"));

  const auto single = scratch() / "single.csv";
  ASSERT_EQ(run("bench-splits --data " + kData + "/iris.scale --runs 1 --epochs 1 --etas 0 --algos mlr --out " +
                single.string()),
            0);
  std::istringstream summary(slurp(single.string() + ".summary.csv"));
  std::getline(summary, line);
  EXPECT_EQ(line, "eta,algo,runs,failed,mean_acc_pct,stderr_acc_pct,mean_nll,welch_p");
  std::getline(summary, line);
  EXPECT_NE(line.find(",NA,"), std::string::npos) << line;
}

TEST(Cli, NoiseSweepIsOneRunPerCell) {
  const auto out = scratch() / "sweep.csv";
  ASSERT_EQ(run("noise-sweep --data " + kData + "/iris.scale --epochs 1 --etas 0,0.3 --algos lt,mlr --out " +
                out.string()),
            0);
  std::istringstream csv(slurp(out));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);
}
