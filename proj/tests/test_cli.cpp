#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "sbamdt/io.hpp"

namespace fs = std::filesystem;
using sbamdt::Json;

namespace {

struct Outcome {
  int code;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("sbamdt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
           std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  Outcome run(const std::string& args) const {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(SBAMDT_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() +
                            " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }

  std::string p(const std::string& name) const { return (dir / name).string(); }

  void simulate_and_fit(const std::string& fit_extra = "") const {
    write("sim.ini", "scenario = ushape\nn_train = 120\nn_test = 40\nn_unstructured = 3\nseed = 5\n");
    write("fit.ini", "m = 3\nn_iter = 60\nburn_in = 20\nthin = 2\nn_knots = 30\nn_cutoffs = 20\nthreads = 1\n" + fit_extra);
    ASSERT_EQ(run("simulate --config " + p("sim.ini") + " --out " + p("data")).code, 0);
    ASSERT_EQ(run("fit --config " + p("fit.ini") + " --train " + p("data/train.csv") + " --out " + p("model")).code, 0);
  }

  fs::path dir;
};

std::size_t data_rows(const fs::path& csv) { return sbamdt::read_csv(csv).rows.size(); }

std::size_t line_count(const fs::path& p) {
  const std::string text = slurp(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_F(Cli, SimulateWritesRequestedRows) {
  write("sim.ini", "scenario = ushape\nn_train = 500\nn_test = 200\n");
  ASSERT_EQ(run("simulate --config " + p("sim.ini") + " --out " + p("out")).code, 0);
  EXPECT_EQ(data_rows(dir / "out/train.csv"), 500u);
  EXPECT_EQ(data_rows(dir / "out/test.csv"), 200u);
}

TEST_F(Cli, SimulateSquareColumns) {
  write("sim.ini", "scenario = square\nn_train = 20\nn_test = 10\n");
  ASSERT_EQ(run("simulate --config " + p("sim.ini") + " --out " + p("out")).code, 0);
  EXPECT_EQ(sbamdt::read_csv(dir / "out/train.csv").header,
            (std::vector<std::string>{"s_1", "s_2", "x_1", "x_2", "y", "f_true"}));
}

TEST_F(Cli, SimulateIsByteIdenticalUnderSeed) {
  write("sim.ini", "n_train = 50\nn_test = 20\n");
  ASSERT_EQ(run("simulate --config " + p("sim.ini") + " --seed 9 --out " + p("a")).code, 0);
  ASSERT_EQ(run("simulate --config " + p("sim.ini") + " --seed 9 --out " + p("b")).code, 0);
  ASSERT_EQ(run("simulate --config " + p("sim.ini") + " --seed 10 --out " + p("c")).code, 0);
  EXPECT_EQ(slurp(dir / "a/train.csv"), slurp(dir / "b/train.csv"));
  EXPECT_EQ(slurp(dir / "a/test.csv"), slurp(dir / "b/test.csv"));
  EXPECT_NE(slurp(dir / "a/train.csv"), slurp(dir / "c/train.csv"));
}

TEST_F(Cli, SmokeFitOnFiveHundredPointsIsQuick) {
  write("sim.ini", "n_train = 500\nn_test = 10\n");
  write("fit.ini", "m = 2\nn_iter = 100\nburn_in = 50\nthreads = 1\n");
  ASSERT_EQ(run("simulate --config " + p("sim.ini") + " --out " + p("data")).code, 0);
  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(run("fit --config " + p("fit.ini") + " --train " + p("data/train.csv") + " --out " + p("model")).code, 0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 10.0);
  EXPECT_TRUE(fs::exists(dir / "model" / sbamdt::kHeaderFile));
  EXPECT_TRUE(fs::exists(dir / "model" / sbamdt::kSnapshotFile));
  EXPECT_NE(slurp(dir / "stdout.txt").find("grow"), std::string::npos);
}

TEST_F(Cli, FitRecordsAblationInHeader) {
  simulate_and_fit("ablation = hard_only\n");
  const Json h = Json::parse(slurp(dir / "model" / sbamdt::kHeaderFile));
  EXPECT_EQ(h.at("ablation"), "hard_only");
  EXPECT_EQ(h.at("snapshots"), 20);
}

TEST_F(Cli, FitMissingResponseColumnNamesIt) {
  write("train.csv", "s_1,s_2,x_1\n0,0,1\n1,0,2\n0,1,3\n");
  const Outcome r = run("fit --train " + p("train.csv") + " --out " + p("model"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("'y'"), std::string::npos) << r.err;
}

TEST_F(Cli, FitMalformedCsvReportsLine) {
  write("train.csv", "s_1,x_1,y\n0,1,2\n0,oops,3\n");
  const Outcome r = run("fit --train " + p("train.csv") + " --out " + p("model"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("train.csv:3"), std::string::npos) << r.err;
}

TEST_F(Cli, InvalidConfigIsValidationError) {
  write("train.csv", "s_1,x_1,y\n0,1,2\n1,0,3\n");
  write("bad.ini", "n_iter = 10\nburn_in = 20\n");
  EXPECT_EQ(run("fit --config " + p("bad.ini") + " --train " + p("train.csv") + " --out " + p("m")).code, 1);
  EXPECT_EQ(run("fit --out " + p("m2")).code, 1);  // --train missing
  EXPECT_EQ(run("nonsense").code, 1);
}

TEST_F(Cli, UnwritableOutputIsRuntimeFailure) {
  write("sim.ini", "n_train = 5\nn_test = 5\n");
  write("blocker", "a file, not a directory");
  EXPECT_EQ(run("simulate --config " + p("sim.ini") + " --out " + p("blocker/sub")).code, 2);
}

TEST_F(Cli, PredictRowsIntervalsAndDeterminism) {
  simulate_and_fit();
  ASSERT_EQ(run("predict --model " + p("model") + " --data " + p("data/test.csv") + " --out " + p("a") + " --draws").code, 0);
  ASSERT_EQ(run("predict --model " + p("model") + " --data " + p("data/test.csv") + " --out " + p("b")).code, 0);
  const auto t = sbamdt::read_csv(dir / "a/predictions.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"id", "mean", "sd", "q05", "q95"}));
  ASSERT_EQ(t.rows.size(), 40u);
  for (const auto& r : t.rows) {
    EXPECT_LE(r[3], r[4]);
    EXPECT_GE(r[2], 0.0);
  }
  EXPECT_EQ(slurp(dir / "a/predictions.csv"), slurp(dir / "b/predictions.csv"));
  EXPECT_TRUE(fs::exists(dir / "a/draws.csv"));
}

TEST_F(Cli, PredictDimensionMismatch) {
  simulate_and_fit();
  write("other.csv", "s_1,s_2,x_1\n0,0,1\n");
  EXPECT_EQ(run("predict --model " + p("model") + " --data " + p("other.csv") + " --out " + p("a")).code, 1);
}

TEST_F(Cli, ReportFiles) {
  simulate_and_fit();
  ASSERT_EQ(run("report --model " + p("model") + " --data " + p("data/test.csv") + " --out " + p("r") + " --grid 7").code, 0);
  const Json m = Json::parse(slurp(dir / "r/metrics.json"));
  for (const char* k : {"rmspe", "mape", "crps"}) {
    ASSERT_TRUE(m.contains(k)) << k;
    EXPECT_GE(m.at(k).get<double>(), 0.0);
  }
  EXPECT_EQ(sbamdt::read_csv(dir / "r/metrics.csv").rows.size(), 1u);
  EXPECT_EQ(line_count(dir / "r/importance.csv"), 1u + 4u);  // header, structured block, 3 features
  EXPECT_EQ(data_rows(dir / "r/surfaces.csv"), 49u);
}

TEST_F(Cli, ReportNeedsTruthColumn) {
  simulate_and_fit();
  write("no_truth.csv", "s_1,s_2,x_1,x_2,x_3,y\n0,0,0,0,0,1\n0.1,0,0,0,0,2\n");
  const Outcome r = run("report --model " + p("model") + " --data " + p("no_truth.csv") + " --out " + p("r"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("f_true"), std::string::npos);
  EXPECT_EQ(run("report --model " + p("model") + " --data " + p("no_truth.csv") + " --out " + p("r") + " --truth y").code, 0);
}

TEST_F(Cli, DiagReports) {
  write("diag.ini", "n_train = 40\nn_knots = 20\nalpha_mu = 6\ndiag_draws = 5000\n");
  ASSERT_EQ(run("diag --config " + p("diag.ini") + " --out " + p("d")).code, 0);
  for (const char* f : {"cov_given_TA.json", "cov_given_T.json"}) {
    const Json j = Json::parse(slurp(dir / "d" / f));
    EXPECT_TRUE(j.contains("max_abs_dev"));
    EXPECT_TRUE(j.at("psd").get<bool>());
    EXPECT_EQ(j.at("mc_se").at("rows"), 4);
  }
  write("bad.ini", "alpha_mu = 1\n");
  EXPECT_EQ(run("diag --config " + p("bad.ini") + " --out " + p("e")).code, 1);
}
