#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsk/cli.hpp"

using namespace tsk;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("tsk_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    data_ = (dir_ / "data.csv").string();
    const Result r = run({"synth", "--synth.n", "400", "--synth.d", "10", "--synth.out", data_, "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  std::string data_;
};

}  // namespace

TEST_F(CliTest, TrainWritesEveryArtifact) {
  const std::string out = (dir_ / "run").string();
  const Result r = run({"train", "--data", data_, "--rules", "2", "--out", out, "--train.max_epochs", "50",
                        "--diag.landscape", "true"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"config.txt", "checkpoint.json", "report.json", "diagnostics.csv", "landscape.csv",
                        "test_split.csv", "timing.json"})
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  const json report = load_json((fs::path(out) / "report.json").string());
  EXPECT_GE(report["best_val_accuracy"].get<double>(), 0.95);
  EXPECT_NE(slurp(fs::path(out) / "config.txt").find("model.rules = 2"), std::string::npos);
  EXPECT_EQ(slurp(fs::path(out) / "landscape.csv").substr(0, 40), "variant,D,R,h,epoch,batch,repeat,s,loss\n");
}

TEST_F(CliTest, EvalOnTheTestSplitMatchesTheReport) {
  const std::string out = (dir_ / "run").string();
  ASSERT_EQ(run({"train", "--data", data_, "--rules", "3", "--out", out, "--train.max_epochs", "20"}).code, 0);
  const Result r = run({"eval", "--checkpoint", out + "/checkpoint.json", "--data", out + "/test_split.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json ev = json::parse(r.out);
  const json report = load_json(out + "/report.json");
  EXPECT_EQ(ev["accuracy"].get<double>(), report["test_accuracy"].get<double>());
  EXPECT_DOUBLE_EQ(ev["loss"].get<double>(), report["test_loss"].get<double>());
  EXPECT_EQ(ev["n"].get<int>(), report["n_test"].get<int>());
}

TEST_F(CliTest, ReportIsReproducible) {
  const std::string a = (dir_ / "a").string(), b = (dir_ / "b").string();
  ASSERT_EQ(run({"train", "--data", data_, "--rules", "3", "--out", a, "--train.max_epochs", "10"}).code, 0);
  ASSERT_EQ(run({"train", "--data", data_, "--rules", "3", "--out", b, "--train.max_epochs", "10"}).code, 0);
  EXPECT_EQ(slurp(fs::path(a) / "report.json"), slurp(fs::path(b) / "report.json"));
  EXPECT_EQ(slurp(fs::path(a) / "checkpoint.json"), slurp(fs::path(b) / "checkpoint.json"));
}

TEST_F(CliTest, ConfigFileIsOverriddenByFlags) {
  const fs::path cfg = dir_ / "run.cfg";
  std::ofstream(cfg) << "# test config\nmodel.rules = 4\ntrain.max_epochs = 3\nmodel.variant = logtsk\n";
  const std::string out = (dir_ / "run").string();
  const Result r = run({"train", "--config", cfg.string(), "--data", data_, "--out", out, "--rules", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string written = slurp(fs::path(out) / "config.txt");
  EXPECT_NE(written.find("model.rules = 2"), std::string::npos);
  EXPECT_NE(written.find("model.variant = logtsk"), std::string::npos);
  EXPECT_EQ(load_json(out + "/report.json")["epochs"].size(), 3u);
}

TEST_F(CliTest, MissingDataNamesThePath) {
  const Result r = run({"train", "--data", "/no/such/file.csv", "--out", (dir_ / "x").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/no/such/file.csv"), std::string::npos);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST_F(CliTest, EvalRejectsDimensionMismatchAndEmptyData) {
  const std::string out = (dir_ / "run").string();
  ASSERT_EQ(run({"train", "--data", data_, "--rules", "2", "--out", out, "--train.max_epochs", "2"}).code, 0);
  const std::string other = (dir_ / "d5.csv").string();
  ASSERT_EQ(run({"synth", "--synth.n", "20", "--synth.d", "5", "--synth.out", other}).code, 0);
  Result r = run({"eval", "--checkpoint", out + "/checkpoint.json", "--data", other});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("D=10"), std::string::npos);
  EXPECT_NE(r.err.find("D=5"), std::string::npos);

  const std::string empty = (dir_ / "empty.csv").string();
  std::ofstream(empty).close();
  r = run({"eval", "--checkpoint", out + "/checkpoint.json", "--data", empty});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, BadConfigValuesAreUserErrors) {
  EXPECT_EQ(run({"train", "--data", data_, "--variant", "fancy", "--out", (dir_ / "x").string()}).code, 1);
  EXPECT_EQ(run({"train", "--data", data_, "--train.learning_rate", "abc", "--out", (dir_ / "x").string()}).code, 1);
  EXPECT_EQ(run({"train", "--no-such-flag", "1"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  const fs::path cfg = dir_ / "bad.cfg";
  std::ofstream(cfg) << "model.unknown = 3\n";
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", data_}).code, 1);
}

TEST_F(CliTest, SweepRowCountAndDeterminism) {
  const std::string a = (dir_ / "sa").string(), b = (dir_ / "sb").string();
  const std::vector<std::string> common{"--sweep.dims", "5,50", "--sweep.rules", "4,8", "--sweep.h", "1,5",
                                        "--sweep.epochs_at", "0,1", "--sweep.repeats", "2", "--sweep.n_samples", "60"};
  auto args_a = std::vector<std::string>{"sweep", "--out", a};
  args_a.insert(args_a.end(), common.begin(), common.end());
  auto args_b = std::vector<std::string>{"sweep", "--out", b, "--jobs", "2"};
  args_b.insert(args_b.end(), common.begin(), common.end());
  ASSERT_EQ(run(args_a).code, 0);
  ASSERT_EQ(run(args_b).code, 0);
  const std::string csv = slurp(fs::path(a) / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2 * 2 * 2 * 2);
  EXPECT_EQ(csv, slurp(fs::path(b) / "sweep.csv"));
  EXPECT_EQ(load_json(a + "/summary.json").size(), 2u * 2u * 2u * 2u);
}

TEST_F(CliTest, HSweepSingleValueGivesOneRow) {
  const std::string out = (dir_ / "hs").string();
  const Result r = run({"hsweep", "--data", data_, "--rules", "2", "--hsweep.h", "1", "--train.max_epochs", "3",
                        "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(fs::path(out) / "accuracy_vs_h.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "h,htsk,logtsk");
  EXPECT_TRUE(fs::exists(fs::path(out) / "hsweep.csv"));
}

TEST_F(CliTest, GradcheckPasses) {
  const Result r = run({"gradcheck", "--gradcheck.configs", "10", "--gradcheck.dims", "1,5"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("all configurations within"), std::string::npos);
}

TEST_F(CliTest, HelpExitsCleanly) {
  const Result r = run({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--train.learning_rate"), std::string::npos);
}
