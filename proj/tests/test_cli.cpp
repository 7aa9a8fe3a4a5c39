#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Result cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PATHGCN_CLI_PATH + "\" " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  Result r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / (std::string("pathgcn_cli_") +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(cli("synth --kind two_cliques --n 10 --seed 2 --out " + q(bundle())).code, 0);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }
  fs::path bundle() const { return dir_ / "bundle"; }
  fs::path run() const { return dir_ / "run"; }
  std::string config() const { return std::string("--config \"") + PATHGCN_CONFIG_DIR + "/two-cliques.json\""; }

  fs::path dir_;
};

TEST_F(Cli, TrainWritesReportAndCheckpoint) {
  const auto r = cli("train --quiet --bundle " + q(bundle()) + " " + config() + " --out " + q(run()));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto summary = nlohmann::json::parse(slurp(run() / "summary.json"));
  EXPECT_TRUE(summary.contains("test_accuracy"));
  EXPECT_EQ(summary.at("test_accuracy").get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(run() / "checkpoint.json"));
  EXPECT_EQ(slurp(run() / "training.csv").substr(0, 28), "epoch,loss,val_acc,val_loss\n");
  EXPECT_TRUE(nlohmann::json::parse(slurp(run() / "timing.json")).contains("train_ms"));
}

TEST_F(Cli, FlagsOverrideConfig) {
  const auto r = cli("train --quiet --bundle " + q(bundle()) + " " + config() + " --max-epochs 3 --out " + q(run()));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(nlohmann::json::parse(slurp(run() / "summary.json")).at("epochs_run").get<int>(), 3);
}

TEST_F(Cli, EvalTwiceGivesIdenticalFiles) {
  ASSERT_EQ(cli("train --quiet --bundle " + q(bundle()) + " " + config() + " --out " + q(run())).code, 0);
  for (const char* mode : {"deterministic", "stochastic"}) {
    const std::string base = "eval --bundle " + q(bundle()) + " --checkpoint " + q(run() / "checkpoint.json") +
                             " --mode " + mode + " --out ";
    ASSERT_EQ(cli(base + q(dir_ / "e1.json")).code, 0);
    ASSERT_EQ(cli(base + q(dir_ / "e2.json")).code, 0);
    EXPECT_EQ(slurp(dir_ / "e1.json"), slurp(dir_ / "e2.json")) << mode;
  }
}

TEST_F(Cli, AllSplitsReportsMean) {
  // Two identical split objects.
  const std::string splits = slurp(bundle() / "splits.json");
  std::ofstream(bundle() / "splits.json") << "[" << splits << "," << splits << "]";
  const auto r = cli("train --quiet --all-splits --bundle " + q(bundle()) + " " + config() + " --out " + q(run()));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto agg = nlohmann::json::parse(slurp(run() / "summary.json"));
  EXPECT_EQ(agg.at("splits").get<int>(), 2);
  EXPECT_EQ(agg.at("test_accuracy").get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(run() / "split1" / "checkpoint.json"));
}

TEST_F(Cli, KernelDumpCsv) {
  ASSERT_EQ(cli("train --quiet --bundle " + q(bundle()) + " " + config() + " --out " + q(run())).code, 0);
  const auto r = cli("kernel-dump --bundle " + q(bundle()) + " --checkpoint " + q(run() / "checkpoint.json") +
                     " --nodes 0,9 --layers 1 --channels 0,3 --out " + q(dir_ / "k.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = slurp(dir_ / "k.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "origin,layer,channel,node_id,stochastic,deterministic");
  EXPECT_NE(csv.find("\n9,1,3,"), std::string::npos);
  const auto bad = cli("kernel-dump --bundle " + q(bundle()) + " --checkpoint " + q(run() / "checkpoint.json") +
                       " --nodes 99");
  EXPECT_NE(bad.code, 0);
}

TEST_F(Cli, BenchJson) {
  const auto r = cli("bench --bundle " + q(bundle()) + " --reps 3 --hidden 8 --out " + q(dir_ / "b.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(slurp(dir_ / "b.json"));
  for (const char* key : {"path_sampling_ms", "train_step_ms", "inference_stochastic_ms", "inference_deterministic_ms"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST_F(Cli, VerifyPassesAndPrintsSlope) {
  const auto r = cli("verify --graph erdos_renyi --n 200");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("[FAIL]"), std::string::npos);
  EXPECT_NE(r.out.find("\nslope -0."), std::string::npos) << r.out;
}

TEST_F(Cli, ErrorsAreOneLineAndNonzero) {
  auto one_line = [](const std::string& s) { return s.find('\n') == s.size() - 1; };
  const auto missing = cli("eval --bundle " + q(dir_ / "nope") + " --checkpoint x.json");
  EXPECT_NE(missing.code, 0);
  EXPECT_EQ(missing.out.rfind("pathgcn: error: missing_file: ", 0), 0u) << missing.out;
  EXPECT_TRUE(one_line(missing.out));

  std::ofstream(bundle() / "labels.csv") << "0\n1\n";
  const auto short_labels = cli("train --bundle " + q(bundle()));
  EXPECT_NE(short_labels.code, 0);
  EXPECT_EQ(short_labels.out.rfind("pathgcn: error: count_mismatch: ", 0), 0u) << short_labels.out;
  EXPECT_NE(short_labels.out.find("labels.csv"), std::string::npos);
  EXPECT_TRUE(one_line(short_labels.out));

  const auto usage = cli("train");
  EXPECT_NE(usage.code, 0);
  EXPECT_TRUE(one_line(usage.out)) << usage.out;

  const auto bad_flag = cli("synth --kind grid --out " + q(dir_ / "g"));
  EXPECT_NE(bad_flag.code, 0);
  EXPECT_EQ(bad_flag.out.rfind("pathgcn: error: invalid_argument: ", 0), 0u) << bad_flag.out;

  const auto bad_cfg = cli("train --bundle " + q(bundle()) + " --dropout 1.5");
  EXPECT_NE(bad_cfg.code, 0);
  EXPECT_TRUE(one_line(bad_cfg.out)) << bad_cfg.out;
}

}  // namespace
