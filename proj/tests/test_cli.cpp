#include "nmdr/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "nmdr_cli_test";

int run_cli(const std::string& args) {
  std::string cmd = std::string(NMDR_CLI) + " " + args + " >" + (kWork / "stdout.txt").string() + " 2>" +
                    (kWork / "stderr.txt").string();
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string stderr_text() {
  std::ifstream in(kWork / "stderr.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string at(const std::string& name) { return (kWork / name).string(); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  static void TearDownTestSuite() { fs::remove_all(kWork); }
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("generate --out " + at("x.csv")), 1);  // --preset is required
  EXPECT_EQ(run_cli("generate --preset synth-other --out " + at("x.csv")), 1);
  EXPECT_EQ(run_cli("fit --edges " + at("missing.csv") + " --out " + at("fit")), 1);
}

TEST_F(Cli, DataErrorsExitTwo) {
  {
    std::ofstream out(kWork / "bad.csv");
    out << "a,b,r,1\nb,a,r,0\na,b,r,0\n";
  }
  EXPECT_EQ(run_cli("mask --edges " + at("bad.csv") + " --out " + at("bad_mask.csv")), 2);
  EXPECT_NE(stderr_text().find("(a,b,r)"), std::string::npos) << stderr_text();
}

TEST_F(Cli, PipelineFromGenerateToEval) {
  ASSERT_EQ(run_cli("generate --preset synth-single --seed 3 --out " + at("edges.csv") + " --truth " +
                 at("truth.jsonl")),
            0);
  EXPECT_NE(stderr_text().find("seed"), std::string::npos);
  ASSERT_EQ(run_cli("mask --edges " + at("edges.csv") + " --p 0.5 --seed 4 --out " + at("mask.csv")), 0);
  ASSERT_EQ(run_cli("fit --edges " + at("edges.csv") + " --mask " + at("mask.csv") + " --out " + at("fit") +
                 " --chains 2 --sweeps 40 --seed 5 --threads 1"),
            0)
      << stderr_text();
  EXPECT_TRUE(fs::exists(kWork / "fit" / "chain_1" / "trace.jsonl"));
  ASSERT_EQ(run_cli("predict --fit " + at("fit") + " --edges " + at("edges.csv") + " --mask " + at("mask.csv") +
                 " --out " + at("pred.csv")),
            0)
      << stderr_text();
  ASSERT_EQ(run_cli("eval --predictions " + at("pred.csv") + " --out " + at("auc.txt")), 0) << stderr_text();
  std::ifstream in(kWork / "auc.txt");
  auto kv = nmdr::read_key_values(in);
  ASSERT_EQ(kv.count("mean"), 1u);
  EXPECT_GT(std::stod(kv["mean"]), 0.7);

  ASSERT_EQ(run_cli("export-graph --fit " + at("fit") + " --edges " + at("edges.csv") + " --out " + at("g.dot")), 0)
      << stderr_text();
  std::ifstream dot(kWork / "g.dot");
  std::string first;
  std::getline(dot, first);
  EXPECT_EQ(first, "graph affinity {");
}
