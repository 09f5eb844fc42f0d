#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "causalrec/io.h"
#include "json.hpp"

using namespace causalrec;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("causalrec_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    // Sessions (1 2 3 5 4), (2 3 5), (1 3 2).
    std::ofstream log(dir_ / "log.tsv");
    const char* sessions[][5] = {{"1", "2", "3", "5", "4"}, {"2", "3", "5"}, {"1", "3", "2"}};
    const int lengths[] = {5, 3, 3};
    for (int s = 0; s < 3; ++s) {
      for (int k = 0; k < lengths[s]; ++k) log << "s" << s << '\t' << 100 * s + k << '\t' << sessions[s][k] << '\n';
    }
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(CAUSALREC_CLI) + " " + args + " >" + (dir_ / "stdout.txt").string() +
                            " 2>" + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  int prep(const std::string& split = "last:0") const {
    return run("prep --in " + path("log.tsv") + " --out " + path("data") + " --min-item-freq 1 --split " + split);
  }

  fs::path dir_;
};

std::set<std::string> lines_of(const std::string& text) {
  std::set<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.insert(line);
  return out;
}

}  // namespace

TEST_F(CliTest, PrepThenGraphsGivesFixtureEffectWeights) {
  ASSERT_EQ(prep(), 0);
  ASSERT_EQ(run("graphs --data " + path("data") + " --out " + path("g")), 0);
  const auto lines = lines_of(io::read_file(dir_ / "g" / "effect_graph.csv"));
  const std::set<std::string> want{"src,dst,weight", "1,2,0.5", "1,3,0.5", "2,3,0.5",
                                   "3,2,0",          "3,5,0.666666666667", "5,4,1"};
  EXPECT_EQ(lines, want);
  for (const char* f : {"session_graph.csv", "cause_graph.csv", "correlation_graph.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "g" / f)) << f;
  }
  const auto m = nlohmann::json::parse(io::read_file(dir_ / "g" / "manifest.json"));
  EXPECT_EQ(m["command"], "graphs");
  EXPECT_EQ(m["outputs"]["effect_graph.csv"], io::sha256_file(dir_ / "g" / "effect_graph.csv"));
}

TEST_F(CliTest, GraphOutputsAreByteIdenticalAcrossRuns) {
  ASSERT_EQ(prep(), 0);
  ASSERT_EQ(run("graphs --data " + path("data") + " --out " + path("g1")), 0);
  ASSERT_EQ(run("graphs --data " + path("data") + " --out " + path("g2")), 0);
  for (const char* f : {"session_graph.csv", "effect_graph.csv", "cause_graph.csv", "correlation_graph.csv"}) {
    EXPECT_EQ(io::read_file(dir_ / "g1" / f), io::read_file(dir_ / "g2" / f)) << f;
  }
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run("eval --data " + path("data") + " --out " + path("e")), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  ASSERT_EQ(prep(), 0);
  EXPECT_EQ(run("--set no_such_key=1 train --data " + path("data") + " --out " + path("t")), 2);
  EXPECT_EQ(run("--set dim train --data " + path("data") + " --out " + path("t")), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(CliTest, ExpectDigest) {
  const auto digest = io::sha256_file(dir_ / "log.tsv");
  const std::string base = "prep --in " + path("log.tsv") + " --out " + path("data") + " --min-item-freq 1 --split last:0";
  EXPECT_EQ(run("--expect-digest " + digest + " " + base), 0);
  EXPECT_EQ(run("--expect-digest log=" + digest + " " + base), 0);
  EXPECT_EQ(run("--expect-digest log=" + std::string(64, '0') + " " + base), 1);
  EXPECT_EQ(run("--expect-digest vocab=" + digest + " " + base), 2);
}

TEST_F(CliTest, TrainEvalExplainRoundTrip) {
  ASSERT_EQ(prep("last:0.34"), 0);
  const std::string knobs = "--set dim=4 --set heads=1 --set epochs=2 --set validation_fraction=0 --seed 3 ";
  ASSERT_EQ(run(knobs + "train --data " + path("data") + " --out " + path("t")), 0);
  EXPECT_TRUE(fs::exists(dir_ / "t" / "checkpoint.cgsr"));
  EXPECT_TRUE(fs::exists(dir_ / "t" / "history.csv"));

  ASSERT_EQ(run("eval --data " + path("data") + " --checkpoint " + path("t/checkpoint.cgsr") + " --out " + path("e")),
            0);
  EXPECT_TRUE(fs::exists(dir_ / "e" / "metrics.csv"));
  const auto metrics = nlohmann::json::parse(io::read_file(dir_ / "e" / "metrics.json"));
  EXPECT_EQ(metrics["samples"], 2);

  std::ofstream(dir_ / "sessions.txt") << "q1\t1,3\nq/2\t2\n";
  const std::string explain = "explain --data " + path("data") + " --checkpoint " + path("t/checkpoint.cgsr") +
                              " --sessions " + path("sessions.txt") + " --out " + path("x");
  ASSERT_EQ(run(explain + " --item 5"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "x" / "q1__5.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "x" / "q_2__5.txt"));
  const auto report = io::read_file(dir_ / "x" / "q1__5.txt");
  EXPECT_EQ(report.rfind("session q1\nitem 5\n", 0), 0u);
  EXPECT_NE(report.find("\n0,1,"), std::string::npos);
  EXPECT_EQ(run(explain + " --item 99"), 2);
}
