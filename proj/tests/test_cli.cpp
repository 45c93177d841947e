#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>

#include "test_util.hpp"

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(TCCP_CLI_PATH) + " " + args + " 2>&1";
  Run r{-1, {}};
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// One small simulated dataset shared by the tests in this file.
class CliFlow : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testutil::TempDir;
    const auto r = cli("--data-dir " + data() + " --seed 3 simulate --users 3000");
    ASSERT_EQ(r.code, 0) << r.out;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string data() { return dir_->file("data"); }
  static std::string out(const std::string& name) { return dir_->file(name); }

  static testutil::TempDir* dir_;
};

testutil::TempDir* CliFlow::dir_ = nullptr;

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli("--help").code, 0);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("--config /nonexistent.cfg simulate").code, 2);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto r = cli("--set op=90 --set cp=90 --print-config train --mode tccp");
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("supervised"), std::string::npos);
  EXPECT_EQ(cli("--set nope=1 --print-config simulate").code, 2);
  EXPECT_EQ(cli("--set users=lots --print-config simulate").code, 2);
}

TEST(Cli, FlagOverridesFileOverridesDefault) {
  testutil::TempDir dir;
  testutil::write_text(dir.file("c.cfg"), "users = 111\nepochs = 4\n");
  const auto r = cli("--config " + dir.file("c.cfg") + " --print-config train --epochs 9");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("users = 111\n"), std::string::npos);
  EXPECT_NE(r.out.find("epochs = 9\n"), std::string::npos);
  EXPECT_NE(r.out.find("cp = 90\n"), std::string::npos);
}

TEST(Cli, MissingDataExitsThree) {
  testutil::TempDir dir;
  EXPECT_EQ(cli("--data-dir " + dir.file("none") + " train").code, 3);
}

TEST_F(CliFlow, TrainAndEvaluateTccp) {
  const auto t = cli("--data-dir " + data() + " --out-dir " + out("tccp") + " train --mode tccp --epochs 5");
  ASSERT_EQ(t.code, 0) << t.out;
  for (const char* f : {"window.jsonl", "g_prime.json", "c.json", "weighted.jsonl", "f_model.json"})
    EXPECT_TRUE(std::filesystem::exists(out("tccp") + "/" + f)) << f;

  const auto e = cli("--data-dir " + data() + " evaluate --model " + out("tccp") + "/f_model.json --out-json " +
                     out("r.json"));
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_NE(e.out.find("TCCP"), std::string::npos);
  const auto j = tccp::Json::parse(testutil::read_text(out("r.json")));
  ASSERT_EQ(j.size(), 1u);
  EXPECT_GT(j[0]["auc"].get<double>(), 0.5);
}

TEST_F(CliFlow, SupervisedAndRules) {
  const auto t = cli("--data-dir " + data() + " --out-dir " + out("sup") + " train --mode fm --epochs 5");
  ASSERT_EQ(t.code, 0) << t.out;
  const auto e = cli("--data-dir " + data() + " evaluate --model " + out("sup") + "/model_fm.json");
  EXPECT_EQ(e.code, 0) << e.out;
  EXPECT_NE(e.out.find("OP=CP=90"), std::string::npos);

  const auto r = cli("--data-dir " + data() + " evaluate --mode rule_frequency --M 1 --D 15 --out-table " +
                     out("t.txt"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(testutil::read_text(out("t.txt")).find("M=1, D=15"), std::string::npos);

  // threshold beyond the log horizon: every user predicted churned
  const auto bad = cli("--data-dir " + data() + " evaluate --mode rule_recency --L 100000");
  EXPECT_EQ(bad.code, 3) << bad.out;
  EXPECT_NE(bad.out.find("undefined"), std::string::npos);
}

TEST_F(CliFlow, FeaturizeWritesSampleSets) {
  const auto r = cli("--data-dir " + data() + " --out-dir " + out("feat") + " featurize --op 15");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto w = tccp::read_sample_set(out("feat") + "/window.jsonl");
  EXPECT_FALSE(w.P.empty());
  EXPECT_FALSE(w.U.empty());
  EXPECT_TRUE(w.N.empty());
  const auto t = tccp::read_sample_set(out("feat") + "/test.jsonl");
  EXPECT_TRUE(t.U.empty());
}

TEST_F(CliFlow, SweepWritesOneRowPerOp) {
  const auto r = cli("--data-dir " + data() + " --out-dir " + out("sweep") + " --set epochs=2 sweep --ops 7,90");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto csv = testutil::read_text(out("sweep") + "/op_sweep.csv");
  EXPECT_EQ(csv.substr(0, 7), "op,auc\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(cli("--data-dir " + data() + " sweep --ops 7,x").code, 2);
}

TEST_F(CliFlow, DivergenceExitsFour) {
  const auto r = cli("--data-dir " + data() + " --out-dir " + out("div") +
                     " train --mode lr --learning-rate 1e305 --epochs 3");
  EXPECT_EQ(r.code, 4) << r.out;
}
