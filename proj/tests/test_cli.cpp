#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() / ("capulse_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  Result run(const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(CAPULSE_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  // Small model and dataset so the whole pipeline runs in seconds.
  std::string small() const {
    return "--set synth.length=480 --set synth.dims=2 --set synth.periods=20:1.0 --set synth.noise_std=0.1 "
           "--set synth.anomalies=spike:400:6:4.0 --set window=24 --set stride=6 --set hidden_dim=6 "
           "--set slots=2 --set top_k=2 --set blocks=1 --set epochs=2 --set batch_size=8 --set score_stride=6";
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_F(Cli, FullPipelineProducesAuroc) {
  ASSERT_EQ(run("gen --seed 3 --out " + p("data") + " " + small()).code, 0);
  ASSERT_TRUE(fs::exists(dir / "data" / "data.csv"));

  const auto tr = run("train --seed 3 --data " + p("data/data.csv") + " --out " + p("model") + " " + small());
  ASSERT_EQ(tr.code, 0) << tr.err;
  for (const char* f : {"checkpoint.json", "history.csv", "config.txt"}) EXPECT_TRUE(fs::exists(dir / "model" / f)) << f;

  const auto sc = run("score --data " + p("data/data.csv") + " --checkpoint " + p("model/checkpoint.json") + " --out " +
                      p("scores") + " " + small());
  ASSERT_EQ(sc.code, 0) << sc.err;
  for (const char* f : {"scores.csv", "histogram.csv", "periods.csv", "summary.json"})
    EXPECT_TRUE(fs::exists(dir / "scores" / f)) << f;

  const auto ev = run("eval --scores " + p("scores/scores.csv") + " --out " + p("eval"));
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto j = nlohmann::json::parse(ev.out);
  ASSERT_TRUE(j.contains("auroc"));
  EXPECT_GE(j["auroc"].get<double>(), 0.0);
  EXPECT_LE(j["auroc"].get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(dir / "eval" / "summary.json"));
}

TEST_F(Cli, InspectReportsGlobalPeriod) {
  // Pure sine; the period is discovered on the training split (first 600
  // rows), which holds a whole number of cycles.
  const std::string sine = "--set synth.length=1000 --set synth.dims=1 --set synth.periods=20:1.0 "
                           "--set synth.noise_std=0 --set synth.anomalies=none";
  ASSERT_EQ(run("gen --seed 1 --out " + p("data") + " " + sine).code, 0);
  const auto r = run("inspect --data " + p("data/data.csv") + " --out " + p("inspect") + " " + sine);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("global_period 20\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("top_k_periods 20"), std::string::npos) << r.out;
  const auto j = nlohmann::json::parse(slurp(dir / "inspect" / "inspect.json"));
  EXPECT_EQ(j["global_period"], 20);
  EXPECT_GT(j["periodicity_strength"]["x0"].get<double>(), 0.99);
}

TEST_F(Cli, TrainingIsByteReproducible) {
  ASSERT_EQ(run("gen --seed 2 --out " + p("data") + " " + small()).code, 0);
  const auto data_before = slurp(dir / "data" / "data.csv");
  ASSERT_EQ(run("train --seed 2 --data " + p("data/data.csv") + " --out " + p("a") + " " + small()).code, 0);
  ASSERT_EQ(run("train --seed 2 --data " + p("data/data.csv") + " --out " + p("b") + " " + small()).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "history.csv"), slurp(dir / "b" / "history.csv"));
  EXPECT_EQ(slurp(dir / "a" / "checkpoint.json"), slurp(dir / "b" / "checkpoint.json"));
  EXPECT_EQ(slurp(dir / "data" / "data.csv"), data_before);
}

TEST_F(Cli, EchoedConfigReproducesTheRun) {
  ASSERT_EQ(run("gen --seed 4 --out " + p("data") + " " + small()).code, 0);
  ASSERT_EQ(run("train --seed 4 --data " + p("data/data.csv") + " --out " + p("a") + " " + small()).code, 0);
  const auto r = run("train --config " + p("a/config.txt") + " --out " + p("b"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "a" / "history.csv"), slurp(dir / "b" / "history.csv"));
}

TEST_F(Cli, SeedFlagOverridesConfigAndSet) {
  ASSERT_EQ(run("gen --out " + p("a") + " --set seed=5 " + small()).code, 0);
  ASSERT_EQ(run("gen --seed 6 --out " + p("b") + " --set seed=5 " + small()).code, 0);
  EXPECT_NE(slurp(dir / "a" / "data.csv"), slurp(dir / "b" / "data.csv"));
  EXPECT_NE(slurp(dir / "b" / "config.txt").find("seed = 6\n"), std::string::npos);
}

TEST_F(Cli, MissingCheckpointIsAOneLineJsonError) {
  ASSERT_EQ(run("gen --seed 1 --out " + p("data") + " " + small()).code, 0);
  const auto r = run("score --data " + p("data/data.csv") + " --checkpoint " + p("nope.json") + " --out " + p("s"));
  EXPECT_NE(r.code, 0);
  ASSERT_FALSE(r.err.empty());
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << r.err;
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_TRUE(j.contains("error"));
  EXPECT_NE(j["message"].get<std::string>().find("nope.json"), std::string::npos);
}

TEST_F(Cli, ConfigErrorNamesTheKey) {
  const auto r = run("gen --out " + p("g") + " --set no_such_key=1");
  EXPECT_NE(r.code, 0);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j["key"], "no_such_key");

  std::ofstream(dir / "bad.txt") << "window = 60\nepochs = many\n";
  const auto f = run("gen --out " + p("g") + " --config " + p("bad.txt"));
  EXPECT_NE(f.code, 0);
  EXPECT_EQ(nlohmann::json::parse(f.err)["key"], "epochs");
}

TEST_F(Cli, UsageErrorsExitNonZero) {
  EXPECT_NE(run("").code, 0);
  EXPECT_NE(run("frobnicate").code, 0);
  EXPECT_NE(run("eval").code, 0);  // --scores is required
  EXPECT_EQ(run("--help").code, 0);
}
