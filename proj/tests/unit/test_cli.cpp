#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cfaudit/cli.hpp"

using namespace cfaudit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cfaudit_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args, std::string* err = nullptr) {
  std::ostringstream out, e;
  const int code = run_cli(args, out, e);
  if (err) *err = e.str();
  return code;
}

}  // namespace

TEST(Cli, MissingConfigFlagIsAConfigError) { EXPECT_EQ(run({"audit"}), exit_config); }

TEST(Cli, MissingConfigFileIsAConfigError) {
  std::string err;
  EXPECT_EQ(run({"audit", "--config", "/nonexistent.conf"}, &err), exit_config);
  EXPECT_NE(err.find("config_missing"), std::string::npos);
}

TEST(Cli, UnknownSettingIsRejected) {
  const fs::path dir = scratch("unknown");
  write(dir / "a.conf", "input = x.csv\nprotected = a1\nbogus = 1\n");
  EXPECT_EQ(run({"audit", "--config", (dir / "a.conf").string()}), exit_config);
}

TEST(Cli, MissingInputIsADataError) {
  const fs::path dir = scratch("nodata");
  write(dir / "a.conf", "input = absent.csv\nprotected = a1, a2\n");
  std::string err;
  EXPECT_EQ(run({"audit", "--config", (dir / "a.conf").string()}, &err), exit_data);
  EXPECT_NE(err.find("\"category\":\"data\""), std::string::npos);
}

TEST(Cli, SingleGroupIsInfeasible) {
  const fs::path dir = scratch("onegroup");
  std::string csv = "a1,d,y,s\n";
  for (int i = 0; i < 60; ++i) csv += "z," + std::to_string(i % 2) + "," + std::to_string(i % 3 == 0) + "," + std::to_string(i % 5 < 2) + "\n";
  write(dir / "d.csv", csv);
  write(dir / "a.conf", "input = d.csv\nprotected = a1\npermutations = 0\nbootstrap = 0\n");
  EXPECT_EQ(run({"audit", "--config", (dir / "a.conf").string(), "--out", (dir / "out").string()}), exit_infeasible);
}

TEST(Cli, SimulateThenAuditProducesAReport) {
  const fs::path dir = scratch("pipeline");
  write(dir / "sim.conf", "kind = scenario\nscenario = 2\nn = 1200\nseed = 3\nforest.trees = 20\n");
  ASSERT_EQ(run({"simulate", "--config", (dir / "sim.conf").string(), "--out", (dir / "sim").string()}), exit_ok);
  EXPECT_TRUE(fs::exists(dir / "sim" / "hidden_truth.csv"));
  write(dir / "sim" / "run.conf",
        "input = data.csv\nprotected = a1, a2\ncovariates = x1, x2, x3, x4\npermutations = 100\nbootstrap = 200\n");
  ASSERT_EQ(run({"audit", "--config", (dir / "sim" / "run.conf").string(), "--out", (dir / "a").string(), "--seed",
                 "4"}),
            exit_ok);
  const std::string report = slurp(dir / "a" / "report.json");
  EXPECT_NE(report.find("\"u_value\""), std::string::npos);
  EXPECT_EQ(report.find("hidden_truth"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "a" / "plot_metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "reference_samples.csv"));
}

TEST(Cli, OutputDirectoryDoesNotChangeContents) {
  const fs::path dir = scratch("determinism");
  write(dir / "g.conf", "scenarios = 1\nsizes = 300\nmethods = weighted-glm\nreps = 3\nseed = 5\n"
                        "validation_size = 2000\nscenario1.forest.trees = 10\n");
  ASSERT_EQ(run({"replicate", "--config", (dir / "g.conf").string(), "--out", (dir / "x").string()}), exit_ok);
  ASSERT_EQ(run({"replicate", "--config", (dir / "g.conf").string(), "--out", (dir / "y").string(), "--threads", "1"}),
            exit_ok);
  for (const char* f : {"replicates.csv", "summary.csv", "truth.csv", "manifest.json"})
    EXPECT_EQ(slurp(dir / "x" / f), slurp(dir / "y" / f)) << f;
}

TEST(Cli, LiteralNormalizationFlagReachesTheReport) {
  const fs::path dir = scratch("literal");
  write(dir / "sim.conf", "kind = demo\npanel = A\nvalues = 0.5\nn = 2000\n");
  ASSERT_EQ(run({"simulate", "--config", (dir / "sim.conf").string(), "--out", dir.string()}), exit_ok);
  write(dir / "a.conf", "input = demo_A_0.5.csv\nprotected = a1, a2\npermutations = 0\nbootstrap = 0\n");
  ASSERT_EQ(run({"audit", "--config", (dir / "a.conf").string(), "--out", (dir / "r").string(),
                 "--paper-literal-normalization"}),
            exit_ok);
  EXPECT_NE(slurp(dir / "r" / "report.json").find("paper-literal"), std::string::npos);
}
