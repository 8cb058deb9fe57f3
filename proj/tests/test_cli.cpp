#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "lframes_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(LFRAMES_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kWork);
  const fs::path p = kWork / name;
  std::ofstream(p) << text;
  return p;
}

const char* kTinyTask =
    R"({"task":"normal-regression","dataset":{"points":64,"count":2,"eval_count":1},)"
    R"("train":{"steps":3,"warmup":1,"eval_every":1}})";

TEST(Cli, TrainWritesOutputsAndAuditLoadsCheckpoint) {
  const fs::path cfg = write_config("tiny.json", kTinyTask);
  const fs::path out = kWork / "train";
  fs::remove_all(out);
  ASSERT_EQ(run("train --config " + cfg.string() + " --seed 3 --refine --out " + out.string()), 0);
  for (const char* f : {"report.json", "metrics.csv", "checkpoint.bin", "checkpoint.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_NE(slurp(out / "report.json").find("\"status\": \"ok\""), std::string::npos);

  const fs::path audit = kWork / "audit";
  ASSERT_EQ(run("audit-equivariance --config " + cfg.string() + " --seed 3 --refine --samples 1 --transforms 2" +
                " --checkpoint " + (out / "checkpoint.bin").string() + " --out " + audit.string()),
            0);
  EXPECT_TRUE(fs::exists(audit / "equivariance.csv"));
}

TEST(Cli, GenDataAndStability) {
  const fs::path cfg = write_config("tiny.json", kTinyTask);
  const fs::path out = kWork / "gen";
  fs::remove_all(out);
  ASSERT_EQ(run("gen-data --config " + cfg.string() + " --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "train" / "dataset.json"));
  EXPECT_TRUE(fs::exists(out / "eval" / "dataset.json"));
  ASSERT_EQ(run("audit-stability --config " + cfg.string() + " --frames pca --samples 1 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "stability.csv"));
}

TEST(Cli, ConfigErrorsExitTwo) {
  const fs::path bad = write_config("bad.json", R"({"layers":[{"type":"decoder"}]})");
  const fs::path out = kWork / "bad";
  fs::remove_all(out);
  EXPECT_EQ(run("train --config " + bad.string() + " --out " + out.string()), 2);
  EXPECT_NE(slurp(out / "report.json").find("config_error"), std::string::npos);
  EXPECT_EQ(run("train --mode vectorial --out " + out.string()), 2);
  EXPECT_EQ(run("train --config /nonexistent.json"), 2);
  EXPECT_EQ(run("audit-stability --frames random --out " + out.string()), 2);
  EXPECT_EQ(run("sweep --fractions 0,1 --out " + out.string()), 2);
  EXPECT_EQ(run(""), 2);
}

TEST(Cli, DivergenceExitsThree) {
  const fs::path cfg = write_config(
      "diverge.json",
      R"({"task":"normal-regression","dataset":{"points":64,"count":2,"eval_count":1},)"
      R"("train":{"steps":3,"warmup":0,"lr":1e308,"clip":1e308,"eval_every":10}})");
  const fs::path out = kWork / "diverge";
  fs::remove_all(out);
  EXPECT_EQ(run("train --config " + cfg.string() + " --out " + out.string()), 3);
  EXPECT_NE(slurp(out / "report.json").find("diverged"), std::string::npos);
}

}  // namespace
