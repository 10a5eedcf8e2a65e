#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "scratch.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + PROMPTMR_CLI_PATH + " --log-level off " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tiny_overrides(const fs::path& root) {
  std::string s;
  for (const std::string& o : std::vector<std::string>{
           "simulate.ky=16", "simulate.kx=16", "simulate.coils=2", "simulate.frames=4", "simulate.train=1", "simulate.val=1",
        "simulate.test=1", "mask.acs_lines=4", "accelerations=[4]", "model.cascades=1", "model.adjacency=0",
        "model.denoiser.base_width=4", "model.sme.base_width=4", "model.denoiser.prompt.sizes=[[8,8],[4,4],[2,2]]",
        "model.sme.prompt.sizes=[[8,8],[4,4],[2,2]]", "refine.n_unets=1", "refine.features=6", "refine.base_width=4",
        "stage1.epochs=1", "stage1.steps_per_epoch=2", "stage2.epochs=1", "stage2.steps_per_epoch=1",
        "run_dir=" + (root / "run").string()}) {
    s += " --override " + o;
  }
  return s;
}

}  // namespace

TEST(Cli, HelpAndUsage) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("--override model.cascades=-1 simulate"), 2);
  EXPECT_EQ(run("--override nonsense=1 simulate"), 2);
  EXPECT_EQ(run("--config /nonexistent.yaml simulate"), 2);
  const fs::path dir = promptmr::oracle::scratch("cli_cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.yaml") << "version: 7\n";
  EXPECT_EQ(run("--config " + (dir / "bad.yaml").string() + " simulate"), 2);
}

TEST(Cli, MissingDataExitsThree) {
  const fs::path dir = promptmr::oracle::scratch("cli_data");
  EXPECT_EQ(run("train-stage1", "PROMPTMR_DATA_DIR=" + (dir / "none").string()), 3);
  EXPECT_EQ(run("evaluate --recon " + (dir / "none").string()), 3);
}

TEST(Cli, DivergenceExitsFour) {
  const fs::path root = promptmr::oracle::scratch("cli_div");
  const std::string env = "PROMPTMR_DATA_DIR=" + (root / "data").string();
  const std::string o = tiny_overrides(root);
  ASSERT_EQ(run(o + " simulate", env), 0);
  EXPECT_EQ(run(o + " --override stage1.lr=1e300 --override stage1.epochs=2 train-stage1", env), 4);
}

TEST(Cli, EndToEnd) {
  const fs::path root = promptmr::oracle::scratch("cli_e2e");
  const std::string env = "PROMPTMR_DATA_DIR=" + (root / "data").string();
  const std::string o = tiny_overrides(root) + " --seed 3";
  ASSERT_EQ(run(o + " simulate", env), 0);
  ASSERT_EQ(run(o + " train-stage1", env), 0);
  ASSERT_EQ(run(o + " train-stage1 --resume", env), 0);
  ASSERT_EQ(run(o + " train-stage2", env), 0);
  ASSERT_EQ(run(o + " reconstruct", env), 0);
  ASSERT_EQ(run(o + " evaluate", env), 0);
  ASSERT_EQ(run(o + " export-prompts --split val", env), 0);
  EXPECT_TRUE(fs::exists(root / "run" / "report.csv"));
  EXPECT_TRUE(fs::exists(root / "run" / "prompts.csv"));
  EXPECT_TRUE(fs::exists(root / "run" / "recon" / "temporal_test_000_x4" / "recon_stage2.bin"));
}
