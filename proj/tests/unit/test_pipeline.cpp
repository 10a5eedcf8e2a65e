#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "promptmr/checkpoint.hpp"
#include "promptmr/error.hpp"
#include "promptmr/pipeline.hpp"
#include "scratch.hpp"

using namespace promptmr;
namespace fs = std::filesystem;

namespace {

const char* kTinyYaml = R"(
seed: 1
task: all
accelerations: [4, 8]
mask:
  acs_lines: 4
simulate:
  ky: 16
  kx: 16
  coils: 2
  frames: 4
  train: 2
  val: 1
  test: 1
model:
  cascades: 2
  adjacency: 1
  denoiser:
    base_width: 4
    cab_per_block: 1
    reduction: 2
    prompt:
      components: [3, 3, 3]
      sizes: [[8, 8], [4, 4], [2, 2]]
  sme:
    base_width: 4
    cab_per_block: 1
    reduction: 2
    prompt:
      components: [3, 3, 3]
      sizes: [[8, 8], [4, 4], [2, 2]]
refine:
  n_unets: 1
  features: 6
  base_width: 4
  reduction: 2
stage1:
  epochs: 3
  steps_per_epoch: 3
  lr: 0.003
  final_lr: 0.001
  val_frames: 1
stage2:
  epochs: 2
  steps_per_epoch: 2
  lr: 0.002
)";

ReconConfig tiny(const std::string& name, std::vector<std::string> overrides = {}) {
  const fs::path root = oracle::scratch(name);
  overrides.push_back("data_dir=" + (root / "data").string());
  overrides.push_back("run_dir=" + (root / "run").string());
  return parse_config(kTinyYaml, overrides);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Simulate, WritesDisjointSplits) {
  const ReconConfig cfg = tiny("sim_splits");
  const SplitManifest m = cmd_simulate(cfg);
  EXPECT_EQ(m.cases.size(), 8u);
  std::set<std::string> ids;
  std::set<std::uint64_t> seeds;
  for (const auto& c : m.cases) {
    ids.insert(c.id);
    seeds.insert(c.seed);
    EXPECT_TRUE(fs::exists(case_dir(cfg.data_dir, c.id) / "manifest.json"));
  }
  EXPECT_EQ(ids.size(), m.cases.size());
  EXPECT_EQ(seeds.size(), m.cases.size());
  EXPECT_EQ(m.select("train", TaskSet::all).size(), 4u);
  EXPECT_EQ(m.select("train", TaskSet::temporal).size(), 2u);
  EXPECT_EQ(m.select("test", TaskSet::contrast).size(), 1u);

  const SplitManifest back = read_splits(cfg.data_dir);
  ASSERT_EQ(back.cases.size(), m.cases.size());
  for (std::size_t i = 0; i < m.cases.size(); ++i) {
    EXPECT_EQ(back.cases[i].id, m.cases[i].id);
    EXPECT_EQ(back.cases[i].seed, m.cases[i].seed);
    EXPECT_EQ(back.cases[i].axis, m.cases[i].axis);
  }
}

TEST(Simulate, DeterministicAndSeedSensitive) {
  const ReconConfig a = tiny("sim_det_a");
  const ReconConfig b = tiny("sim_det_b");
  const ReconConfig c = tiny("sim_det_c", {"seed=2"});
  cmd_simulate(a);
  cmd_simulate(b);
  cmd_simulate(c);
  const std::string id = "temporal_train_000";
  EXPECT_EQ(slurp(case_dir(a.data_dir, id) / "kspace.bin"), slurp(case_dir(b.data_dir, id) / "kspace.bin"));
  EXPECT_NE(slurp(case_dir(a.data_dir, id) / "kspace.bin"), slurp(case_dir(c.data_dir, id) / "kspace.bin"));
}

TEST(Simulate, MissingManifestIsDataError) {
  const ReconConfig cfg = tiny("sim_missing");
  EXPECT_THROW(read_splits(cfg.data_dir), DataError);
  EXPECT_THROW(cmd_train_stage1(cfg), DataError);
}

TEST(EvalMask, FixedPerCaseAndAcceleration) {
  const ReconConfig cfg = tiny("evalmask", {"mask.scheme=random"});
  EXPECT_EQ(eval_mask(cfg, "a", 4), eval_mask(cfg, "a", 4));
  EXPECT_EQ(eval_mask(cfg, "a", 4).acceleration, 4);
  EXPECT_EQ(eval_mask(cfg, "a", 8).acceleration, 8);
}

TEST(Simulate, ContrastRangeSetsSchedule) {
  const ReconConfig cfg = tiny("contrast_range", {"simulate.contrast_range=[0.1, 0.7]"});
  const PhantomSpec c = case_spec(cfg, FrameAxis::contrast, 5);
  ASSERT_EQ(c.contrast_schedule.size(), 4u);
  EXPECT_DOUBLE_EQ(c.contrast_schedule.front(), 0.1);
  EXPECT_DOUBLE_EQ(c.contrast_schedule.back(), 0.7);
  EXPECT_TRUE(case_spec(cfg, FrameAxis::temporal, 5).contrast_schedule.empty());

  const PhantomSpec d = case_spec(tiny("contrast_default"), FrameAxis::contrast, 5);
  PhantomSpec plain = d;
  plain.contrast_schedule.clear();
  for (std::size_t f = 0; f < d.n_frames; ++f) EXPECT_EQ(d.schedule_at(f), plain.schedule_at(f)) << f;
  EXPECT_THROW(tiny("contrast_bad", {"simulate.contrast_range=[0, 1]"}).validate(), ConfigError);
}

TEST(TrainStage1, SmokeWritesArtifacts) {
  const ReconConfig cfg = tiny("s1_smoke");
  cmd_simulate(cfg);
  const TrainSummary s = cmd_train_stage1(cfg);
  EXPECT_EQ(s.epochs.size(), 3u);
  EXPECT_EQ(s.step_losses.size(), 9u);
  for (double l : s.step_losses) EXPECT_TRUE(std::isfinite(l));
  EXPECT_GT(s.best_val_ssim, 0.0);
  EXPECT_DOUBLE_EQ(s.epochs.back().lr, 0.001);
  EXPECT_DOUBLE_EQ(s.epochs.front().lr, 0.003);
  const fs::path dir = stage_dir(cfg, 1);
  EXPECT_NO_THROW(load_stage1(dir / "checkpoint"));
  EXPECT_TRUE(fs::exists(dir / "config.yaml"));
  EXPECT_TRUE(fs::exists(dir / "state" / "manifest.json"));
  const std::string log = slurp(dir / "train_log.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
}

TEST(TrainStage1, ResumeReproducesLossTrajectory) {
  const ReconConfig cfg = tiny("s1_resume");
  cmd_simulate(cfg);
  const TrainSummary full = cmd_train_stage1(cfg);

  const ReconConfig cfg2 = tiny("s1_resume_split");
  cmd_simulate(cfg2);
  const TrainSummary first = cmd_train_stage1(cfg2, TrainOptions{false, 1});
  EXPECT_EQ(first.step_losses.size(), 3u);
  const TrainSummary rest = cmd_train_stage1(cfg2, TrainOptions{true, -1});
  EXPECT_EQ(rest.epochs.size(), 2u);
  ASSERT_EQ(rest.step_losses.size(), full.step_losses.size());
  for (std::size_t i = 0; i < full.step_losses.size(); ++i) EXPECT_EQ(rest.step_losses[i], full.step_losses[i]) << i;
  EXPECT_EQ(rest.best_val_ssim, full.best_val_ssim);
}

TEST(TrainStage1, LossDecreasesOverTwoHundredSteps) {
  std::vector<double> first, last;
  for (std::uint64_t seed : {1, 2, 3}) {
    const ReconConfig cfg = tiny("s1_trend_" + std::to_string(seed),
                                 {"seed=" + std::to_string(seed), "stage1.epochs=1", "stage1.steps_per_epoch=200",
                                  "stage1.val_frames=1", "accelerations=[4]"});
    cmd_simulate(cfg);
    const TrainSummary s = cmd_train_stage1(cfg);
    ASSERT_EQ(s.step_losses.size(), 200u);
    first.push_back(s.step_losses.front());
    last.push_back(s.step_losses.back());
  }
  std::sort(first.begin(), first.end());
  std::sort(last.begin(), last.end());
  EXPECT_LT(last[1], first[1]);
}

TEST(TrainStage1, NonFiniteLossIsDivergence) {
  const ReconConfig cfg = tiny("s1_diverge", {"stage1.lr=1e300", "stage1.epochs=2"});
  cmd_simulate(cfg);
  EXPECT_THROW(cmd_train_stage1(cfg), DivergenceError);
}

TEST(TrainStage2, SmokeNeverWorseThanIdentityOnValidation) {
  const ReconConfig cfg = tiny("s2_smoke");
  cmd_simulate(cfg);
  const TrainSummary s1 = cmd_train_stage1(cfg);
  const TrainSummary s2 = cmd_train_stage2(cfg, s1.checkpoint);
  EXPECT_EQ(s2.epochs.size(), 2u);
  const auto ck = read_checkpoint(s2.checkpoint);
  EXPECT_EQ(ck.kind, "stage2");
  EXPECT_GE(s2.best_val_ssim, 0.0);
  EXPECT_NO_THROW(load_stage2(s2.checkpoint));
}

TEST(Reconstruct, ContainersAndReport) {
  const ReconConfig cfg = tiny("recon");
  cmd_simulate(cfg);
  const TrainSummary s1 = cmd_train_stage1(cfg, TrainOptions{false, 1});
  const TrainSummary s2 = cmd_train_stage2(cfg, s1.checkpoint, TrainOptions{false, 1});

  ReconstructOptions o;
  o.stage1_checkpoint = s1.checkpoint;
  o.stage2_checkpoint = s2.checkpoint;
  const auto dirs = cmd_reconstruct(cfg, o);
  ASSERT_EQ(dirs.size(), 4u);  // 2 test cases x 2 accelerations

  const Container c = read_container(dirs.front(), kCaseMagic);
  EXPECT_EQ(c.kind, "reconstruction");
  for (const char* a : {"kspace", "target", "sens_true", "zero_filled", "recon_stage1", "recon_stage2", "mask"})
    EXPECT_TRUE(c.has(a)) << a;
  EXPECT_EQ(c.meta.at("stages").size(), 3u);
  EXPECT_EQ(c.real("recon_stage1").shape(), c.real("target").shape());
  const int acc = c.meta.at("acceleration");
  const UndersampleMask m = eval_mask(cfg, c.meta.at("case_id"), acc);
  for (std::size_t i = 0; i < m.ky(); ++i) EXPECT_EQ(c.real("mask")[i], m.keep[i]);

  const fs::path report = cfg.run_dir / "report.csv";
  const auto rows = cmd_evaluate(cfg, cfg.run_dir / "recon", report);
  EXPECT_EQ(rows.size(), 12u);
  EXPECT_EQ(std::count_if(rows.begin(), rows.end(), [](const MetricRow& r) { return r.stage == "zero_filled"; }), 4);
  EXPECT_EQ(read_report_csv(report).size(), rows.size());

  EXPECT_THROW(cmd_evaluate(cfg, cfg.run_dir / "nothing", ""), DataError);
}

TEST(ExportPrompts, OneRowPerFrameAccelerationLevel) {
  const ReconConfig cfg = tiny("prompts");
  cmd_simulate(cfg);
  const TrainSummary s1 = cmd_train_stage1(cfg, TrainOptions{false, 1});
  const fs::path csv = cfg.run_dir / "prompts.csv";
  const auto rows = cmd_export_prompts(cfg, s1.checkpoint, csv);
  EXPECT_EQ(rows.size(), 2u * 2u * 4u * 3u);  // cases x accelerations x frames x levels
  for (const auto& r : rows) EXPECT_EQ(r.cascade, 1);
  EXPECT_TRUE(fs::exists(csv));
}

TEST(ExportPrompts, BaselineIsConfigError) {
  const ReconConfig cfg = tiny("prompts_base", {"model.family=baseline_caunet"});
  cmd_simulate(cfg);
  const TrainSummary s1 = cmd_train_stage1(cfg, TrainOptions{false, 1});
  EXPECT_THROW(cmd_export_prompts(cfg, s1.checkpoint, ""), ConfigError);
}
