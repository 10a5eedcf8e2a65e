#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "promptmr/config.hpp"
#include "promptmr/metrics.hpp"
#include "promptmr/phantom.hpp"
#include "promptmr/refine.hpp"
#include "promptmr/unrolled.hpp"

// Command implementations behind the CLI. Layout on disk:
//
//   <data_dir>/splits.json              split manifest
//   <data_dir>/cases/<id>/              one case container per case
//   <run_dir>/stage1/{checkpoint,state,config.yaml,train_log.csv}
//   <run_dir>/stage2/{checkpoint,state,config.yaml,train_log.csv}
//   <run_dir>/recon/<id>_x<acc>/        reconstruction containers
//   <run_dir>/report.csv, <run_dir>/prompts.csv

namespace promptmr {

namespace fs = std::filesystem;

struct CaseEntry {
  std::string id;
  FrameAxis axis = FrameAxis::temporal;
  std::string split;  ///< train | val | test
  std::uint64_t seed = 0;
};

struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<CaseEntry> cases;
  std::vector<CaseEntry> select(const std::string& split, TaskSet tasks) const;
};

SplitManifest read_splits(const fs::path& data_dir);
fs::path case_dir(const fs::path& data_dir, const std::string& id);

struct LoadedCase {
  CaseEntry entry;
  CaseRecord record;
};
std::vector<LoadedCase> load_cases(const fs::path& data_dir, const std::vector<CaseEntry>& entries);

/// The phantom description used for one case of the configured dataset.
PhantomSpec case_spec(const ReconConfig& cfg, FrameAxis axis, std::uint64_t seed);

/// Evaluation mask of a case at one acceleration; fixed by (case id, acceleration).
UndersampleMask eval_mask(const ReconConfig& cfg, const std::string& case_id, int acceleration);

SplitManifest cmd_simulate(const ReconConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  MetricAggregate val;  ///< mean validation metrics (task/model fields unused)
  bool best = false;
};

struct TrainSummary {
  std::vector<double> step_losses;  ///< every optimizer step since the start of training
  std::vector<EpochLog> epochs;     ///< epochs run by this call
  double best_val_ssim = -1.0;
  fs::path checkpoint;
};

struct TrainOptions {
  bool resume = false;
  /// Stop after this many completed epochs (counting resumed ones); -1 runs all.
  int stop_after_epochs = -1;
};

fs::path stage_dir(const ReconConfig& cfg, int stage);

TrainSummary cmd_train_stage1(const ReconConfig& cfg, const TrainOptions& opt = {});
TrainSummary cmd_train_stage2(const ReconConfig& cfg, const fs::path& stage1_checkpoint, const TrainOptions& opt = {});

/// Validation score of a Stage-I model: one row per (case, acceleration) over
/// `frames` evenly spaced centre frames (0 = all).
std::vector<MetricRow> score_stage1(const UnrolledModel& model, const std::vector<LoadedCase>& cases, const ReconConfig& cfg,
                                    int frames);

struct ReconstructOptions {
  fs::path stage1_checkpoint;
  std::optional<fs::path> stage2_checkpoint;
  std::vector<fs::path> cases;  ///< empty: the test split of the dataset
  fs::path out_dir;             ///< empty: <run_dir>/recon
};

std::vector<fs::path> cmd_reconstruct(const ReconConfig& cfg, const ReconstructOptions& opt);

/// One row per (reconstruction, stage), zero-filled rows included.
std::vector<MetricRow> cmd_evaluate(const ReconConfig& cfg, const fs::path& recon_dir, const fs::path& report_csv);

/// Prompt weights of one cascade (default: last) for every `split` case, acceleration and frame.
std::vector<PromptEmbeddingRow> cmd_export_prompts(const ReconConfig& cfg, const fs::path& stage1_checkpoint,
                                                   const fs::path& csv, const std::string& split = "test",
                                                   int cascade = -1);

}  // namespace promptmr
