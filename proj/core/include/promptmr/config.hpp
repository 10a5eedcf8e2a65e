#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptmr/fourier.hpp"
#include "promptmr/refine.hpp"
#include "promptmr/unrolled.hpp"

// Experiment configuration. On disk this is a YAML document with `version: 1`;
// every key is optional and falls back to the defaults below. Unknown keys are
// rejected so typos surface as configuration errors.

namespace promptmr {

inline constexpr int kConfigVersion = 1;

enum class TaskSet { temporal, contrast, all };
const char* to_string(TaskSet t);
TaskSet task_set_from_string(const std::string& s);
/// Frame axes a task set draws cases from.
std::vector<FrameAxis> task_axes(TaskSet t);

struct SimulateConfig {
  std::size_t ky = 64;
  std::size_t kx = 64;
  std::size_t coils = 4;
  std::size_t frames = 12;
  double noise_std = 0.005;
  double motion_amplitude = 0.06;
  std::array<double, 2> contrast_range{0.3, 1.0};  ///< contrast weighting ramp, first to last frame
  int train = 40;  ///< cases per frame axis
  int val = 10;
  int test = 10;
};

struct MaskConfig {
  MaskScheme scheme = MaskScheme::equispaced;
  int acs_lines = 16;
};

struct OptimConfig {
  double lr = 2e-4;
  double final_lr = 2e-5;  ///< used for the last epoch when epochs > 1
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  ///< global gradient-norm clip; 0 disables
};

struct TrainConfig {
  int epochs = 12;
  int steps_per_epoch = 0;  ///< 0: one step per training case
  int grad_accum = 1;
  int val_frames = 0;       ///< centre frames scored per validation case; 0: all
  OptimConfig optim;
};

struct ReconConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 0;
  std::filesystem::path data_dir;
  std::filesystem::path run_dir = "runs/default";
  TaskSet task = TaskSet::all;
  std::vector<int> accelerations{4, 8, 10};
  MaskConfig mask;
  SimulateConfig simulate;
  UnrolledConfig model = UnrolledConfig::defaults(ModelFamily::promptmr, 2);
  RefineConfig refine;
  TrainConfig stage1;
  TrainConfig stage2 = default_stage2();

  static TrainConfig default_stage2();
  void validate() const;
};

/// Defaults, then the YAML file (if any), then `key.path=value` overrides, then
/// `seed`. An empty data_dir falls back to $PROMPTMR_DATA_DIR, then "data".
ReconConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides = {},
                        std::optional<std::uint64_t> seed = std::nullopt);
ReconConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {});
/// Fully resolved YAML (every key spelled out).
std::string dump_config(const ReconConfig& cfg);

// Architecture encodings stored inside checkpoints.
nlohmann::json to_json(const NetConfig& c);
NetConfig net_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const UnrolledConfig& c);
UnrolledConfig unrolled_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RefineConfig& c);
RefineConfig refine_config_from_json(const nlohmann::json& j);

}  // namespace promptmr
