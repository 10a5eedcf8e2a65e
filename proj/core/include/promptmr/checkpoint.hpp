#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "promptmr/optim.hpp"
#include "promptmr/params.hpp"
#include "promptmr/refine.hpp"
#include "promptmr/unrolled.hpp"

// Checkpoints reuse the case container with magic "PROMPTMR-CKPT": the manifest
// carries `kind` ("stage1" | "stage2") and an `architecture` object; every
// parameter is one little-endian float32 array named after the parameter.
//
// Training state (for exact resume) is a separate container of kind
// "train_state": float64 parameters and optimizer moments plus counters and
// the serialised RNG.

namespace promptmr {

struct LoadedCheckpoint {
  std::string kind;
  nlohmann::json architecture;
  nlohmann::json info;
  std::map<std::string, RealArray> tensors;
};

void save_checkpoint(const std::filesystem::path& dir, const std::string& kind, const nlohmann::json& architecture,
                     const ParamStore& params, const nlohmann::json& info = nlohmann::json::object());
LoadedCheckpoint read_checkpoint(const std::filesystem::path& dir);
/// Copies every tensor into `params`; names and shapes must match exactly.
void assign_parameters(ParamStore& params, const LoadedCheckpoint& ckpt);

void save_stage1(const std::filesystem::path& dir, const UnrolledModel& model, const nlohmann::json& info = {});
UnrolledModel load_stage1(const std::filesystem::path& dir);
void save_stage2(const std::filesystem::path& dir, const Refiner& model, const nlohmann::json& info = {});
Refiner load_stage2(const std::filesystem::path& dir);

struct TrainState {
  int epoch = 0;  ///< completed epochs
  long step = 0;  ///< completed optimizer steps
  double best_val_ssim = -1.0;
  std::string rng_state;
  std::vector<double> loss_history;
};

void save_train_state(const std::filesystem::path& dir, const TrainState& state, const ParamStore& params, AdamW& opt);
/// Restores parameters and moments in place and returns the counters.
TrainState load_train_state(const std::filesystem::path& dir, ParamStore& params, AdamW& opt);

std::string serialize_rng(const std::mt19937_64& rng);
std::mt19937_64 deserialize_rng(const std::string& s);

}  // namespace promptmr
