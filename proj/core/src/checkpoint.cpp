#include "promptmr/checkpoint.hpp"

#include <sstream>

#include "promptmr/container.hpp"
#include "promptmr/error.hpp"

namespace promptmr {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& dir, const std::string& kind, const json& architecture,
                     const ParamStore& params, const json& info) {
  Container c;
  c.magic = kCheckpointMagic;
  c.kind = kind;
  c.meta["architecture"] = architecture;
  c.meta["info"] = info.is_null() ? json::object() : info;
  json order = json::array();
  for (const auto& [name, v] : params.entries()) {
    c.put(name, v.array(), {}, DType::float32);
    order.push_back(name);
  }
  c.meta["parameter_order"] = order;
  write_container(c, dir);
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& dir) {
  const Container c = read_container(dir, kCheckpointMagic);
  LoadedCheckpoint out;
  out.kind = c.kind;
  if (!c.meta.contains("architecture")) throw FormatError("architecture", "missing");
  out.architecture = c.meta.at("architecture");
  out.info = c.meta.value("info", json::object());
  for (const auto& [name, a] : c.arrays) out.tensors.emplace(name, c.real(name));
  return out;
}

void assign_parameters(ParamStore& params, const LoadedCheckpoint& ckpt) {
  if (ckpt.tensors.size() != params.entries().size()) {
    throw FormatError("arrays", "checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                                    std::to_string(params.entries().size()));
  }
  for (const auto& [name, v] : params.entries()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw FormatError("arrays", "missing parameter '" + name + "'");
    if (it->second.shape() != v.shape()) {
      throw FormatError("arrays." + name + ".shape", shape_str(it->second.shape()) + " vs model " + shape_str(v.shape()));
    }
    ag::Var dst = v;
    std::copy(it->second.vec().begin(), it->second.vec().end(), dst.mutable_value().begin());
  }
}

void save_stage1(const std::filesystem::path& dir, const UnrolledModel& model, const json& info) {
  save_checkpoint(dir, "stage1", to_json(model.config()), model.params(), info);
}

UnrolledModel load_stage1(const std::filesystem::path& dir) {
  const LoadedCheckpoint ck = read_checkpoint(dir);
  if (ck.kind != "stage1") throw FormatError("kind", "expected a stage1 checkpoint, found '" + ck.kind + "'");
  UnrolledModel model(unrolled_config_from_json(ck.architecture), 0);
  assign_parameters(model.params(), ck);
  return model;
}

void save_stage2(const std::filesystem::path& dir, const Refiner& model, const json& info) {
  save_checkpoint(dir, "stage2", to_json(model.config()), model.params(), info);
}

Refiner load_stage2(const std::filesystem::path& dir) {
  const LoadedCheckpoint ck = read_checkpoint(dir);
  if (ck.kind != "stage2") throw FormatError("kind", "expected a stage2 checkpoint, found '" + ck.kind + "'");
  Refiner model(refine_config_from_json(ck.architecture), 0);
  assign_parameters(model.params(), ck);
  return model;
}

// ---- train state ----------------------------------------------------------------------

std::string serialize_rng(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 deserialize_rng(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw FormatError("rng_state", "cannot parse generator state");
  return rng;
}

void save_train_state(const std::filesystem::path& dir, const TrainState& state, const ParamStore& params, AdamW& opt) {
  Container c;
  c.magic = kCheckpointMagic;
  c.kind = "train_state";
  c.meta["epoch"] = state.epoch;
  c.meta["step"] = state.step;
  c.meta["optimizer_steps"] = opt.steps();
  c.meta["best_val_ssim"] = state.best_val_ssim;
  c.meta["rng_state"] = state.rng_state;
  std::size_t k = 0;
  for (const auto& [name, v] : params.entries()) {
    c.put("param." + name, v.array(), {}, DType::float64);
    c.put("adam_m." + name, RealArray(v.shape(), opt.first_moments()[k]), {}, DType::float64);
    c.put("adam_v." + name, RealArray(v.shape(), opt.second_moments()[k]), {}, DType::float64);
    ++k;
  }
  c.put("loss_history", RealArray({state.loss_history.size()}, state.loss_history), {"step"}, DType::float64);
  write_container(c, dir);
}

TrainState load_train_state(const std::filesystem::path& dir, ParamStore& params, AdamW& opt) {
  const Container c = read_container(dir, kCheckpointMagic);
  if (c.kind != "train_state") throw FormatError("kind", "expected train_state, found '" + c.kind + "'");
  TrainState s;
  try {
    s.epoch = c.meta.at("epoch");
    s.step = c.meta.at("step");
    s.best_val_ssim = c.meta.at("best_val_ssim");
    s.rng_state = c.meta.at("rng_state");
    opt.set_steps(c.meta.at("optimizer_steps"));
  } catch (const json::exception& e) {
    throw FormatError("train_state", e.what());
  }
  std::size_t k = 0;
  for (const auto& [name, v] : params.entries()) {
    const RealArray& p = c.real("param." + name);
    if (p.shape() != v.shape()) throw FormatError("param." + name, "shape mismatch");
    ag::Var dst = v;
    std::copy(p.vec().begin(), p.vec().end(), dst.mutable_value().begin());
    opt.first_moments()[k] = c.real("adam_m." + name).vec();
    opt.second_moments()[k] = c.real("adam_v." + name).vec();
    ++k;
  }
  s.loss_history = c.real("loss_history").vec();
  return s;
}

}  // namespace promptmr
