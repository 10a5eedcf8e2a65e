#include "promptmr/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "promptmr/error.hpp"

namespace promptmr {

using nlohmann::json;

const char* to_string(TaskSet t) {
  switch (t) {
    case TaskSet::temporal: return "temporal";
    case TaskSet::contrast: return "contrast";
    case TaskSet::all: return "all";
  }
  return "?";
}

TaskSet task_set_from_string(const std::string& s) {
  if (s == "temporal") return TaskSet::temporal;
  if (s == "contrast") return TaskSet::contrast;
  if (s == "all" || s == "all-in-one") return TaskSet::all;
  throw ConfigError("unknown task set '" + s + "' (temporal | contrast | all)");
}

std::vector<FrameAxis> task_axes(TaskSet t) {
  switch (t) {
    case TaskSet::temporal: return {FrameAxis::temporal};
    case TaskSet::contrast: return {FrameAxis::contrast};
    case TaskSet::all: return {FrameAxis::temporal, FrameAxis::contrast};
  }
  return {};
}

TrainConfig ReconConfig::default_stage2() {
  TrainConfig t;
  t.epochs = 6;
  return t;
}

void ReconConfig::validate() const {
  if (version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(version));
  if (accelerations.empty()) throw ConfigError("accelerations must not be empty");
  for (int a : accelerations)
    if (a < 1) throw ConfigError("accelerations must be >= 1");
  if (mask.acs_lines < 1 || static_cast<std::size_t>(mask.acs_lines) >= simulate.ky) {
    throw ConfigError("mask.acs_lines must be in [1, simulate.ky)");
  }
  if (simulate.train < 0 || simulate.val < 0 || simulate.test < 0) throw ConfigError("simulate split sizes must be >= 0");
  if (simulate.ky < 8 || simulate.kx < 8) throw ConfigError("simulate grid must be at least 8x8");
  for (double v : simulate.contrast_range)
    if (!(v > 0.0 && v <= 4.0)) throw ConfigError("simulate.contrast_range entries must be in (0, 4]");
  for (const TrainConfig* t : {&stage1, &stage2}) {
    if (t->epochs < 1) throw ConfigError("epochs must be >= 1");
    if (t->steps_per_epoch < 0 || t->grad_accum < 1 || t->val_frames < 0) throw ConfigError("invalid training schedule");
    if (!(t->optim.lr > 0.0) || !(t->optim.final_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (t->optim.weight_decay < 0.0 || t->optim.clip_norm < 0.0) throw ConfigError("weight_decay/clip_norm must be >= 0");
    if (!(t->optim.beta1 >= 0.0 && t->optim.beta1 < 1.0 && t->optim.beta2 >= 0.0 && t->optim.beta2 < 1.0)) {
      throw ConfigError("optimizer betas must be in [0, 1)");
    }
  }
  model.validate();
  refine.validate();
}

// ---- YAML <-> JSON --------------------------------------------------------------

namespace {

json scalar_to_json(const YAML::Node& n) {
  const std::string s = n.Scalar();
  if (n.Tag() == "!") return s;  // quoted
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  if (s.empty() || s == "~" || s == "null") return nullptr;
  long long i = 0;
  auto [pi, ei] = std::from_chars(s.data(), s.data() + s.size(), i);
  if (ei == std::errc() && pi == s.data() + s.size()) return i;
  double d = 0.0;
  auto [pd, ed] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (ed == std::errc() && pd == s.data() + s.size()) return d;
  return s;
}

json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return o;
    }
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& v : n) a.push_back(yaml_to_json(v));
      return a;
    }
    case YAML::NodeType::Scalar: return scalar_to_json(n);
    default: return nullptr;
  }
}

std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void emit(YAML::Emitter& out, const json& j) {
  if (j.is_object()) {
    out << YAML::BeginMap;
    for (const auto& [k, v] : j.items()) {
      out << YAML::Key << k << YAML::Value;
      emit(out, v);
    }
    out << YAML::EndMap;
  } else if (j.is_array()) {
    const bool flat = std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_primitive(); });
    out << (flat ? YAML::Flow : YAML::Block) << YAML::BeginSeq;
    for (const auto& v : j) emit(out, v);
    out << YAML::EndSeq;
  } else if (j.is_boolean()) {
    out << (j.get<bool>() ? "true" : "false");
  } else if (j.is_number_float()) {
    out << format_double(j.get<double>());
  } else if (j.is_number()) {
    out << j.dump();
  } else if (j.is_null()) {
    out << YAML::Null;
  } else {
    out << j.get<std::string>();
  }
}

YAML::Node load_yaml(const std::string& text, const std::string& where) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' is not key=value");
  const std::string key = spec.substr(0, eq);
  const json value = yaml_to_json(load_yaml(spec.substr(eq + 1), "override '" + spec + "'"));
  json* node = &root;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("override '" + spec + "' has an empty key segment");
    if (!node->is_object()) *node = json::object();
    node = &(*node)[parts[i]];
  }
  *node = value;
}

// Strict object reader: remembers consumed keys and rejects leftovers.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_null() && !j_.is_object()) throw ConfigError(where() + " must be a mapping");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (j_.is_null() || !j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  void get_double(const std::string& key, double& out) {
    seen_.insert(key);
    if (j_.is_null() || !j_.contains(key) || j_.at(key).is_null()) return;
    if (!j_.at(key).is_number()) throw ConfigError(where(key) + " must be a number");
    out = j_.at(key).get<double>();
  }

  template <class E, class F>
  void get_enum(const std::string& key, E& out, F parse) {
    std::string s;
    get(key, s);
    if (!s.empty()) {
      try {
        out = parse(s);
      } catch (const std::exception& e) {
        throw ConfigError(where(key) + ": " + e.what());
      }
    }
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    static const json null_json;
    if (j_.is_null() || !j_.contains(key)) return Reader(null_json, where(key));
    return Reader(j_.at(key), where(key));
  }

  void finish() const {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + where(k) + "'");
  }

 private:
  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json optim_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"steps_per_epoch", t.steps_per_epoch},
          {"grad_accum", t.grad_accum},
          {"val_frames", t.val_frames},
          {"lr", t.optim.lr},
          {"final_lr", t.optim.final_lr},
          {"weight_decay", t.optim.weight_decay},
          {"beta1", t.optim.beta1},
          {"beta2", t.optim.beta2},
          {"eps", t.optim.eps},
          {"clip_norm", t.optim.clip_norm}};
}

void read_train(Reader r, TrainConfig& t) {
  r.get("epochs", t.epochs);
  r.get("steps_per_epoch", t.steps_per_epoch);
  r.get("grad_accum", t.grad_accum);
  r.get("val_frames", t.val_frames);
  r.get_double("lr", t.optim.lr);
  r.get_double("final_lr", t.optim.final_lr);
  r.get_double("weight_decay", t.optim.weight_decay);
  r.get_double("beta1", t.optim.beta1);
  r.get_double("beta2", t.optim.beta2);
  r.get_double("eps", t.optim.eps);
  r.get_double("clip_norm", t.optim.clip_norm);
  r.finish();
}

json prompt_json(const PromptConfig& p) {
  json comps = json::array(), sizes = json::array(), chans = json::array();
  for (const auto& l : p.levels) {
    comps.push_back(l.components);
    sizes.push_back(json::array({l.height, l.width}));
    chans.push_back(l.channels);
  }
  return {{"components", comps}, {"sizes", sizes}, {"channels", chans}};
}

void read_prompt(Reader r, PromptConfig& p) {
  std::vector<int> comps, chans;
  json sizes;
  r.get("components", comps);
  r.get("channels", chans);
  r.get("sizes", sizes);
  r.finish();
  auto check_len = [](std::size_t n, const char* what) {
    if (n != 0 && n != static_cast<std::size_t>(kUnetLevels)) {
      throw ConfigError(std::string("prompt.") + what + " needs one entry per decoder level (3)");
    }
  };
  check_len(comps.size(), "components");
  check_len(chans.size(), "channels");
  if (!sizes.is_null()) check_len(sizes.size(), "sizes");
  for (std::size_t l = 0; l < static_cast<std::size_t>(kUnetLevels); ++l) {
    if (!comps.empty()) p.levels[l].components = comps[l];
    if (!chans.empty()) p.levels[l].channels = chans[l];
    if (!sizes.is_null()) {
      const json& s = sizes[l];
      if (s.is_number_integer()) {
        p.levels[l].height = p.levels[l].width = s.get<int>();
      } else if (s.is_array() && s.size() == 2) {
        p.levels[l].height = s[0].get<int>();
        p.levels[l].width = s[1].get<int>();
      } else {
        throw ConfigError("prompt.sizes entries must be N or [H, W]");
      }
    }
  }
}

json net_json(const NetConfig& n) {
  json j = {{"base_width", n.base_width}, {"cab_per_block", n.cab_per_block}, {"reduction", n.reduction}};
  j["prompt"] = prompt_json(n.prompt.value_or(PromptConfig{}));
  return j;
}

void read_net(Reader r, NetConfig& n) {
  r.get("base_width", n.base_width);
  r.get("cab_per_block", n.cab_per_block);
  r.get("reduction", n.reduction);
  PromptConfig p = n.prompt.value_or(PromptConfig{});
  read_prompt(r.child("prompt"), p);
  n.prompt = p;
  r.finish();
}

json config_json(const ReconConfig& c) {
  json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["data_dir"] = c.data_dir.string();
  j["run_dir"] = c.run_dir.string();
  j["task"] = to_string(c.task);
  j["accelerations"] = c.accelerations;
  j["mask"] = {{"scheme", to_string(c.mask.scheme)}, {"acs_lines", c.mask.acs_lines}};
  const auto& s = c.simulate;
  j["simulate"] = {{"ky", s.ky},         {"kx", s.kx},     {"coils", s.coils},
                   {"frames", s.frames}, {"noise_std", s.noise_std}, {"motion_amplitude", s.motion_amplitude},
                   {"contrast_range", s.contrast_range},
                   {"train", s.train},   {"val", s.val},   {"test", s.test}};
  const auto& m = c.model;
  j["model"] = {{"family", to_string(m.family)}, {"cascades", m.cascades},     {"adjacency", m.adjacency},
                {"share_weights", m.share_weights}, {"eta_init", m.eta_init}, {"denoiser", net_json(m.denoiser)},
                {"sme", net_json(m.sme)}};
  const auto& r = c.refine;
  j["refine"] = {{"n_unets", r.n_unets},
                 {"features", r.features},
                 {"shift_groups", r.shift_groups},
                 {"shift_offsets", r.shift_offsets},
                 {"boundary", r.boundary ? to_string(*r.boundary) : "auto"},
                 {"base_width", r.unet.base_width},
                 {"cab_per_block", r.unet.cab_per_block},
                 {"reduction", r.unet.reduction}};
  j["stage1"] = optim_json(c.stage1);
  j["stage2"] = optim_json(c.stage2);
  return j;
}

ReconConfig config_from_json(const json& j) {
  ReconConfig c;
  Reader r(j, "");
  r.get("version", c.version);
  if (c.version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(c.version));
  r.get("seed", c.seed);
  std::string dd, rd;
  r.get("data_dir", dd);
  r.get("run_dir", rd);
  if (!dd.empty()) c.data_dir = dd;
  if (!rd.empty()) c.run_dir = rd;
  r.get_enum("task", c.task, task_set_from_string);
  r.get("accelerations", c.accelerations);
  {
    Reader m = r.child("mask");
    m.get_enum("scheme", c.mask.scheme, mask_scheme_from_string);
    m.get("acs_lines", c.mask.acs_lines);
    m.finish();
  }
  {
    Reader s = r.child("simulate");
    s.get("ky", c.simulate.ky);
    s.get("kx", c.simulate.kx);
    s.get("coils", c.simulate.coils);
    s.get("frames", c.simulate.frames);
    s.get_double("noise_std", c.simulate.noise_std);
    s.get_double("motion_amplitude", c.simulate.motion_amplitude);
    s.get("contrast_range", c.simulate.contrast_range);
    s.get("train", c.simulate.train);
    s.get("val", c.simulate.val);
    s.get("test", c.simulate.test);
    s.finish();
  }
  {
    Reader m = r.child("model");
    m.get_enum("family", c.model.family, model_family_from_string);
    m.get("cascades", c.model.cascades);
    m.get("adjacency", c.model.adjacency);
    m.get("share_weights", c.model.share_weights);
    m.get_double("eta_init", c.model.eta_init);
    read_net(m.child("denoiser"), c.model.denoiser);
    read_net(m.child("sme"), c.model.sme);
    m.finish();
    c.model.sync();
  }
  {
    Reader f = r.child("refine");
    f.get("n_unets", c.refine.n_unets);
    f.get("features", c.refine.features);
    f.get("shift_groups", c.refine.shift_groups);
    f.get("shift_offsets", c.refine.shift_offsets);
    std::string b;
    f.get("boundary", b);
    if (b == "auto") c.refine.boundary.reset();
    else if (!b.empty()) c.refine.boundary = boundary_from_string(b);
    f.get("base_width", c.refine.unet.base_width);
    f.get("cab_per_block", c.refine.unet.cab_per_block);
    f.get("reduction", c.refine.unet.reduction);
    f.finish();
    c.refine.unet.in_channels = c.refine.unet.out_channels = c.refine.features;
  }
  read_train(r.child("stage1"), c.stage1);
  read_train(r.child("stage2"), c.stage2);
  r.finish();
  return c;
}

void resolve_data_dir(ReconConfig& c) {
  if (!c.data_dir.empty()) return;
  const char* env = std::getenv("PROMPTMR_DATA_DIR");
  c.data_dir = (env && *env) ? std::filesystem::path(env) : std::filesystem::path("data");
}

}  // namespace

ReconConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides) {
  json j = yaml_to_json(load_yaml(yaml_text, "config"));
  if (j.is_null()) j = json::object();
  if (!j.is_object()) throw ConfigError("config must be a YAML mapping");
  for (const auto& o : overrides) apply_override(j, o);
  ReconConfig c = config_from_json(j);
  resolve_data_dir(c);
  c.validate();
  return c;
}

ReconConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                        std::optional<std::uint64_t> seed) {
  std::string text;
  if (file) {
    std::ifstream is(*file);
    if (!is) throw ConfigError("cannot read config file " + file->string());
    std::stringstream ss;
    ss << is.rdbuf();
    text = ss.str();
  }
  std::vector<std::string> all = overrides;
  if (seed) all.push_back("seed=" + std::to_string(*seed));
  return parse_config(text, all);
}

std::string dump_config(const ReconConfig& cfg) {
  YAML::Emitter out;
  emit(out, config_json(cfg));
  return std::string(out.c_str()) + "\n";
}

// ---- checkpoint architecture encodings ---------------------------------------------

json to_json(const NetConfig& c) {
  json j = net_json(c);
  j["in_channels"] = c.in_channels;
  j["out_channels"] = c.out_channels;
  j["levels"] = c.levels;
  j["use_prompts"] = c.use_prompts;
  j["zero_init_output"] = c.zero_init_output;
  if (!c.prompt) j.erase("prompt");
  return j;
}

NetConfig net_config_from_json(const json& j) {
  try {
    NetConfig c;
    c.in_channels = j.at("in_channels");
    c.out_channels = j.at("out_channels");
    c.base_width = j.at("base_width");
    c.levels = j.at("levels");
    c.cab_per_block = j.at("cab_per_block");
    c.reduction = j.at("reduction");
    c.use_prompts = j.at("use_prompts");
    c.zero_init_output = j.value("zero_init_output", false);
    if (j.contains("prompt")) {
      PromptConfig p;
      read_prompt(Reader(j.at("prompt"), "prompt"), p);
      c.prompt = p;
    }
    return c;
  } catch (const json::exception& e) {
    throw FormatError("architecture", e.what());
  }
}

json to_json(const UnrolledConfig& c) {
  return {{"family", to_string(c.family)}, {"cascades", c.cascades},       {"adjacency", c.adjacency},
          {"share_weights", c.share_weights}, {"eta_init", c.eta_init}, {"denoiser", to_json(c.denoiser)},
          {"sme", to_json(c.sme)}};
}

UnrolledConfig unrolled_config_from_json(const json& j) {
  try {
    UnrolledConfig c;
    c.family = model_family_from_string(j.at("family"));
    c.cascades = j.at("cascades");
    c.adjacency = j.at("adjacency");
    c.share_weights = j.at("share_weights");
    c.eta_init = j.at("eta_init");
    c.denoiser = net_config_from_json(j.at("denoiser"));
    c.sme = net_config_from_json(j.at("sme"));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError("architecture", e.what());
  }
}

json to_json(const RefineConfig& c) {
  return {{"n_unets", c.n_unets},
          {"features", c.features},
          {"shift_groups", c.shift_groups},
          {"shift_offsets", c.shift_offsets},
          {"boundary", c.boundary ? to_string(*c.boundary) : "auto"},
          {"unet", to_json(c.unet)}};
}

RefineConfig refine_config_from_json(const json& j) {
  try {
    RefineConfig c;
    c.n_unets = j.at("n_unets");
    c.features = j.at("features");
    c.shift_groups = j.at("shift_groups");
    c.shift_offsets = j.at("shift_offsets").get<std::vector<int>>();
    const std::string b = j.at("boundary");
    if (b != "auto") c.boundary = boundary_from_string(b);
    c.unet = net_config_from_json(j.at("unet"));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError("architecture", e.what());
  }
}

}  // namespace promptmr
