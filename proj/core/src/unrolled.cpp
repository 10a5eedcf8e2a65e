#include "promptmr/unrolled.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

namespace promptmr {

using ag::Var;

const char* to_string(ModelFamily f) { return f == ModelFamily::promptmr ? "promptmr" : "baseline_caunet"; }

ModelFamily model_family_from_string(const std::string& s) {
  if (s == "promptmr") return ModelFamily::promptmr;
  if (s == "baseline_caunet" || s == "baseline") return ModelFamily::baseline_caunet;
  throw ConfigError("unknown model family '" + s + "'");
}

UnrolledConfig UnrolledConfig::defaults(ModelFamily family, int adjacency) {
  UnrolledConfig c;
  c.family = family;
  c.adjacency = adjacency;
  c.denoiser.base_width = 32;
  c.denoiser.zero_init_output = true;
  c.sme.base_width = 8;
  c.sme.zero_init_output = true;
  c.sync();
  return c;
}

void UnrolledConfig::sync() {
  const bool prompts = family == ModelFamily::promptmr;
  denoiser.in_channels = denoiser.out_channels = 2 * frames();
  sme.in_channels = sme.out_channels = 2;
  for (NetConfig* n : {&denoiser, &sme}) {
    n->use_prompts = prompts;
    if (prompts && !n->prompt) n->prompt = PromptConfig{};
    if (!prompts) n->prompt.reset();
  }
}

void UnrolledConfig::validate() const {
  if (cascades < 1) throw ConfigError("UnrolledConfig: cascades must be >= 1");
  if (adjacency < 0) throw ConfigError("UnrolledConfig: adjacency must be >= 0");
  if (denoiser.in_channels != 2 * frames() || denoiser.out_channels != 2 * frames()) {
    throw ConfigError("UnrolledConfig: denoiser channels must equal 2(2a+1)");
  }
  if (sme.in_channels != 2 || sme.out_channels != 2) throw ConfigError("UnrolledConfig: SME must map 2 -> 2 channels");
  const bool prompts = family == ModelFamily::promptmr;
  if (denoiser.use_prompts != prompts || sme.use_prompts != prompts) {
    throw ConfigError("UnrolledConfig: prompt usage must follow the model family");
  }
  denoiser.validate();
  sme.validate();
}

// ---- helpers ----------------------------------------------------------------

Var complex_var(const ComplexArray& a) {
  Shape s = a.shape();
  s.push_back(2);
  std::vector<double> v(a.size() * 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    v[2 * i] = a[i].real();
    v[2 * i + 1] = a[i].imag();
  }
  return Var::constant(std::move(s), std::move(v));
}

ComplexArray var_to_complex(const Var& v) {
  if (v.shape().empty() || v.shape().back() != 2) throw ShapeError("var_to_complex: trailing axis must be 2");
  Shape s(v.shape().begin(), v.shape().end() - 1);
  std::vector<cdouble> out(v.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cdouble(v.value()[2 * i], v.value()[2 * i + 1]);
  return ComplexArray(std::move(s), std::move(out));
}

Var regularizer_G(const Var& k_adj, const Var& sens, const ImageDenoiser& denoiser) {
  if (k_adj.shape().size() != 5) throw ShapeError("regularizer_G: expected [F,C,H,W,2], got " + shape_str(k_adj.shape()));
  const std::size_t F = k_adj.dim(0), H = k_adj.dim(2), W = k_adj.dim(3);
  Var img = ag::sens_reduce(ag::ifft2c(k_adj), sens);                   // [F,H,W,2]
  Var packed = ag::complex_to_channels(ag::reshape(img, {1, F, H, W, 2}));  // [1,2F,H,W]
  Var refined = denoiser(packed);
  if (refined.shape() != packed.shape()) throw ShapeError("regularizer_G: denoiser changed the shape");
  Var back = ag::reshape(ag::channels_to_complex(refined), {F, H, W, 2});
  return ag::fft2c(ag::sens_expand(back, sens));
}

Var cascade_update(const Var& k, const Var& y, const UndersampleMask& mask, const Var& eta, const Var& sens,
                   const ImageDenoiser* denoiser) {
  Var dc = ag::soft_dc(k, y, mask.keep, eta);
  if (!denoiser) return dc;
  return ag::add(dc, regularizer_G(k, sens, *denoiser));
}

CascadeState cascade_update(const CascadeState& state, const ImageDenoiser* denoiser) {
  if (state.k_adj.shape() != state.y_adj.shape()) throw ShapeError("cascade_update: k and y shapes differ");
  ag::NoGradGuard guard;
  Var out = cascade_update(complex_var(state.k_adj), complex_var(state.y_adj), state.mask,
                           Var::constant({1}, {state.eta}), complex_var(state.sens.maps), denoiser);
  CascadeState next = state;
  next.k_adj = var_to_complex(out);
  return next;
}

double input_scale(const KSpaceVolume& y_masked) {
  const ComplexArray frame = take(y_masked.data, sme_frame(y_masked.frames()));
  const RealArray zf = rss(ifft2c(frame));
  const double peak = *std::max_element(zf.vec().begin(), zf.vec().end());
  if (!(peak > 0.0)) throw DataError("input_scale: zero-filled image is empty");
  return 1.0 / peak;
}

RealArray zero_filled(const KSpaceVolume& y) { return rss(ifft2c(y.data)); }

// ---- model --------------------------------------------------------------------

UnrolledModel::UnrolledModel(UnrolledConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int n_nets = cfg_.share_weights ? 1 : cfg_.cascades;
  for (int t = 0; t < n_nets; ++t) denoisers_.emplace_back(cfg_.denoiser, store_, "cascade" + std::to_string(t) + ".denoiser", rng);
  for (int t = 0; t < cfg_.cascades; ++t) {
    etas_.push_back(store_.create("cascade" + std::to_string(t) + ".eta", {1}, Init::ones, rng));
    etas_.back().mutable_value()[0] = cfg_.eta_init;
  }
  sme_ = std::make_unique<Unet>(cfg_.sme, store_, "sme", rng);
}

ImageDenoiser UnrolledModel::denoiser(int cascade, UnetTrace* trace) const {
  const Unet& net = denoisers_.at(cfg_.share_weights ? 0 : static_cast<std::size_t>(cascade));
  return [&net, trace](const Var& x) { return net.forward(x, trace); };
}

Var UnrolledModel::sensitivities(const Var& y_frame, const UndersampleMask& mask) const {
  if (mask.acs_lines <= 0) throw ConfigError("sensitivity estimation needs a nonempty ACS region");
  if (y_frame.shape().size() != 4) throw ShapeError("sensitivities: expected [C,H,W,2], got " + shape_str(y_frame.shape()));
  const std::size_t C = y_frame.dim(0), H = y_frame.dim(1), W = y_frame.dim(2);
  const ComplexArray acs = extract_acs(var_to_complex(y_frame), mask);
  Var coil_imgs = complex_var(ifft2c(acs));                                      // [C,H,W,2]
  Var x = ag::complex_to_channels(ag::reshape(coil_imgs, {C, 1, H, W, 2}));     // [C,2,H,W]
  Var refined = ag::add(x, sme_->forward(x));
  Var maps = ag::reshape(ag::channels_to_complex(refined), {C, H, W, 2});
  return ag::sens_normalize(maps);
}

Var UnrolledModel::forward_window(const Var& y_adj, const UndersampleMask& mask, const Var& sens, UnetTrace* trace,
                                  int trace_cascade) const {
  if (y_adj.shape().size() != 5 || static_cast<int>(y_adj.dim(0)) != cfg_.frames()) {
    throw ShapeError("forward_window: expected [" + std::to_string(cfg_.frames()) + ",C,H,W,2], got " + shape_str(y_adj.shape()));
  }
  if (trace_cascade < 0) trace_cascade = cfg_.cascades - 1;
  Var k = y_adj;
  for (int t = 0; t < cfg_.cascades; ++t) {
    if (g_enabled_) {
      const ImageDenoiser d = denoiser(t, t == trace_cascade ? trace : nullptr);
      k = cascade_update(k, y_adj, mask, etas_[static_cast<std::size_t>(t)], sens, &d);
    } else {
      k = cascade_update(k, y_adj, mask, etas_[static_cast<std::size_t>(t)], sens, nullptr);
    }
  }
  Var center = ag::select(k, static_cast<std::size_t>(cfg_.adjacency));  // [C,H,W,2]
  return ag::rss(ag::ifft2c(center));
}

Var UnrolledModel::reconstruct_frame(const KSpaceVolume& y, const UndersampleMask& mask, std::size_t center,
                                     UnetTrace* trace, int trace_cascade) const {
  const double s = input_scale(y);
  const Boundary boundary = default_boundary(y.axis_meaning);
  ComplexArray window = build_adjacent_stack(y, center, cfg_.adjacency, boundary);
  for (auto& v : window.vec()) v *= s;
  ComplexArray ref = take(y.data, sme_frame(y.frames()));
  for (auto& v : ref.vec()) v *= s;
  Var sens = sensitivities(complex_var(ref), mask);
  return ag::scale(forward_window(complex_var(window), mask, sens, trace, trace_cascade), 1.0 / s);
}

CoilSensitivities estimate_sensitivities(const UnrolledModel& model, const KSpaceVolume& y, const UndersampleMask& mask) {
  ag::NoGradGuard guard;
  const ComplexArray frame = take(y.data, sme_frame(y.frames()));
  return CoilSensitivities{var_to_complex(model.sensitivities(complex_var(frame), mask))};
}

RealArray reconstruct_stage1(const UnrolledModel& model, const KSpaceVolume& y, const UndersampleMask& mask) {
  ag::NoGradGuard guard;
  const double s = input_scale(y);
  const Boundary boundary = default_boundary(y.axis_meaning);
  ComplexArray ref = take(y.data, sme_frame(y.frames()));
  for (auto& v : ref.vec()) v *= s;
  const Var sens = model.sensitivities(complex_var(ref), mask);
  std::vector<RealArray> frames;
  for (std::size_t c = 0; c < y.frames(); ++c) {
    ComplexArray window = build_adjacent_stack(y, c, model.config().adjacency, boundary);
    for (auto& v : window.vec()) v *= s;
    frames.push_back(ag::scale(model.forward_window(complex_var(window), mask, sens), 1.0 / s).array());
  }
  return stack(frames);
}

// ---- prompt embeddings ----------------------------------------------------------

std::vector<PromptEmbeddingRow> export_prompt_embeddings(const UnrolledModel& model, const std::vector<EmbeddingInput>& inputs,
                                                         int cascade) {
  if (model.config().family != ModelFamily::promptmr) throw ConfigError("export_prompt_embeddings needs a promptmr model");
  if (cascade < 0) cascade = model.config().cascades - 1;
  if (cascade >= model.config().cascades) throw ConfigError("export_prompt_embeddings: cascade out of range");
  ag::NoGradGuard guard;
  std::vector<PromptEmbeddingRow> rows;
  for (const auto& in : inputs) {
    if (!in.kspace) throw DataError("export_prompt_embeddings: input without k-space");
    const KSpaceVolume y = apply_mask(*in.kspace, in.mask);
    UnetTrace trace;
    model.reconstruct_frame(y, in.mask, in.center, &trace, cascade);
    for (int l = 0; l < kUnetLevels; ++l) {
      const RealArray& w = trace.prompt_weights.at(static_cast<std::size_t>(l));
      rows.push_back({in.case_id, in.task, in.mask.acceleration, in.center, cascade, l, w.vec()});
    }
  }
  return rows;
}

void write_prompt_csv(const std::vector<PromptEmbeddingRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.weights.size());
  os << "case,task,accel,center,cascade,level";
  for (std::size_t j = 0; j < width; ++j) os << ",w" << j;
  os << "\n" << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.case_id << ',' << r.task << ',' << r.accel << ',' << r.center << ',' << r.cascade << ',' << r.level;
    for (std::size_t j = 0; j < width; ++j) {
      os << ',';
      if (j < r.weights.size()) os << r.weights[j];
    }
    os << '\n';
  }
}

}  // namespace promptmr
