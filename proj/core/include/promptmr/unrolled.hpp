#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <memory>
#include <vector>

#include "promptmr/fourier.hpp"
#include "promptmr/nets.hpp"
#include "promptmr/phantom.hpp"

// Stage I: unrolled k-space reconstruction over a window of adjacent frames.
//
//   k^{t+1} = k^t - eta_t M (k^t - y) + G_t(k^t)
//   G_t(k)  = F E D_t(R F^-1 k)
//
// E/R use coil maps estimated once per case from the ACS of the middle frame.

namespace promptmr {

enum class ModelFamily { baseline_caunet, promptmr };

const char* to_string(ModelFamily f);
ModelFamily model_family_from_string(const std::string& s);

struct UnrolledConfig {
  int cascades = 12;
  int adjacency = 2;  ///< a; the window holds 2a+1 frames
  ModelFamily family = ModelFamily::promptmr;
  bool share_weights = false;
  NetConfig denoiser;
  NetConfig sme;
  double eta_init = 1.0;

  /// Consistent defaults for `family` and `adjacency`: denoiser base width 32,
  /// SME base width 8, reduction 4, two CABs per block.
  static UnrolledConfig defaults(ModelFamily family, int adjacency);
  /// Re-derive channel counts and prompt switches from family/adjacency.
  void sync();
  void validate() const;
  int frames() const { return 2 * adjacency + 1; }
};

/// Image-domain map applied inside G to packed channels [1, 2(2a+1), H, W].
using ImageDenoiser = std::function<ag::Var(const ag::Var&)>;

/// G(k) = F E D(R F^-1 k) for k [F,C,H,W,2], sens [C,H,W,2].
ag::Var regularizer_G(const ag::Var& k_adj, const ag::Var& sens, const ImageDenoiser& denoiser);

/// One cascade: k - eta M (k - y) + G(k). `denoiser` null means G = 0.
ag::Var cascade_update(const ag::Var& k, const ag::Var& y, const UndersampleMask& mask, const ag::Var& eta,
                       const ag::Var& sens, const ImageDenoiser* denoiser);

/// Array-level state for one window of adjacent frames.
struct CascadeState {
  ComplexArray k_adj;  ///< [2a+1, coil, ky, kx]
  ComplexArray y_adj;  ///< measured, zero off-mask
  UndersampleMask mask;
  CoilSensitivities sens;
  double eta = 1.0;
};

CascadeState cascade_update(const CascadeState& state, const ImageDenoiser* denoiser);

class UnrolledModel {
 public:
  UnrolledModel(UnrolledConfig cfg, std::uint64_t seed);

  const UnrolledConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Disable the learned regulariser (G = 0) in every cascade.
  void set_regularizer_enabled(bool on) { g_enabled_ = on; }
  bool regularizer_enabled() const { return g_enabled_; }
  ag::Var& eta(int cascade) { return etas_.at(static_cast<std::size_t>(cascade)); }

  /// SME on the masked k-space of one frame [C,H,W,2] -> normalised maps [C,H,W,2].
  ag::Var sensitivities(const ag::Var& y_frame, const UndersampleMask& mask) const;

  /// Differentiable reconstruction of the window centre: returns rss [H,W].
  /// `y_adj` is the masked window [2a+1, C, H, W, 2] and `sens` the maps.
  /// If `trace` is non-null it receives the prompt weights of cascade `trace_cascade`.
  ag::Var forward_window(const ag::Var& y_adj, const UndersampleMask& mask, const ag::Var& sens,
                         UnetTrace* trace = nullptr, int trace_cascade = -1) const;

  /// Differentiable centre-frame reconstruction of a measured case, in the
  /// original intensity scale. `y` must already be masked.
  ag::Var reconstruct_frame(const KSpaceVolume& y, const UndersampleMask& mask, std::size_t center,
                            UnetTrace* trace = nullptr, int trace_cascade = -1) const;

  ImageDenoiser denoiser(int cascade, UnetTrace* trace = nullptr) const;

 private:
  UnrolledConfig cfg_;
  ParamStore store_;
  std::vector<Unet> denoisers_;
  std::unique_ptr<Unet> sme_;
  std::vector<ag::Var> etas_;
  bool g_enabled_ = true;
};

/// Frame whose ACS drives sensitivity estimation.
inline std::size_t sme_frame(std::size_t n_frames) { return n_frames / 2; }

/// 1 / max(zero-filled RSS of the SME frame); applied to measurements before the network.
double input_scale(const KSpaceVolume& y_masked);

/// Packs a complex array as a constant [..., 2] tensor.
ag::Var complex_var(const ComplexArray& a);
ComplexArray var_to_complex(const ag::Var& v);

CoilSensitivities estimate_sensitivities(const UnrolledModel& model, const KSpaceVolume& y, const UndersampleMask& mask);

/// Per-frame Stage-I magnitudes [frame, ky, kx]; `y` is the masked k-space.
RealArray reconstruct_stage1(const UnrolledModel& model, const KSpaceVolume& y, const UndersampleMask& mask);

/// rss(ifft2c(y)) per frame.
RealArray zero_filled(const KSpaceVolume& y);

// ---- prompt embeddings ----------------------------------------------------------

struct EmbeddingInput {
  std::string case_id;
  std::string task;
  const KSpaceVolume* kspace = nullptr;  ///< fully sampled; masked internally
  UndersampleMask mask;
  std::size_t center = 0;
};

struct PromptEmbeddingRow {
  std::string case_id;
  std::string task;
  int accel = 0;
  std::size_t center = 0;
  int cascade = 0;
  int level = 0;
  std::vector<double> weights;
};

/// One row per (input, decoder level) from the denoiser of `cascade` (default: last).
std::vector<PromptEmbeddingRow> export_prompt_embeddings(const UnrolledModel& model, const std::vector<EmbeddingInput>& inputs,
                                                         int cascade = -1);

void write_prompt_csv(const std::vector<PromptEmbeddingRow>& rows, const std::filesystem::path& path);

}  // namespace promptmr
