#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "promptmr/nets.hpp"
#include "promptmr/phantom.hpp"

// Stage II: image-domain refinement of a magnitude sequence [frame, H, W].
//
//   h_0 = head(x)
//   h_i = h_{i-1} + U_i(shift(h_{i-1}))     i = 1..n_unets
//   out = relu(x + tail(h_n))      (x normalised by its peak inside)
//
// `shift` moves channel groups along the frame axis. The tail starts at zero so
// an untrained refiner is the identity.

namespace promptmr {

struct RefineConfig {
  int n_unets = 2;
  int features = 12;  ///< channel width carried between U-Nets
  int shift_groups = 3;
  std::vector<int> shift_offsets{-1, 0, 1};
  /// Unset: cyclic for temporal cases, replicate for contrast cases.
  std::optional<Boundary> boundary;
  NetConfig unet = default_unet();

  static NetConfig default_unet();
  void validate() const;
};

/// Grouped shift of [frame, C, H, W] along the frame axis: output frame f of
/// group g copies input frame f - offsets[g % n] under `boundary`.
ag::Var temporal_shift(const ag::Var& features, int groups, const std::vector<int>& offsets, Boundary boundary);

class Refiner {
 public:
  Refiner(RefineConfig cfg, std::uint64_t seed);

  const RefineConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Differentiable refinement of `stage1` [F,H,W] (original intensity scale).
  ag::Var forward(const ag::Var& stage1, FrameAxis axis) const;

 private:
  Boundary boundary_for(FrameAxis axis) const;

  RefineConfig cfg_;
  ParamStore store_;
  Conv2d head_, tail_;
  std::vector<Unet> unets_;
};

RealArray refine(const Refiner& model, const RealArray& stage1, FrameAxis axis);

}  // namespace promptmr
