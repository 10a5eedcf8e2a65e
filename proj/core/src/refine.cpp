#include "promptmr/refine.hpp"

#include <algorithm>

#include "promptmr/error.hpp"

namespace promptmr {

using ag::Var;

NetConfig RefineConfig::default_unet() {
  NetConfig n;
  n.in_channels = n.out_channels = 12;
  n.base_width = 12;
  n.cab_per_block = 1;
  n.reduction = 4;
  return n;
}

void RefineConfig::validate() const {
  if (n_unets < 1) throw ConfigError("RefineConfig: n_unets must be >= 1");
  if (features < 1) throw ConfigError("RefineConfig: features must be positive");
  if (shift_groups < 1 || features % shift_groups != 0) {
    throw ConfigError("RefineConfig: shift_groups " + std::to_string(shift_groups) + " must divide features " +
                      std::to_string(features));
  }
  if (shift_offsets.empty()) throw ConfigError("RefineConfig: shift_offsets must not be empty");
  if (unet.in_channels != features || unet.out_channels != features) {
    throw ConfigError("RefineConfig: U-Net channels must equal features");
  }
  if (unet.use_prompts) throw ConfigError("RefineConfig: the refiner U-Nets do not use prompts");
  unet.validate();
}

Var temporal_shift(const Var& x, int groups, const std::vector<int>& offsets, Boundary boundary) {
  if (x.shape().size() != 4) throw ShapeError("temporal_shift: expected [F,C,H,W], got " + shape_str(x.shape()));
  const std::size_t F = x.dim(0), C = x.dim(1);
  if (groups < 1 || C % static_cast<std::size_t>(groups) != 0) {
    throw ConfigError("temporal_shift: " + std::to_string(groups) + " groups do not divide " + std::to_string(C) + " channels");
  }
  if (offsets.empty()) throw ConfigError("temporal_shift: no offsets");
  const std::size_t per = C / static_cast<std::size_t>(groups);
  const long n = static_cast<long>(F);
  std::vector<std::size_t> src(F * C);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t c = 0; c < C; ++c) {
      const long off = offsets[(c / per) % offsets.size()];
      long from = static_cast<long>(f) - off;
      from = boundary == Boundary::cyclic ? ((from % n) + n) % n : std::clamp(from, 0L, n - 1);
      src[f * C + c] = static_cast<std::size_t>(from) * C + c;
    }
  }
  return ag::gather_planes(x, std::move(src));
}

Refiner::Refiner(RefineConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  head_ = make_conv(store_, "head", 1, cfg_.features, 3, 1, true, rng);
  for (int i = 0; i < cfg_.n_unets; ++i) unets_.emplace_back(cfg_.unet, store_, "unet" + std::to_string(i), rng);
  tail_ = make_conv(store_, "tail", cfg_.features, 1, 3, 1, true, rng, true);
}

Boundary Refiner::boundary_for(FrameAxis axis) const { return cfg_.boundary.value_or(default_boundary(axis)); }

Var Refiner::forward(const Var& stage1, FrameAxis axis) const {
  if (stage1.shape().size() != 3) throw ShapeError("refine: expected [F,H,W], got " + shape_str(stage1.shape()));
  const std::size_t F = stage1.dim(0), H = stage1.dim(1), W = stage1.dim(2);
  const double peak = *std::max_element(stage1.value().begin(), stage1.value().end());
  if (!(peak > 0.0)) throw DataError("refine: stage-1 input is empty");
  const Var x = ag::reshape(ag::scale(stage1, 1.0 / peak), {F, 1, H, W});
  const Boundary b = boundary_for(axis);
  Var h = head_(x);
  for (const auto& u : unets_) h = ag::add(h, u.forward(temporal_shift(h, cfg_.shift_groups, cfg_.shift_offsets, b)));
  // Residual added in the input's own scale so a zero tail returns `stage1` bit for bit.
  const Var residual = ag::scale(ag::reshape(tail_(h), {F, H, W}), peak);
  return ag::relu(ag::add(stage1, residual));
}

RealArray refine(const Refiner& model, const RealArray& stage1, FrameAxis axis) {
  ag::NoGradGuard guard;
  return model.forward(ag::Var::constant(stage1), axis).array();
}

}  // namespace promptmr
