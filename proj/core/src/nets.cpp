#include "promptmr/nets.hpp"

namespace promptmr {

using ag::Var;

void NetConfig::validate() const {
  if (levels != kUnetLevels) throw ConfigError("NetConfig: levels must be 3");
  if (in_channels < 1 || out_channels < 1) throw ConfigError("NetConfig: channel counts must be positive");
  if (base_width < 1) throw ConfigError("NetConfig: base_width must be positive");
  if (cab_per_block < 1) throw ConfigError("NetConfig: cab_per_block must be >= 1");
  if (reduction < 1) throw ConfigError("NetConfig: reduction must be >= 1");
  for (int l = 0; l < kUnetLevels; ++l) {
    if (width(l) % reduction != 0) {
      throw ConfigError("NetConfig: channel width " + std::to_string(width(l)) + " not divisible by reduction " +
                        std::to_string(reduction));
    }
  }
  if (use_prompts) {
    if (!prompt) throw ConfigError("NetConfig: use_prompts requires a prompt config");
    for (const auto& lv : prompt->levels) {
      if (lv.components < 1) throw ConfigError("PromptConfig: N_p must be >= 1");
      if (lv.height < 1 || lv.width < 1 || lv.channels < 0) throw ConfigError("PromptConfig: invalid prompt dimensions");
    }
  }
}

int NetConfig::prompt_channels(int level) const {
  if (!use_prompts || !prompt) return 0;
  const int c = prompt->levels[static_cast<std::size_t>(level)].channels;
  return c > 0 ? c : width(level);
}

Conv2d make_conv(ParamStore& store, const std::string& name, int in, int out, int k, int stride, bool bias,
                 std::mt19937_64& rng, bool zero) {
  Conv2d c;
  const Init init = zero ? Init::zeros : Init::fan_in_uniform;
  const auto fan_in = static_cast<std::size_t>(in * k * k);
  c.weight = store.create(name + ".weight",
                          {static_cast<std::size_t>(out), static_cast<std::size_t>(in), static_cast<std::size_t>(k),
                           static_cast<std::size_t>(k)},
                          init, rng, fan_in);
  if (bias) c.bias = store.create(name + ".bias", {static_cast<std::size_t>(out)}, init, rng, fan_in);
  c.stride = stride;
  c.pad = k / 2;
  return c;
}

// ---- CAB ----------------------------------------------------------------------

Cab::Cab(ParamStore& store, const std::string& name, int channels, int reduction, std::mt19937_64& rng) {
  if (channels % reduction != 0) {
    throw ConfigError("CAB: channels " + std::to_string(channels) + " not divisible by reduction " + std::to_string(reduction));
  }
  const auto C = static_cast<std::size_t>(channels), R = static_cast<std::size_t>(channels / reduction);
  conv1 = make_conv(store, name + ".conv1", channels, channels, 3, 1, true, rng);
  conv2 = make_conv(store, name + ".conv2", channels, channels, 3, 1, true, rng);
  ca_w1 = store.create(name + ".ca.fc1.weight", {R, C}, Init::fan_in_uniform, rng, C);
  ca_b1 = store.create(name + ".ca.fc1.bias", {R}, Init::fan_in_uniform, rng, C);
  ca_w2 = store.create(name + ".ca.fc2.weight", {C, R}, Init::fan_in_uniform, rng, R);
  ca_b2 = store.create(name + ".ca.fc2.bias", {C}, Init::fan_in_uniform, rng, R);
}

Var Cab::forward(const Var& x, RealArray* gates) const {
  Var branch = conv2(ag::leaky_relu(ag::instance_norm(conv1(x)), kLeakySlope));
  Var squeeze = ag::global_avg_pool(branch);
  Var hidden = ag::leaky_relu(ag::linear(squeeze, ca_w1, ca_b1), kLeakySlope);
  Var gate = ag::sigmoid(ag::linear(hidden, ca_w2, ca_b2));
  if (gates) *gates = gate.array();
  return ag::add(x, ag::channel_gate(branch, gate));
}

CabStack::CabStack(ParamStore& store, const std::string& name, int channels, int count, int reduction, std::mt19937_64& rng) {
  for (int i = 0; i < count; ++i) blocks_.emplace_back(store, name + ".cab" + std::to_string(i), channels, reduction, rng);
}

Var CabStack::forward(const Var& x) const {
  Var h = x;
  for (const auto& b : blocks_) h = b.forward(h);
  return h;
}

// ---- PromptBlock ----------------------------------------------------------------

PromptBlock::PromptBlock(ParamStore& store, const std::string& name, int feature_channels, const PromptLevel& level,
                         int prompt_channels, std::mt19937_64& rng) {
  const auto Np = static_cast<std::size_t>(level.components);
  const auto Cf = static_cast<std::size_t>(feature_channels);
  components = store.create(name + ".components",
                            {Np, static_cast<std::size_t>(prompt_channels), static_cast<std::size_t>(level.height),
                             static_cast<std::size_t>(level.width)},
                            Init::unit_uniform, rng);
  head_w = store.create(name + ".head.weight", {Np, Cf}, Init::fan_in_uniform, rng, Cf);
  head_b = store.create(name + ".head.bias", {Np}, Init::fan_in_uniform, rng, Cf);
  conv = make_conv(store, name + ".conv", prompt_channels, prompt_channels, 3, 1, false, rng);
}

Var PromptBlock::forward(const Var& features, Var* weights_out) const {
  Var w = ag::softmax(ag::linear(ag::global_avg_pool(features), head_w, head_b));
  if (weights_out) *weights_out = w;
  Var mixed = ag::prompt_mix(w, components);
  Var resized = ag::bilinear_resize(mixed, static_cast<int>(features.dim(2)), static_cast<int>(features.dim(3)));
  return conv(resized);
}

// ---- U-Net ------------------------------------------------------------------------

Unet::Unet(const NetConfig& cfg, ParamStore& store, const std::string& prefix, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  const int w0 = cfg_.width(0), w1 = cfg_.width(1), w2 = cfg_.width(2);
  const int r = cfg_.reduction, n = cfg_.cab_per_block;
  const std::string p = prefix.empty() ? "" : prefix + ".";
  head_ = make_conv(store, p + "head", cfg_.in_channels, w0, 3, 1, true, rng);
  enc0_ = CabStack(store, p + "enc0", w0, n, r, rng);
  down0_ = make_conv(store, p + "down0", w0, w1, 3, 2, true, rng);
  enc1_ = CabStack(store, p + "enc1", w1, n, r, rng);
  down1_ = make_conv(store, p + "down1", w1, w2, 3, 2, true, rng);
  bottleneck_ = CabStack(store, p + "bottleneck", w2, n, r, rng);

  // Decoder features F_d per level: level 2 = bottleneck output (w2),
  // levels 1/0 = [upsampled, skip] concatenation (2*w_l).
  const int fd[kUnetLevels] = {2 * w0, 2 * w1, w2};
  const int out_w[kUnetLevels] = {w0, w1, w2};
  if (cfg_.use_prompts) {
    for (int l = kUnetLevels - 1; l >= 0; --l) {
      prompts_[static_cast<std::size_t>(l)] =
          PromptBlock(store, p + "prompt" + std::to_string(l), fd[l], cfg_.prompt->levels[static_cast<std::size_t>(l)],
                      cfg_.prompt_channels(l), rng);
    }
  }
  fuse2_ = make_conv(store, p + "fuse2", fd[2] + cfg_.prompt_channels(2), out_w[2], 3, 1, true, rng);
  dec2_ = CabStack(store, p + "dec2", w2, n, r, rng);
  up1_w_ = store.create(p + "up1.weight", {static_cast<std::size_t>(w2), static_cast<std::size_t>(w1), 2, 2},
                        Init::fan_in_uniform, rng, static_cast<std::size_t>(w1 * 4));
  up1_b_ = store.create(p + "up1.bias", {static_cast<std::size_t>(w1)}, Init::fan_in_uniform, rng, static_cast<std::size_t>(w1 * 4));
  fuse1_ = make_conv(store, p + "fuse1", fd[1] + cfg_.prompt_channels(1), out_w[1], 3, 1, true, rng);
  dec1_ = CabStack(store, p + "dec1", w1, n, r, rng);
  up0_w_ = store.create(p + "up0.weight", {static_cast<std::size_t>(w1), static_cast<std::size_t>(w0), 2, 2},
                        Init::fan_in_uniform, rng, static_cast<std::size_t>(w0 * 4));
  up0_b_ = store.create(p + "up0.bias", {static_cast<std::size_t>(w0)}, Init::fan_in_uniform, rng, static_cast<std::size_t>(w0 * 4));
  fuse0_ = make_conv(store, p + "fuse0", fd[0] + cfg_.prompt_channels(0), out_w[0], 3, 1, true, rng);
  dec0_ = CabStack(store, p + "dec0", w0, n, r, rng);
  tail_ = make_conv(store, p + "tail", w0, cfg_.out_channels, 3, 1, true, rng, cfg_.zero_init_output);
}

Var Unet::forward(const Var& x, UnetTrace* trace) const {
  if (x.shape().size() != 4 || static_cast<int>(x.dim(1)) != cfg_.in_channels) {
    throw ShapeError("Unet: expected [N," + std::to_string(cfg_.in_channels) + ",H,W], got " + shape_str(x.shape()));
  }
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  if (H < 8 || W < 8) throw ShapeError("Unet: spatial size must be at least 8x8");
  const int ph = (4 - H % 4) % 4, pw = (4 - W % 4) % 4;
  Var h = (ph || pw) ? ag::reflect_pad(x, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2) : x;

  if (trace) trace->prompt_weights.assign(cfg_.use_prompts ? kUnetLevels : 0, RealArray{});
  auto with_prompt = [&](const Var& fd, int level) -> Var {
    if (!cfg_.use_prompts) return fd;
    Var weights;
    Var p = prompts_[static_cast<std::size_t>(level)].forward(fd, trace ? &weights : nullptr);
    if (trace) trace->prompt_weights[static_cast<std::size_t>(level)] = weights.array();
    return ag::concat_channels({fd, p});
  };

  Var s0 = enc0_.forward(head_(h));
  Var s1 = enc1_.forward(down0_(s0));
  Var b = bottleneck_.forward(down1_(s1));

  Var d2 = dec2_.forward(fuse2_(with_prompt(b, 2)));
  Var u1 = ag::concat_channels({ag::conv_transpose2x2(d2, up1_w_, up1_b_), s1});
  Var d1 = dec1_.forward(fuse1_(with_prompt(u1, 1)));
  Var u0 = ag::concat_channels({ag::conv_transpose2x2(d1, up0_w_, up0_b_), s0});
  Var d0 = dec0_.forward(fuse0_(with_prompt(u0, 0)));
  Var out = tail_(d0);
  return (ph || pw) ? ag::crop(out, ph / 2, pw / 2, H, W) : out;
}

namespace {

const NetConfig& require_prompts(const NetConfig& cfg, bool want) {
  if (cfg.use_prompts != want) {
    throw ConfigError(want ? "PromptUnet requires use_prompts = true (use CAUnet instead)"
                           : "CAUnet requires use_prompts = false (use PromptUnet instead)");
  }
  return cfg;
}

}  // namespace

CAUnet::CAUnet(const NetConfig& cfg, ParamStore& store, const std::string& prefix, std::mt19937_64& rng)
    : Unet(require_prompts(cfg, false), store, prefix, rng) {}

PromptUnet::PromptUnet(const NetConfig& cfg, ParamStore& store, const std::string& prefix, std::mt19937_64& rng)
    : Unet(require_prompts(cfg, true), store, prefix, rng) {}

std::size_t count_parameters(const NetConfig& cfg) {
  ParamStore store;
  std::mt19937_64 rng(0);
  Unet net(cfg, store, "", rng);
  return store.scalar_count();
}

}  // namespace promptmr
