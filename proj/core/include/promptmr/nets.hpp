#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "promptmr/ops.hpp"
#include "promptmr/params.hpp"

// Image-domain networks: the channel-attention U-Net and its prompt-conditioned
// variant. Both use a fixed 3-level layout (widths w, 2w, 4w; two stride-2
// downsamplings), instance norm inside blocks and LeakyReLU(0.2) activations.

namespace promptmr {

inline constexpr int kUnetLevels = 3;
inline constexpr double kLeakySlope = 0.2;

struct PromptLevel {
  int components = 5;  ///< N_p
  int height = 24;     ///< H_p
  int width = 24;      ///< W_p
  int channels = 0;    ///< C_p; 0 means "decoder width at this level"
};

/// One prompt bank per decoder level, index 0 = finest.
struct PromptConfig {
  std::array<PromptLevel, kUnetLevels> levels{PromptLevel{5, 24, 24, 0}, PromptLevel{5, 12, 12, 0}, PromptLevel{5, 6, 6, 0}};
};

struct NetConfig {
  int in_channels = 2;
  int out_channels = 2;
  int base_width = 32;
  int levels = kUnetLevels;
  int cab_per_block = 2;
  int reduction = 4;
  bool use_prompts = false;
  std::optional<PromptConfig> prompt;
  /// Zero the output convolution so the untrained net returns exactly 0.
  bool zero_init_output = false;

  void validate() const;
  int width(int level) const { return base_width << level; }
  int prompt_channels(int level) const;
};

struct Conv2d {
  ag::Var weight, bias;  // bias may be undefined
  int stride = 1;
  int pad = 1;
  ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
};

Conv2d make_conv(ParamStore& store, const std::string& name, int in, int out, int k, int stride, bool bias,
                 std::mt19937_64& rng, bool zero = false);

/// Residual channel-attention block:
///   out = x + branch(x) * sigmoid(W2 lrelu(W1 gap(branch(x)) + b1) + b2)
///   branch = conv3x3 -> instance norm -> lrelu -> conv3x3
class Cab {
 public:
  Cab() = default;
  Cab(ParamStore& store, const std::string& name, int channels, int reduction, std::mt19937_64& rng);
  ag::Var forward(const ag::Var& x, RealArray* gates = nullptr) const;

  Conv2d conv1, conv2;
  ag::Var ca_w1, ca_b1, ca_w2, ca_b2;
};

class CabStack {
 public:
  CabStack() = default;
  CabStack(ParamStore& store, const std::string& name, int channels, int count, int reduction, std::mt19937_64& rng);
  ag::Var forward(const ag::Var& x) const;

 private:
  std::vector<Cab> blocks_;
};

/// Input-adaptive prompt: w = softmax(linear(gap(F_d))),
/// P = conv3x3(bilinear(sum_j w_j P_j)), spatially matched to F_d.
class PromptBlock {
 public:
  PromptBlock() = default;
  PromptBlock(ParamStore& store, const std::string& name, int feature_channels, const PromptLevel& level,
              int prompt_channels, std::mt19937_64& rng);
  /// `weights_out`, if given, receives the normalised weights [N, N_p].
  ag::Var forward(const ag::Var& features, ag::Var* weights_out = nullptr) const;

  ag::Var components;  ///< [N_p, C_p, H_p, W_p]
  ag::Var head_w, head_b;
  Conv2d conv;
};

/// Per-forward record of prompt weights, one [N, N_p] array per decoder level
/// (index 0 = finest). Empty for networks without prompts.
struct UnetTrace {
  std::vector<RealArray> prompt_weights;
};

class Unet {
 public:
  Unet(const NetConfig& cfg, ParamStore& store, const std::string& prefix, std::mt19937_64& rng);

  /// x [N, C_in, H, W] -> [N, C_out, H, W]; any H, W >= 8.
  ag::Var forward(const ag::Var& x, UnetTrace* trace = nullptr) const;
  const NetConfig& config() const { return cfg_; }

 private:
  NetConfig cfg_;
  Conv2d head_, down0_, down1_, tail_;
  CabStack enc0_, enc1_, bottleneck_, dec2_, dec1_, dec0_;
  Conv2d fuse2_, fuse1_, fuse0_;
  ag::Var up1_w_, up1_b_, up0_w_, up0_b_;
  std::array<PromptBlock, kUnetLevels> prompts_;
};

/// Plain channel-attention U-Net; rejects configs with prompts.
class CAUnet : public Unet {
 public:
  CAUnet(const NetConfig& cfg, ParamStore& store, const std::string& prefix, std::mt19937_64& rng);
};

/// Prompt-conditioned U-Net; rejects configs without prompts.
class PromptUnet : public Unet {
 public:
  PromptUnet(const NetConfig& cfg, ParamStore& store, const std::string& prefix, std::mt19937_64& rng);
};

/// Number of scalars a freshly built network of this config owns.
std::size_t count_parameters(const NetConfig& cfg);

}  // namespace promptmr
