#pragma once

#include <vector>

#include "promptmr/autograd.hpp"

// Differentiable tensor ops. Image tensors are NCHW; complex tensors carry a
// trailing axis of length 2 (re, im) so they share memory layout with
// std::complex<double> arrays.

namespace promptmr::ag {

// ---- elementwise ------------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var leaky_relu(const Var& a, double slope = 0.2);
Var relu(const Var& a);
Var sigmoid(const Var& a);

// ---- reductions and reshaping -----------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var reshape(const Var& a, Shape shape);
/// Index `i` along axis 0.
Var select(const Var& a, std::size_t i);
/// New leading axis.
Var stack(const std::vector<Var>& parts);
/// Concatenate along axis 1 of NCHW tensors.
Var concat_channels(const std::vector<Var>& parts);
/// Plane gather on [N,C,H,W]: output plane p (= n*C + c) copies input plane src[p].
Var gather_planes(const Var& x, std::vector<std::size_t> src);

// ---- convolution family -------------------------------------------------------
/// Square-kernel 2D convolution with zero padding. w: [Co,Ci,k,k]; b may be undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// Non-overlapping 2x2 stride-2 transposed convolution. w: [Ci,Co,2,2].
Var conv_transpose2x2(const Var& x, const Var& w, const Var& b);
/// Per-sample, per-channel normalisation over H,W (no affine).
Var instance_norm(const Var& x, double eps = 1e-5);
/// [N,C,H,W] -> [N,C]
Var global_avg_pool(const Var& x);
/// x [N,I], w [O,I], b [O] -> [N,O]
Var linear(const Var& x, const Var& w, const Var& b);
/// Row softmax of [N,K].
Var softmax(const Var& x);
/// x [N,C,H,W] * g [N,C]
Var channel_gate(const Var& x, const Var& g);
/// Reflect-pad H,W of NCHW.
Var reflect_pad(const Var& x, int top, int bottom, int left, int right);
/// Crop window [top, top+h) x [left, left+w).
Var crop(const Var& x, int top, int left, int h, int w);
/// Bilinear resize, half-pixel centres (align_corners = false).
Var bilinear_resize(const Var& x, int h, int w);
/// weights [N,Np], components [Np,C,H,W] -> [N,C,H,W]
Var prompt_mix(const Var& weights, const Var& components);
/// Mean over every k x k window ("valid" mode): [N,C,H,W] -> [N,C,H-k+1,W-k+1].
Var box_filter(const Var& x, int k);

// ---- complex ----------------------------------------------------------------
/// Centered orthonormal FFT over axes (-3,-2) of [...,H,W,2].
Var fft2c(const Var& x);
Var ifft2c(const Var& x);
/// img [F,H,W,2], sens [C,H,W,2] -> [F,C,H,W,2]
Var sens_expand(const Var& img, const Var& sens);
/// coil [F,C,H,W,2], sens [C,H,W,2] -> [F,H,W,2]
Var sens_reduce(const Var& coil, const Var& sens);
/// sens [C,H,W,2] divided by the pixelwise RSS over coils.
Var sens_normalize(const Var& sens);
/// [...,C,H,W,2] -> [...,H,W]
Var rss(const Var& coil);
/// k - eta * M (k - y) for k,y [...,ky,kx,2]; mask broadcast along ky.
Var soft_dc(const Var& k, const Var& y, const std::vector<std::uint8_t>& keep, const Var& eta);
/// [B,F,H,W,2] -> [B,2F,H,W] (re/im interleaved per frame)
Var complex_to_channels(const Var& x);
/// [B,2F,H,W] -> [B,F,H,W,2]
Var channels_to_complex(const Var& x);

}  // namespace promptmr::ag
