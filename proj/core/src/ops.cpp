#include "promptmr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "promptmr/fourier.hpp"

namespace promptmr::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_same(const Var& a, const Var& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(who) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t r, const char* who) {
  if (a.shape().size() != r) {
    throw ShapeError(std::string(who) + ": expected rank " + std::to_string(r) + ", got " + shape_str(a.shape()));
  }
}

bool wants(const Node& self, std::size_t i) { return i < self.parents.size() && self.parents[i]->requires_grad; }
double* gbuf(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
const double* pval(const Node& self, std::size_t i) { return self.parents[i]->value.data(); }

cdouble* as_complex(double* p) { return reinterpret_cast<cdouble*>(p); }
const cdouble* as_complex(const double* p) { return reinterpret_cast<const cdouble*>(p); }

}  // namespace

// ---- elementwise ------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.size();
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(self, p)) continue;
      double* g = gbuf(self, p);
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.size();
    if (wants(self, 0)) {
      double* g = gbuf(self, 0);
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      double* g = gbuf(self, 1);
      for (std::size_t i = 0; i < n; ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.size();
    const double* av = pval(self, 0);
    const double* bv = pval(self, 1);
    if (wants(self, 0)) {
      double* g = gbuf(self, 0);
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      double* g = gbuf(self, 1);
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.size();
    const double* av = pval(self, 0);
    const double* bv = pval(self, 1);
    if (wants(self, 0)) {
      double* g = gbuf(self, 0);
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] / bv[i];
    }
    if (wants(self, 1)) {
      double* g = gbuf(self, 1);
      for (std::size_t i = 0; i < n; ++i) g[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var scale(const Var& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    double* g = gbuf(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Var add_scalar(const Var& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + s;
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    double* g = gbuf(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var leaky_relu(const Var& a, double slope) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = a.value()[i];
    out[i] = v > 0.0 ? v : slope * v;
  }
  return make_result(a.shape(), std::move(out), {a}, [slope](Node& self) {
    double* g = gbuf(self, 0);
    const double* av = pval(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += av[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
  });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var sigmoid(const Var& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    double* g = gbuf(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

// ---- reductions and reshaping -----------------------------------------------

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  return make_result({}, {s}, {a}, [](Node& self) {
    double* g = gbuf(self, 0);
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var reshape(const Var& a, Shape shape) {
  if (shape_size(shape) != a.size()) throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.value().begin(), a.value().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    double* g = gbuf(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var select(const Var& a, std::size_t i) {
  if (a.shape().empty() || i >= a.dim(0)) throw ShapeError("select: index out of range for " + shape_str(a.shape()));
  const std::size_t n = a.size() / a.dim(0);
  Shape s(a.shape().begin() + 1, a.shape().end());
  std::vector<double> out(a.value().begin() + static_cast<long>(i * n), a.value().begin() + static_cast<long>((i + 1) * n));
  return make_result(std::move(s), std::move(out), {a}, [i, n](Node& self) {
    double* g = gbuf(self, 0) + i * n;
    for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[j];
  });
}

Var stack(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("stack: no parts");
  const Shape& s0 = parts.front().shape();
  std::vector<double> out;
  out.reserve(parts.size() * parts.front().size());
  for (const auto& p : parts) {
    if (p.shape() != s0) throw ShapeError("stack: mismatched part " + shape_str(p.shape()));
    out.insert(out.end(), p.value().begin(), p.value().end());
  }
  Shape s = s0;
  s.insert(s.begin(), parts.size());
  const std::size_t n = parts.front().size();
  return make_result(std::move(s), std::move(out), parts, [n](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (!wants(self, p)) continue;
      double* g = gbuf(self, p);
      for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[p * n + j];
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  for (const auto& p : parts) require_rank(p, 4, "concat_channels");
  const std::size_t N = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3), hw = H * W;
  std::size_t C = 0;
  std::vector<std::size_t> offs;
  for (const auto& p : parts) {
    if (p.dim(0) != N || p.dim(2) != H || p.dim(3) != W) throw ShapeError("concat_channels: mismatched " + shape_str(p.shape()));
    offs.push_back(C);
    C += p.dim(1);
  }
  std::vector<double> out(N * C * hw);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t ck = parts[k].dim(1);
    for (std::size_t n = 0; n < N; ++n)
      std::copy_n(parts[k].value().data() + n * ck * hw, ck * hw, out.data() + (n * C + offs[k]) * hw);
  }
  return make_result({N, C, H, W}, std::move(out), parts, [N, C, hw, offs](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (!wants(self, k)) continue;
      const std::size_t ck = self.parents[k]->shape[1];
      double* g = gbuf(self, k);
      for (std::size_t n = 0; n < N; ++n) {
        const double* src = self.grad.data() + (n * C + offs[k]) * hw;
        double* dst = g + n * ck * hw;
        for (std::size_t j = 0; j < ck * hw; ++j) dst[j] += src[j];
      }
    }
  });
}

Var gather_planes(const Var& x, std::vector<std::size_t> src) {
  require_rank(x, 4, "gather_planes");
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  if (src.size() != planes) throw ShapeError("gather_planes: index count mismatch");
  std::vector<double> out(x.size());
  for (std::size_t p = 0; p < planes; ++p) {
    if (src[p] >= planes) throw ShapeError("gather_planes: source plane out of range");
    std::copy_n(x.value().data() + src[p] * hw, hw, out.data() + p * hw);
  }
  return make_result(x.shape(), std::move(out), {x}, [src = std::move(src), hw](Node& self) {
    double* g = gbuf(self, 0);
    for (std::size_t p = 0; p < src.size(); ++p)
      for (std::size_t j = 0; j < hw; ++j) g[src[p] * hw + j] += self.grad[p * hw + j];
  });
}

// ---- convolution family -------------------------------------------------------

namespace {

void im2col(const double* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* cols) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * Wo + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W) ? x[(c * H + iy) * W + ix] : 0.0;
          }
        }
      }
}

void col2im(const double* cols, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* dx) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dx[(c * H + iy) * W + ix] += row[oy * Wo + ox];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const int N = static_cast<int>(x.dim(0)), Ci = static_cast<int>(x.dim(1));
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  const int Co = static_cast<int>(w.dim(0)), k = static_cast<int>(w.dim(2));
  if (static_cast<int>(w.dim(1)) != Ci || static_cast<int>(w.dim(3)) != k) {
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
  }
  const bool has_bias = b.defined();
  if (has_bias && b.shape() != Shape{static_cast<std::size_t>(Co)}) throw ShapeError("conv2d: bias shape");
  const int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: empty output for input " + shape_str(x.shape()));
  const int K = Ci * k * k, P = Ho * Wo;

  std::vector<double> out(static_cast<std::size_t>(N) * Co * P);
  std::vector<double> cols(static_cast<std::size_t>(K) * P);
  CMapMat Wm(w.value().data(), Co, K);
  for (int n = 0; n < N; ++n) {
    im2col(x.value().data() + static_cast<std::size_t>(n) * Ci * H * W, Ci, H, W, k, stride, pad, Ho, Wo, cols.data());
    MapMat Y(out.data() + static_cast<std::size_t>(n) * Co * P, Co, P);
    Y.noalias() = Wm * CMapMat(cols.data(), K, P);
    if (has_bias)
      for (int c = 0; c < Co; ++c) Y.row(c).array() += b.value()[static_cast<std::size_t>(c)];
  }
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return make_result({static_cast<std::size_t>(N), static_cast<std::size_t>(Co), static_cast<std::size_t>(Ho),
                      static_cast<std::size_t>(Wo)},
                     std::move(out), std::move(parents), [=](Node& self) {
                       const double* xv = pval(self, 0);
                       CMapMat Wm(pval(self, 1), Co, K);
                       std::vector<double> cols(static_cast<std::size_t>(K) * P);
                       std::vector<double> dcols;
                       const bool gx = wants(self, 0), gw = wants(self, 1), gb = has_bias && wants(self, 2);
                       for (int n = 0; n < N; ++n) {
                         CMapMat dY(self.grad.data() + static_cast<std::size_t>(n) * Co * P, Co, P);
                         if (gw) {
                           im2col(xv + static_cast<std::size_t>(n) * Ci * H * W, Ci, H, W, k, stride, pad, Ho, Wo, cols.data());
                           MapMat dW(gbuf(self, 1), Co, K);
                           dW.noalias() += dY * CMapMat(cols.data(), K, P).transpose();
                         }
                         if (gb) {
                           double* db = gbuf(self, 2);
                           for (int c = 0; c < Co; ++c) db[c] += dY.row(c).sum();
                         }
                         if (gx) {
                           dcols.assign(static_cast<std::size_t>(K) * P, 0.0);
                           MapMat dC(dcols.data(), K, P);
                           dC.noalias() = Wm.transpose() * dY;
                           col2im(dcols.data(), Ci, H, W, k, stride, pad, Ho, Wo,
                                  gbuf(self, 0) + static_cast<std::size_t>(n) * Ci * H * W);
                         }
                       }
                     });
}

Var conv_transpose2x2(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 4, "conv_transpose2x2 input");
  require_rank(w, 4, "conv_transpose2x2 weight");
  const std::size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (w.dim(0) != Ci || w.dim(2) != 2 || w.dim(3) != 2) throw ShapeError("conv_transpose2x2: weight " + shape_str(w.shape()));
  const std::size_t Co = w.dim(1), HW = H * W, Ho = 2 * H, Wo = 2 * W;
  const bool has_bias = b.defined();
  std::vector<double> out(N * Co * Ho * Wo);
  CMapMat Wm(w.value().data(), static_cast<long>(Ci), static_cast<long>(Co * 4));
  RowMat Z(Co * 4, HW);
  for (std::size_t n = 0; n < N; ++n) {
    Z.noalias() = Wm.transpose() * CMapMat(x.value().data() + n * Ci * HW, static_cast<long>(Ci), static_cast<long>(HW));
    for (std::size_t co = 0; co < Co; ++co) {
      const double bias = has_bias ? b.value()[co] : 0.0;
      for (std::size_t d = 0; d < 4; ++d) {
        const std::size_t dy = d / 2, dx = d % 2;
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j)
            out[((n * Co + co) * Ho + 2 * i + dy) * Wo + 2 * j + dx] = Z(static_cast<long>(co * 4 + d), static_cast<long>(i * W + j)) + bias;
      }
    }
  }
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return make_result({N, Co, Ho, Wo}, std::move(out), std::move(parents), [=](Node& self) {
    const bool gx = wants(self, 0), gw = wants(self, 1), gb = has_bias && wants(self, 2);
    CMapMat Wm(pval(self, 1), static_cast<long>(Ci), static_cast<long>(Co * 4));
    RowMat dZ(Co * 4, HW);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t d = 0; d < 4; ++d) {
          const std::size_t dy = d / 2, dx = d % 2;
          for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
              dZ(static_cast<long>(co * 4 + d), static_cast<long>(i * W + j)) =
                  self.grad[((n * Co + co) * Ho + 2 * i + dy) * Wo + 2 * j + dx];
        }
      if (gx) {
        MapMat dX(gbuf(self, 0) + n * Ci * HW, static_cast<long>(Ci), static_cast<long>(HW));
        dX.noalias() += Wm * dZ;
      }
      if (gw) {
        MapMat dW(gbuf(self, 1), static_cast<long>(Ci), static_cast<long>(Co * 4));
        dW.noalias() += CMapMat(pval(self, 0) + n * Ci * HW, static_cast<long>(Ci), static_cast<long>(HW)) * dZ.transpose();
      }
      if (gb) {
        double* db = gbuf(self, 2);
        for (std::size_t co = 0; co < Co; ++co) db[co] += dZ.middleRows(static_cast<long>(co * 4), 4).sum();
      }
    }
  });
}

Var instance_norm(const Var& x, double eps) {
  require_rank(x, 4, "instance_norm");
  const std::size_t planes = x.dim(0) * x.dim(1), M = x.dim(2) * x.dim(3);
  std::vector<double> out(x.size());
  std::vector<double> inv_std(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* v = x.value().data() + p * M;
    double mu = 0.0;
    for (std::size_t i = 0; i < M; ++i) mu += v[i];
    mu /= static_cast<double>(M);
    double var = 0.0;
    for (std::size_t i = 0; i < M; ++i) var += (v[i] - mu) * (v[i] - mu);
    var /= static_cast<double>(M);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[p] = inv;
    for (std::size_t i = 0; i < M; ++i) out[p * M + i] = (v[i] - mu) * inv;
  }
  return make_result(x.shape(), std::move(out), {x}, [planes, M, inv_std = std::move(inv_std)](Node& self) {
    double* g = gbuf(self, 0);
    const double m = static_cast<double>(M);
    for (std::size_t p = 0; p < planes; ++p) {
      const double* dy = self.grad.data() + p * M;
      const double* y = self.value.data() + p * M;
      double sdy = 0.0, sdyy = 0.0;
      for (std::size_t i = 0; i < M; ++i) {
        sdy += dy[i];
        sdyy += dy[i] * y[i];
      }
      for (std::size_t i = 0; i < M; ++i) g[p * M + i] += inv_std[p] / m * (m * dy[i] - sdy - y[i] * sdyy);
    }
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t N = x.dim(0), C = x.dim(1), M = x.dim(2) * x.dim(3);
  std::vector<double> out(N * C);
  for (std::size_t p = 0; p < N * C; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < M; ++i) s += x.value()[p * M + i];
    out[p] = s / static_cast<double>(M);
  }
  return make_result({N, C}, std::move(out), {x}, [M](Node& self) {
    double* g = gbuf(self, 0);
    const double inv = 1.0 / static_cast<double>(M);
    for (std::size_t p = 0; p < self.grad.size(); ++p)
      for (std::size_t i = 0; i < M; ++i) g[p * M + i] += self.grad[p] * inv;
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const std::size_t N = x.dim(0), I = x.dim(1), O = w.dim(0);
  if (w.dim(1) != I) throw ShapeError("linear: weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  const bool has_bias = b.defined();
  std::vector<double> out(N * O);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      double s = has_bias ? b.value()[o] : 0.0;
      for (std::size_t i = 0; i < I; ++i) s += w.value()[o * I + i] * x.value()[n * I + i];
      out[n * O + o] = s;
    }
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return make_result({N, O}, std::move(out), std::move(parents), [=](Node& self) {
    const double* xv = pval(self, 0);
    const double* wv = pval(self, 1);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o) {
        const double go = self.grad[n * O + o];
        if (wants(self, 0)) {
          double* g = gbuf(self, 0);
          for (std::size_t i = 0; i < I; ++i) g[n * I + i] += go * wv[o * I + i];
        }
        if (wants(self, 1)) {
          double* g = gbuf(self, 1);
          for (std::size_t i = 0; i < I; ++i) g[o * I + i] += go * xv[n * I + i];
        }
        if (has_bias && wants(self, 2)) gbuf(self, 2)[o] += go;
      }
  });
}

Var softmax(const Var& x) {
  require_rank(x, 2, "softmax");
  const std::size_t N = x.dim(0), K = x.dim(1);
  std::vector<double> out(N * K);
  for (std::size_t n = 0; n < N; ++n) {
    const double* v = x.value().data() + n * K;
    const double mx = *std::max_element(v, v + K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += (out[n * K + k] = std::exp(v[k] - mx));
    for (std::size_t k = 0; k < K; ++k) out[n * K + k] /= s;
  }
  return make_result({N, K}, std::move(out), {x}, [N, K](Node& self) {
    double* g = gbuf(self, 0);
    for (std::size_t n = 0; n < N; ++n) {
      double dot = 0.0;
      for (std::size_t k = 0; k < K; ++k) dot += self.grad[n * K + k] * self.value[n * K + k];
      for (std::size_t k = 0; k < K; ++k) g[n * K + k] += self.value[n * K + k] * (self.grad[n * K + k] - dot);
    }
  });
}

Var channel_gate(const Var& x, const Var& gate) {
  require_rank(x, 4, "channel_gate");
  const std::size_t planes = x.dim(0) * x.dim(1), M = x.dim(2) * x.dim(3);
  if (gate.shape() != Shape{x.dim(0), x.dim(1)}) throw ShapeError("channel_gate: gate " + shape_str(gate.shape()));
  std::vector<double> out(x.size());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < M; ++i) out[p * M + i] = x.value()[p * M + i] * gate.value()[p];
  return make_result(x.shape(), std::move(out), {x, gate}, [planes, M](Node& self) {
    const double* xv = pval(self, 0);
    const double* gv = pval(self, 1);
    for (std::size_t p = 0; p < planes; ++p) {
      const double* dy = self.grad.data() + p * M;
      if (wants(self, 0)) {
        double* g = gbuf(self, 0) + p * M;
        for (std::size_t i = 0; i < M; ++i) g[i] += dy[i] * gv[p];
      }
      if (wants(self, 1)) {
        double s = 0.0;
        for (std::size_t i = 0; i < M; ++i) s += dy[i] * xv[p * M + i];
        gbuf(self, 1)[p] += s;
      }
    }
  });
}

namespace {

// Separable spatial gather: out[y,x] = in[rows[y], cols[x]].
Var spatial_gather(const Var& x, std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
  const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = rows.size(), Wo = cols.size();
  std::vector<double> out(planes * Ho * Wo);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) out[(p * Ho + i) * Wo + j] = x.value()[(p * H + rows[i]) * W + cols[j]];
  return make_result({x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x},
                     [planes, H, W, rows = std::move(rows), cols = std::move(cols)](Node& self) {
                       double* g = gbuf(self, 0);
                       const std::size_t Ho = rows.size(), Wo = cols.size();
                       for (std::size_t p = 0; p < planes; ++p)
                         for (std::size_t i = 0; i < Ho; ++i)
                           for (std::size_t j = 0; j < Wo; ++j)
                             g[(p * H + rows[i]) * W + cols[j]] += self.grad[(p * Ho + i) * Wo + j];
                     });
}

std::vector<std::size_t> reflect_index(std::size_t n, int before, int after) {
  std::vector<std::size_t> idx;
  const long N = static_cast<long>(n);
  for (long i = -before; i < N + after; ++i) {
    long s = i;
    if (s < 0) s = -s;
    if (s >= N) s = 2 * (N - 1) - s;
    idx.push_back(static_cast<std::size_t>(s));
  }
  return idx;
}

}  // namespace

Var reflect_pad(const Var& x, int top, int bottom, int left, int right) {
  require_rank(x, 4, "reflect_pad");
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ShapeError("reflect_pad: negative padding");
  if (top >= static_cast<int>(x.dim(2)) || bottom >= static_cast<int>(x.dim(2)) || left >= static_cast<int>(x.dim(3)) ||
      right >= static_cast<int>(x.dim(3))) {
    throw ShapeError("reflect_pad: padding must be smaller than the input extent");
  }
  return spatial_gather(x, reflect_index(x.dim(2), top, bottom), reflect_index(x.dim(3), left, right));
}

Var crop(const Var& x, int top, int left, int h, int w) {
  require_rank(x, 4, "crop");
  if (top < 0 || left < 0 || top + h > static_cast<int>(x.dim(2)) || left + w > static_cast<int>(x.dim(3))) {
    throw ShapeError("crop: window outside input " + shape_str(x.shape()));
  }
  std::vector<std::size_t> rows(static_cast<std::size_t>(h)), cols(static_cast<std::size_t>(w));
  for (int i = 0; i < h; ++i) rows[static_cast<std::size_t>(i)] = static_cast<std::size_t>(top + i);
  for (int j = 0; j < w; ++j) cols[static_cast<std::size_t>(j)] = static_cast<std::size_t>(left + j);
  return spatial_gather(x, std::move(rows), std::move(cols));
}

namespace {

struct Interp1d {
  std::vector<std::size_t> i0, i1;
  std::vector<double> l1;  // weight of i1
};

Interp1d interp_axis(std::size_t in, std::size_t out) {
  Interp1d r;
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t a = static_cast<std::size_t>(std::floor(src));
    if (a > in - 1) a = in - 1;
    const std::size_t b = std::min(a + 1, in - 1);
    r.i0.push_back(a);
    r.i1.push_back(b);
    r.l1.push_back(src - static_cast<double>(a));
  }
  return r;
}

}  // namespace

Var bilinear_resize(const Var& x, int h, int w) {
  require_rank(x, 4, "bilinear_resize");
  if (h <= 0 || w <= 0) throw ShapeError("bilinear_resize: target must be positive");
  const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = static_cast<std::size_t>(h), Wo = static_cast<std::size_t>(w);
  Interp1d ry = interp_axis(H, Ho), rx = interp_axis(W, Wo);
  std::vector<double> out(planes * Ho * Wo);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* v = x.value().data() + p * H * W;
    for (std::size_t i = 0; i < Ho; ++i) {
      const double ly = ry.l1[i];
      for (std::size_t j = 0; j < Wo; ++j) {
        const double lx = rx.l1[j];
        out[(p * Ho + i) * Wo + j] = (1 - ly) * ((1 - lx) * v[ry.i0[i] * W + rx.i0[j]] + lx * v[ry.i0[i] * W + rx.i1[j]]) +
                                     ly * ((1 - lx) * v[ry.i1[i] * W + rx.i0[j]] + lx * v[ry.i1[i] * W + rx.i1[j]]);
      }
    }
  }
  return make_result({x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x},
                     [planes, H, W, Ho, Wo, ry = std::move(ry), rx = std::move(rx)](Node& self) {
                       double* g = gbuf(self, 0);
                       for (std::size_t p = 0; p < planes; ++p) {
                         double* gp = g + p * H * W;
                         for (std::size_t i = 0; i < Ho; ++i) {
                           const double ly = ry.l1[i];
                           for (std::size_t j = 0; j < Wo; ++j) {
                             const double lx = rx.l1[j];
                             const double d = self.grad[(p * Ho + i) * Wo + j];
                             gp[ry.i0[i] * W + rx.i0[j]] += d * (1 - ly) * (1 - lx);
                             gp[ry.i0[i] * W + rx.i1[j]] += d * (1 - ly) * lx;
                             gp[ry.i1[i] * W + rx.i0[j]] += d * ly * (1 - lx);
                             gp[ry.i1[i] * W + rx.i1[j]] += d * ly * lx;
                           }
                         }
                       }
                     });
}

Var prompt_mix(const Var& weights, const Var& components) {
  require_rank(weights, 2, "prompt_mix weights");
  require_rank(components, 4, "prompt_mix components");
  const std::size_t N = weights.dim(0), Np = weights.dim(1);
  if (components.dim(0) != Np) throw ShapeError("prompt_mix: weight count does not match component count");
  const std::size_t M = components.size() / Np;
  std::vector<double> out(N * M, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t j = 0; j < Np; ++j) {
      const double wj = weights.value()[n * Np + j];
      const double* P = components.value().data() + j * M;
      for (std::size_t i = 0; i < M; ++i) out[n * M + i] += wj * P[i];
    }
  Shape s = components.shape();
  s[0] = N;
  return make_result(std::move(s), std::move(out), {weights, components}, [N, Np, M](Node& self) {
    const double* wv = pval(self, 0);
    const double* pv = pval(self, 1);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < Np; ++j) {
        const double* dy = self.grad.data() + n * M;
        if (wants(self, 0)) {
          double s = 0.0;
          for (std::size_t i = 0; i < M; ++i) s += dy[i] * pv[j * M + i];
          gbuf(self, 0)[n * Np + j] += s;
        }
        if (wants(self, 1)) {
          double* g = gbuf(self, 1) + j * M;
          for (std::size_t i = 0; i < M; ++i) g[i] += wv[n * Np + j] * dy[i];
        }
      }
  });
}

Var box_filter(const Var& x, int k) {
  require_rank(x, 4, "box_filter");
  const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3), K = static_cast<std::size_t>(k);
  if (k <= 0 || K > H || K > W) throw ShapeError("box_filter: window larger than image " + shape_str(x.shape()));
  const std::size_t Ho = H - K + 1, Wo = W - K + 1;
  const double inv = 1.0 / static_cast<double>(K * K);
  std::vector<double> out(planes * Ho * Wo);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* v = x.value().data() + p * H * W;
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double s = 0.0;
        for (std::size_t a = 0; a < K; ++a)
          for (std::size_t b = 0; b < K; ++b) s += v[(i + a) * W + j + b];
        out[(p * Ho + i) * Wo + j] = s * inv;
      }
  }
  return make_result({x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x}, [=](Node& self) {
    double* g = gbuf(self, 0);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          const double d = self.grad[(p * Ho + i) * Wo + j] * inv;
          for (std::size_t a = 0; a < K; ++a)
            for (std::size_t b = 0; b < K; ++b) g[(p * H + i + a) * W + j + b] += d;
        }
  });
}

// ---- complex ----------------------------------------------------------------

namespace {

void require_complex(const Var& x, std::size_t min_rank, const char* who) {
  if (x.shape().size() < min_rank || x.shape().back() != 2) {
    throw ShapeError(std::string(who) + ": expected complex tensor [...,2], got " + shape_str(x.shape()));
  }
}

Var fft_op(const Var& x, bool inverse) {
  require_complex(x, 3, inverse ? "ifft2c" : "fft2c");
  const auto& s = x.shape();
  const std::size_t ny = s[s.size() - 3], nx = s[s.size() - 2];
  const std::size_t batch = x.size() / (2 * ny * nx);
  std::vector<double> out(x.value().begin(), x.value().end());
  promptmr::detail::fft2c_planes(as_complex(out.data()), batch, ny, nx, inverse);
  return make_result(s, std::move(out), {x}, [=](Node& self) {
    // The transform is unitary, so its adjoint is the opposite transform.
    std::vector<double> g(self.grad);
    promptmr::detail::fft2c_planes(as_complex(g.data()), batch, ny, nx, !inverse);
    double* dst = gbuf(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

}  // namespace

Var fft2c(const Var& x) { return fft_op(x, false); }
Var ifft2c(const Var& x) { return fft_op(x, true); }

Var sens_expand(const Var& img, const Var& sens) {
  require_complex(img, 4, "sens_expand image");
  require_complex(sens, 4, "sens_expand maps");
  const std::size_t F = img.dim(0), C = sens.dim(0), H = img.dim(1), W = img.dim(2), n = H * W;
  if (sens.dim(1) != H || sens.dim(2) != W) throw ShapeError("sens_expand: " + shape_str(img.shape()) + " vs " + shape_str(sens.shape()));
  std::vector<double> out(F * C * n * 2);
  const cdouble* x = as_complex(img.value().data());
  const cdouble* s = as_complex(sens.value().data());
  cdouble* o = as_complex(out.data());
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < n; ++p) o[(f * C + c) * n + p] = s[c * n + p] * x[f * n + p];
  return make_result({F, C, H, W, 2}, std::move(out), {img, sens}, [=](Node& self) {
    const cdouble* x = as_complex(pval(self, 0));
    const cdouble* s = as_complex(pval(self, 1));
    const cdouble* g = as_complex(self.grad.data());
    cdouble* gx = wants(self, 0) ? as_complex(gbuf(self, 0)) : nullptr;
    cdouble* gs = wants(self, 1) ? as_complex(gbuf(self, 1)) : nullptr;
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < n; ++p) {
          const cdouble go = g[(f * C + c) * n + p];
          if (gx) gx[f * n + p] += go * std::conj(s[c * n + p]);
          if (gs) gs[c * n + p] += go * std::conj(x[f * n + p]);
        }
  });
}

Var sens_reduce(const Var& coil, const Var& sens) {
  require_complex(coil, 5, "sens_reduce coil images");
  require_complex(sens, 4, "sens_reduce maps");
  const std::size_t F = coil.dim(0), C = coil.dim(1), H = coil.dim(2), W = coil.dim(3), n = H * W;
  if (sens.dim(0) != C || sens.dim(1) != H || sens.dim(2) != W) {
    throw ShapeError("sens_reduce: " + shape_str(coil.shape()) + " vs " + shape_str(sens.shape()));
  }
  std::vector<double> out(F * n * 2, 0.0);
  const cdouble* x = as_complex(coil.value().data());
  const cdouble* s = as_complex(sens.value().data());
  cdouble* o = as_complex(out.data());
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < n; ++p) o[f * n + p] += std::conj(s[c * n + p]) * x[(f * C + c) * n + p];
  return make_result({F, H, W, 2}, std::move(out), {coil, sens}, [=](Node& self) {
    const cdouble* x = as_complex(pval(self, 0));
    const cdouble* s = as_complex(pval(self, 1));
    const cdouble* g = as_complex(self.grad.data());
    cdouble* gx = wants(self, 0) ? as_complex(gbuf(self, 0)) : nullptr;
    cdouble* gs = wants(self, 1) ? as_complex(gbuf(self, 1)) : nullptr;
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < n; ++p) {
          const cdouble go = g[f * n + p];
          if (gx) gx[(f * C + c) * n + p] += go * s[c * n + p];
          if (gs) gs[c * n + p] += std::conj(go) * x[(f * C + c) * n + p];
        }
  });
}

Var sens_normalize(const Var& sens) {
  require_complex(sens, 4, "sens_normalize");
  const std::size_t C = sens.dim(0), n = sens.dim(1) * sens.dim(2);
  std::vector<double> out(sens.size());
  std::vector<double> norms(n);
  const cdouble* s = as_complex(sens.value().data());
  cdouble* o = as_complex(out.data());
  for (std::size_t p = 0; p < n; ++p) {
    double ss = 0.0;
    for (std::size_t c = 0; c < C; ++c) ss += std::norm(s[c * n + p]);
    norms[p] = std::sqrt(ss);
    for (std::size_t c = 0; c < C; ++c) o[c * n + p] = ss > 0.0 ? s[c * n + p] / norms[p] : cdouble{};
  }
  return make_result(sens.shape(), std::move(out), {sens}, [C, n, norms = std::move(norms)](Node& self) {
    const cdouble* s = as_complex(pval(self, 0));
    const cdouble* g = as_complex(self.grad.data());
    cdouble* gs = as_complex(gbuf(self, 0));
    for (std::size_t p = 0; p < n; ++p) {
      const double nm = norms[p];
      if (nm == 0.0) continue;
      double alpha = 0.0;
      for (std::size_t c = 0; c < C; ++c) alpha += (std::conj(g[c * n + p]) * s[c * n + p]).real();
      for (std::size_t c = 0; c < C; ++c) gs[c * n + p] += g[c * n + p] / nm - alpha * s[c * n + p] / (nm * nm * nm);
    }
  });
}

Var rss(const Var& coil) {
  require_complex(coil, 4, "rss");
  const auto& sh = coil.shape();
  const std::size_t d = sh.size();
  const std::size_t C = sh[d - 4], n = sh[d - 3] * sh[d - 2];
  const std::size_t outer = coil.size() / (2 * C * n);
  Shape os(sh.begin(), sh.end() - 4);
  os.push_back(sh[d - 3]);
  os.push_back(sh[d - 2]);
  std::vector<double> out(outer * n);
  const cdouble* x = as_complex(coil.value().data());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t p = 0; p < n; ++p) {
      double ss = 0.0;
      for (std::size_t c = 0; c < C; ++c) ss += std::norm(x[(o * C + c) * n + p]);
      out[o * n + p] = std::sqrt(ss);
    }
  return make_result(std::move(os), std::move(out), {coil}, [outer, C, n](Node& self) {
    const cdouble* x = as_complex(pval(self, 0));
    cdouble* g = as_complex(gbuf(self, 0));
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t p = 0; p < n; ++p) {
        const double r = self.value[o * n + p];
        if (r == 0.0) continue;
        const double k = self.grad[o * n + p] / r;
        for (std::size_t c = 0; c < C; ++c) g[(o * C + c) * n + p] += k * x[(o * C + c) * n + p];
      }
  });
}

Var soft_dc(const Var& k, const Var& y, const std::vector<std::uint8_t>& keep, const Var& eta) {
  require_complex(k, 3, "soft_dc");
  require_same(k, y, "soft_dc");
  if (eta.size() != 1) throw ShapeError("soft_dc: eta must be scalar");
  const auto& s = k.shape();
  const std::size_t ny = s[s.size() - 3], row = s[s.size() - 2] * 2;
  if (keep.size() != ny) throw ShapeError("soft_dc: mask length " + std::to_string(keep.size()) + " vs ky " + std::to_string(ny));
  const double e = eta.value()[0];
  std::vector<double> out(k.value().begin(), k.value().end());
  const std::size_t lines = k.size() / row;
  for (std::size_t l = 0; l < lines; ++l) {
    if (!keep[l % ny]) continue;
    // (1 - eta) k + eta y: exact at eta = 0 and eta = 1.
    for (std::size_t j = 0; j < row; ++j) out[l * row + j] = (1.0 - e) * k.value()[l * row + j] + e * y.value()[l * row + j];
  }
  return make_result(s, std::move(out), {k, y, eta}, [keep, ny, row, lines](Node& self) {
    const double e = pval(self, 2)[0];
    const double* kv = pval(self, 0);
    const double* yv = pval(self, 1);
    double geta = 0.0;
    for (std::size_t l = 0; l < lines; ++l) {
      const bool on = keep[l % ny] != 0;
      for (std::size_t j = 0; j < row; ++j) {
        const std::size_t i = l * row + j;
        const double g = self.grad[i];
        if (wants(self, 0)) gbuf(self, 0)[i] += on ? (1.0 - e) * g : g;
        if (on) {
          if (wants(self, 1)) gbuf(self, 1)[i] += e * g;
          geta -= g * (kv[i] - yv[i]);
        }
      }
    }
    if (wants(self, 2)) gbuf(self, 2)[0] += geta;
  });
}

Var complex_to_channels(const Var& x) {
  require_complex(x, 5, "complex_to_channels");
  const std::size_t B = x.dim(0), F = x.dim(1), H = x.dim(2), W = x.dim(3), n = H * W;
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = 0; q < 2; ++q) out[((b * F + f) * 2 + q) * n + p] = x.value()[((b * F + f) * n + p) * 2 + q];
  return make_result({B, 2 * F, H, W}, std::move(out), {x}, [B, F, n](Node& self) {
    double* g = gbuf(self, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t p = 0; p < n; ++p)
          for (std::size_t q = 0; q < 2; ++q) g[((b * F + f) * n + p) * 2 + q] += self.grad[((b * F + f) * 2 + q) * n + p];
  });
}

Var channels_to_complex(const Var& x) {
  require_rank(x, 4, "channels_to_complex");
  if (x.dim(1) % 2 != 0) throw ShapeError("channels_to_complex: odd channel count");
  const std::size_t B = x.dim(0), F = x.dim(1) / 2, H = x.dim(2), W = x.dim(3), n = H * W;
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = 0; q < 2; ++q) out[((b * F + f) * n + p) * 2 + q] = x.value()[((b * F + f) * 2 + q) * n + p];
  return make_result({B, F, H, W, 2}, std::move(out), {x}, [B, F, n](Node& self) {
    double* g = gbuf(self, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t p = 0; p < n; ++p)
          for (std::size_t q = 0; q < 2; ++q) g[((b * F + f) * 2 + q) * n + p] += self.grad[((b * F + f) * n + p) * 2 + q];
  });
}

}  // namespace promptmr::ag
