#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "promptmr/autograd.hpp"
#include "promptmr/fourier.hpp"

// Independent reference implementations used by the unit and acceptance tests.
// Nothing here calls into the library code under test except for data types.

namespace promptmr::oracle {

inline ComplexArray random_complex(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexArray a(std::move(shape));
  for (auto& v : a.vec()) v = cdouble(n(rng), n(rng));
  return a;
}

inline RealArray random_real(Shape shape, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  RealArray a(std::move(shape));
  for (auto& v : a.vec()) v = u(rng);
  return a;
}

inline double rel_err(std::span<const cdouble> a, std::span<const cdouble> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

inline double rel_err(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

inline double rel_err(cdouble a, cdouble b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Direct O(N^2) centered orthonormal DFT of one ny x nx plane.
/// Sample n sits at coordinate n - ny/2 in both domains.
inline std::vector<cdouble> dft2_centered(const std::vector<cdouble>& x, std::size_t ny, std::size_t nx, bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  const long cy = static_cast<long>(ny / 2), cx = static_cast<long>(nx / 2);
  std::vector<cdouble> out(ny * nx);
  for (std::size_t u = 0; u < ny; ++u) {
    for (std::size_t v = 0; v < nx; ++v) {
      cdouble acc = 0.0;
      for (std::size_t p = 0; p < ny; ++p) {
        for (std::size_t q = 0; q < nx; ++q) {
          const double ph = 2.0 * std::numbers::pi *
                            (static_cast<double>((static_cast<long>(u) - cy) * (static_cast<long>(p) - cy)) / ny +
                             static_cast<double>((static_cast<long>(v) - cx) * (static_cast<long>(q) - cx)) / nx);
          acc += x[p * nx + q] * std::polar(1.0, sign * ph);
        }
      }
      out[u * nx + v] = acc / std::sqrt(static_cast<double>(ny * nx));
    }
  }
  return out;
}

/// Plain double-loop SSIM of one frame: uniform w x w windows, valid positions,
/// unbiased (sample) covariance, as in the usual fastMRI evaluation code.
inline double ssim_frame(const double* x, const double* y, std::size_t h, std::size_t w, double data_range, int win = 7,
                         double k1 = 0.01, double k2 = 0.03) {
  const double c1 = (k1 * data_range) * (k1 * data_range);
  const double c2 = (k2 * data_range) * (k2 * data_range);
  const double np = static_cast<double>(win * win);
  const double cov_norm = np / (np - 1.0);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + win <= h; ++i) {
    for (std::size_t j = 0; j + win <= w; ++j) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int a = 0; a < win; ++a) {
        for (int b = 0; b < win; ++b) {
          const double xv = x[(i + a) * w + j + b], yv = y[(i + a) * w + j + b];
          mx += xv;
          my += yv;
          mxx += xv * xv;
          myy += yv * yv;
          mxy += xv * yv;
        }
      }
      mx /= np;
      my /= np;
      const double vx = cov_norm * (mxx / np - mx * mx);
      const double vy = cov_norm * (myy / np - my * my);
      const double vxy = cov_norm * (mxy / np - mx * my);
      total += ((2 * mx * my + c1) * (2 * vxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

inline double ssim_volume(const RealArray& pred, const RealArray& target) {
  const std::size_t h = target.dim(target.ndim() - 2), w = target.dim(target.ndim() - 1);
  const std::size_t frames = target.size() / (h * w);
  const double range = *std::max_element(target.vec().begin(), target.vec().end());
  double s = 0.0;
  for (std::size_t f = 0; f < frames; ++f) s += ssim_frame(pred.data() + f * h * w, target.data() + f * h * w, h, w, range);
  return s / static_cast<double>(frames);
}

inline double nmse(const RealArray& p, const RealArray& t) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += (p[i] - t[i]) * (p[i] - t[i]);
    den += t[i] * t[i];
  }
  return num / den;
}

inline double psnr(const RealArray& p, const RealArray& t) {
  double mse = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mse += (p[i] - t[i]) * (p[i] - t[i]);
    peak = std::max(peak, t[i]);
  }
  mse /= static_cast<double>(t.size());
  return 10.0 * std::log10(peak * peak / mse);
}

struct GradCheck {
  double rel_err = 0.0;
  std::size_t checked = 0;
};

/// Central-difference check of d loss / d params at `samples` random entries
/// per parameter (all entries when a tensor is smaller). Error is the relative
/// 2-norm mismatch over every sampled entry.
inline GradCheck grad_check(const std::function<ag::Var()>& loss, std::vector<ag::Var> params, std::size_t samples,
                            std::mt19937_64& rng, double step = 1e-5) {
  for (auto& p : params) p.zero_grad();
  ag::backward(loss());
  std::vector<double> analytic, numeric;
  for (auto& p : params) {
    std::vector<double> g(p.grad().begin(), p.grad().end());
    if (g.empty()) g.assign(p.size(), 0.0);
    std::vector<std::size_t> idx(p.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(samples, idx.size()));
    for (std::size_t i : idx) {
      double& v = p.mutable_value()[i];
      const double orig = v;
      v = orig + step;
      const double lp = loss().item();
      v = orig - step;
      const double lm = loss().item();
      v = orig;
      analytic.push_back(g[i]);
      numeric.push_back((lp - lm) / (2 * step));
    }
  }
  return {rel_err(analytic, numeric), analytic.size()};
}

}  // namespace promptmr::oracle
