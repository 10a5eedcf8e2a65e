#include "promptmr/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <tuple>

namespace promptmr {

const char* to_string(FrameAxis a) { return a == FrameAxis::temporal ? "temporal" : "contrast"; }

FrameAxis frame_axis_from_string(const std::string& s) {
  if (s == "temporal") return FrameAxis::temporal;
  if (s == "contrast") return FrameAxis::contrast;
  throw ConfigError("unknown frame axis '" + s + "'");
}

const char* to_string(MaskScheme s) { return s == MaskScheme::equispaced ? "equispaced" : "random"; }

MaskScheme mask_scheme_from_string(const std::string& s) {
  if (s == "equispaced") return MaskScheme::equispaced;
  if (s == "random") return MaskScheme::random;
  throw ConfigError("unknown mask scheme '" + s + "'");
}

double UndersampleMask::sampled_fraction() const {
  if (keep.empty()) return 0.0;
  return static_cast<double>(std::count(keep.begin(), keep.end(), 1)) / static_cast<double>(keep.size());
}

namespace {

// FFTW planning is not thread-safe; plans are created once per geometry and
// executed through the new-array interface afterwards.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t ny, std::size_t nx, bool inverse) {
    std::lock_guard lock(mu_);
    auto key = std::make_tuple(ny, nx, inverse);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<cdouble> scratch(ny * nx);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan p = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), buf, buf,
                                   inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<std::size_t, std::size_t, bool>, fftw_plan> plans_;
};

// roll by `s` along both axes: out[i,j] = in[(i - sy) mod ny, (j - sx) mod nx]
void roll2(const cdouble* in, cdouble* out, std::size_t ny, std::size_t nx, std::size_t sy, std::size_t sx) {
  for (std::size_t i = 0; i < ny; ++i) {
    const std::size_t si = (i + ny - sy) % ny;
    for (std::size_t j = 0; j < nx; ++j) out[i * nx + j] = in[si * nx + (j + nx - sx) % nx];
  }
}

void check_spatial(const ComplexArray& a, const char* who) {
  if (a.ndim() < 2) throw ShapeError(std::string(who) + ": need at least 2 trailing spatial axes, got " + shape_str(a.shape()));
}

}  // namespace

namespace detail {

void fft2c_planes(cdouble* data, std::size_t batch, std::size_t ny, std::size_t nx, bool inverse) {
  if (ny == 0 || nx == 0) return;
  fftw_plan plan = PlanCache::instance().get(ny, nx, inverse);
  std::vector<cdouble> tmp(ny * nx);
  const double scale = 1.0 / std::sqrt(static_cast<double>(ny * nx));
  for (std::size_t b = 0; b < batch; ++b) {
    cdouble* plane = data + b * ny * nx;
    // ifftshift
    roll2(plane, tmp.data(), ny, nx, ny - ny / 2, nx - nx / 2);
    auto* buf = reinterpret_cast<fftw_complex*>(tmp.data());
    fftw_execute_dft(plan, buf, buf);
    // fftshift
    roll2(tmp.data(), plane, ny, nx, ny / 2, nx / 2);
    for (std::size_t i = 0; i < ny * nx; ++i) plane[i] *= scale;
  }
}

}  // namespace detail

ComplexArray fft2c(const ComplexArray& image) {
  check_spatial(image, "fft2c");
  ComplexArray out = image;
  const std::size_t ny = out.dim(out.ndim() - 2), nx = out.dim(out.ndim() - 1);
  detail::fft2c_planes(out.data(), out.size() / std::max<std::size_t>(ny * nx, 1), ny, nx, false);
  return out;
}

ComplexArray ifft2c(const ComplexArray& kspace) {
  check_spatial(kspace, "ifft2c");
  ComplexArray out = kspace;
  const std::size_t ny = out.dim(out.ndim() - 2), nx = out.dim(out.ndim() - 1);
  detail::fft2c_planes(out.data(), out.size() / std::max<std::size_t>(ny * nx, 1), ny, nx, true);
  return out;
}

ComplexArray expand(const ComplexArray& image, const CoilSensitivities& sens) {
  const auto& s = sens.maps;
  if (image.ndim() != 2 || s.ndim() != 3 || s.dim(1) != image.dim(0) || s.dim(2) != image.dim(1)) {
    throw ShapeError("expand: image " + shape_str(image.shape()) + " vs maps " + shape_str(s.shape()));
  }
  ComplexArray out(s.shape());
  const std::size_t n = image.size();
  for (std::size_t c = 0; c < s.dim(0); ++c)
    for (std::size_t p = 0; p < n; ++p) out[c * n + p] = s[c * n + p] * image[p];
  return out;
}

ComplexArray reduce(const ComplexArray& coil_images, const CoilSensitivities& sens) {
  const auto& s = sens.maps;
  if (coil_images.shape() != s.shape()) {
    throw ShapeError("reduce: coil images " + shape_str(coil_images.shape()) + " vs maps " + shape_str(s.shape()));
  }
  ComplexArray out({s.dim(1), s.dim(2)});
  const std::size_t n = out.size();
  for (std::size_t c = 0; c < s.dim(0); ++c)
    for (std::size_t p = 0; p < n; ++p) out[p] += std::conj(s[c * n + p]) * coil_images[c * n + p];
  return out;
}

CoilSensitivities normalize_rss(ComplexArray maps) {
  if (maps.ndim() != 3) throw ShapeError("normalize_rss: expected [coil,ky,kx], got " + shape_str(maps.shape()));
  const std::size_t nc = maps.dim(0), n = maps.dim(1) * maps.dim(2);
  for (std::size_t p = 0; p < n; ++p) {
    double ss = 0.0;
    for (std::size_t c = 0; c < nc; ++c) ss += std::norm(maps[c * n + p]);
    if (ss == 0.0) continue;
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t c = 0; c < nc; ++c) maps[c * n + p] *= inv;
  }
  return CoilSensitivities{std::move(maps)};
}

RealArray rss(const ComplexArray& coil_images) {
  if (coil_images.ndim() < 3) throw ShapeError("rss: expected [...,coil,ky,kx], got " + shape_str(coil_images.shape()));
  const auto& sh = coil_images.shape();
  const std::size_t nd = sh.size();
  const std::size_t nc = sh[nd - 3], n = sh[nd - 2] * sh[nd - 1];
  Shape out_shape(sh.begin(), sh.end() - 3);
  out_shape.push_back(sh[nd - 2]);
  out_shape.push_back(sh[nd - 1]);
  RealArray out(out_shape);
  const std::size_t outer = out.size() / std::max<std::size_t>(n, 1);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t p = 0; p < n; ++p) {
      double ss = 0.0;
      for (std::size_t c = 0; c < nc; ++c) ss += std::norm(coil_images[(o * nc + c) * n + p]);
      out[o * n + p] = std::sqrt(ss);
    }
  }
  return out;
}

UndersampleMask make_mask(int ky, int acceleration, int acs_lines, MaskScheme scheme, std::uint64_t seed) {
  if (ky <= 0) throw ConfigError("make_mask: ky must be positive");
  if (acceleration < 1) throw ConfigError("make_mask: acceleration must be >= 1");
  if (acs_lines < 1 || acs_lines >= ky) {
    throw ConfigError("make_mask: acs_lines must be in [1, ky), got " + std::to_string(acs_lines));
  }
  UndersampleMask m;
  m.acceleration = acceleration;
  m.acs_lines = acs_lines;
  m.keep.assign(static_cast<std::size_t>(ky), 0);
  const std::size_t a0 = m.acs_begin();
  auto in_acs = [&](std::size_t i) { return i >= a0 && i < a0 + static_cast<std::size_t>(acs_lines); };
  for (std::size_t i = a0; i < a0 + static_cast<std::size_t>(acs_lines); ++i) m.keep[i] = 1;
  if (acceleration == 1) {
    std::fill(m.keep.begin(), m.keep.end(), 1);
    return m;
  }
  std::vector<std::size_t> outer;
  for (std::size_t i = 0; i < m.keep.size(); ++i)
    if (!in_acs(i)) outer.push_back(i);

  if (scheme == MaskScheme::equispaced) {
    // Every `acceleration`-th outer line; the phase splits the remainder evenly
    // between both ends of k-space.
    const std::size_t acc = static_cast<std::size_t>(acceleration);
    const std::size_t phase = (outer.size() % acc) / 2;
    for (std::size_t j = phase; j < outer.size(); j += acc) m.keep[outer[j]] = 1;
  } else {
    std::mt19937_64 rng(seed);
    std::shuffle(outer.begin(), outer.end(), rng);
    const auto n_keep = static_cast<std::size_t>(std::lround(static_cast<double>(outer.size()) / acceleration));
    for (std::size_t j = 0; j < n_keep && j < outer.size(); ++j) m.keep[outer[j]] = 1;
  }
  return m;
}

namespace {

template <class Pred>
ComplexArray mask_lines(const ComplexArray& k, const UndersampleMask& m, Pred keep_line, const char* who) {
  if (k.ndim() < 2 || k.dim(k.ndim() - 2) != m.ky()) {
    throw ShapeError(std::string(who) + ": ky of " + shape_str(k.shape()) + " does not match mask length " +
                     std::to_string(m.ky()));
  }
  ComplexArray out = k;
  const std::size_t ny = m.ky(), nx = k.dim(k.ndim() - 1);
  const std::size_t planes = k.size() / (ny * nx);
  for (std::size_t b = 0; b < planes; ++b)
    for (std::size_t y = 0; y < ny; ++y)
      if (!keep_line(y)) std::fill_n(out.data() + (b * ny + y) * nx, nx, cdouble{});
  return out;
}

}  // namespace

ComplexArray apply_mask(const ComplexArray& k, const UndersampleMask& m) {
  return mask_lines(k, m, [&](std::size_t y) { return m.keep[y] != 0; }, "apply_mask");
}

KSpaceVolume apply_mask(const KSpaceVolume& k, const UndersampleMask& m) {
  return KSpaceVolume{apply_mask(k.data, m), k.axis_meaning};
}

ComplexArray extract_acs(const ComplexArray& k, const UndersampleMask& m) {
  const std::size_t a0 = m.acs_begin(), a1 = a0 + static_cast<std::size_t>(m.acs_lines);
  return mask_lines(k, m, [&](std::size_t y) { return y >= a0 && y < a1 && m.keep[y] != 0; }, "extract_acs");
}

KSpaceVolume extract_acs(const KSpaceVolume& k, const UndersampleMask& m) {
  return KSpaceVolume{extract_acs(k.data, m), k.axis_meaning};
}

ComplexArray forward_A(const ComplexArray& image, const CoilSensitivities& sens, const UndersampleMask& m) {
  return apply_mask(fft2c(expand(image, sens)), m);
}

ComplexArray adjoint_A(const ComplexArray& kspace, const CoilSensitivities& sens, const UndersampleMask& m) {
  return reduce(ifft2c(apply_mask(kspace, m)), sens);
}

cdouble inner(std::span<const cdouble> a, std::span<const cdouble> b) {
  if (a.size() != b.size()) throw ShapeError("inner: length mismatch");
  cdouble s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

double norm2(std::span<const cdouble> a) {
  double s = 0.0;
  for (auto v : a) s += std::norm(v);
  return std::sqrt(s);
}

}  // namespace promptmr
