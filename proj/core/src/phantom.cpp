#include "promptmr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "promptmr/container.hpp"

namespace promptmr {

namespace {

constexpr double kPi = std::numbers::pi;

struct Ellipse {
  double cx, cy, ax, ay, angle;

  bool contains(double u, double v) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double du = u - cx, dv = v - cy;
    const double x = c * du + s * dv, y = -s * du + c * dv;
    return (x * x) / (ax * ax) + (y * y) / (ay * ay) <= 1.0;
  }
};

// Per-case random geometry; drawn in a fixed order from the case seed.
struct Anatomy {
  Ellipse body, lung_l, lung_r, spine;
  double heart_cx, heart_cy, heart_angle, heart_aspect;
  double blood_radius, wall_thickness;
  double phase0, phase_u, phase_v;
  // Base intensities and contrast exponents: body, lung, myocardium, blood, spine.
  double base[5];
  double gamma[5];
};

Anatomy draw_anatomy(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  Anatomy a{};
  a.body = {uni(-0.04, 0.04), uni(-0.04, 0.04), uni(0.78, 0.88), uni(0.62, 0.74), uni(-0.15, 0.15)};
  a.lung_l = {uni(-0.50, -0.40), uni(-0.10, 0.05), uni(0.18, 0.24), uni(0.30, 0.38), uni(-0.2, 0.2)};
  a.lung_r = {uni(0.40, 0.50), uni(-0.10, 0.05), uni(0.18, 0.24), uni(0.30, 0.38), uni(-0.2, 0.2)};
  a.spine = {uni(-0.04, 0.04), uni(0.48, 0.55), uni(0.07, 0.10), uni(0.07, 0.10), 0.0};
  a.heart_cx = uni(-0.08, 0.08);
  a.heart_cy = uni(-0.12, 0.02);
  a.heart_angle = uni(-0.5, 0.5);
  a.heart_aspect = uni(0.85, 1.15);
  a.blood_radius = uni(0.13, 0.17);
  a.wall_thickness = uni(0.07, 0.09);
  a.phase0 = uni(-kPi, kPi);
  a.phase_u = uni(-0.6, 0.6);
  a.phase_v = uni(-0.6, 0.6);
  const double base[5] = {uni(0.30, 0.40), uni(0.05, 0.10), uni(0.45, 0.55), uni(0.90, 1.00), uni(0.60, 0.75)};
  const double gamma[5] = {0.5, 1.0, 1.0, 2.0, 0.3};
  std::copy(std::begin(base), std::end(base), a.base);
  std::copy(std::begin(gamma), std::end(gamma), a.gamma);
  return a;
}

double grid_coord(std::size_t i, std::size_t n) {
  return (static_cast<double>(i) - static_cast<double>(n) / 2.0) / (static_cast<double>(n) / 2.0);
}

long wrap(long i, long n) { return ((i % n) + n) % n; }

float to_f32(double v) { return static_cast<float>(v); }

}  // namespace

void PhantomSpec::validate() const {
  if (ky < 8 || kx < 8) throw ConfigError("PhantomSpec: grid must be at least 8x8");
  if (n_coils < 1) throw ConfigError("PhantomSpec: n_coils must be >= 1");
  if (n_frames < 1) throw ConfigError("PhantomSpec: n_frames must be >= 1");
  if (motion_amplitude < 0.0 || motion_amplitude > 0.2) throw ConfigError("PhantomSpec: motion_amplitude must lie in [0, 0.2]");
  if (noise_std < 0.0) throw ConfigError("PhantomSpec: noise_std must be >= 0");
  if (!contrast_schedule.empty() && contrast_schedule.size() != n_frames) {
    throw ConfigError("PhantomSpec: contrast_schedule needs one entry per frame");
  }
}

double PhantomSpec::schedule_at(std::size_t frame) const {
  if (!contrast_schedule.empty()) return contrast_schedule.at(frame);
  if (n_frames == 1) return 1.0;
  return 0.3 + 0.7 * static_cast<double>(frame) / static_cast<double>(n_frames - 1);
}

ComplexArray phantom_image(const PhantomSpec& spec, long frame) {
  const Anatomy a = draw_anatomy(spec.seed);
  const long n = static_cast<long>(spec.n_frames);
  const std::size_t f = static_cast<std::size_t>(wrap(frame, n));

  // Blood pool radius follows one sinusoidal cycle over the frame axis.
  double blood = a.blood_radius;
  double intensity[5];
  if (spec.frame_axis == FrameAxis::temporal) {
    blood += spec.motion_amplitude * 2.0 * std::sin(2.0 * kPi * static_cast<double>(f) / static_cast<double>(n));
    std::copy(std::begin(a.base), std::end(a.base), intensity);
  } else {
    const double m = spec.schedule_at(f);
    for (int t = 0; t < 5; ++t) intensity[t] = a.base[t] * std::pow(m, a.gamma[t]);
  }
  blood = std::max(blood, 0.02);
  const Ellipse pool{a.heart_cx, a.heart_cy, blood, blood * a.heart_aspect, a.heart_angle};
  const double outer = blood + a.wall_thickness;
  const Ellipse wall{a.heart_cx, a.heart_cy, outer, outer * a.heart_aspect, a.heart_angle};

  ComplexArray img({spec.ky, spec.kx});
  for (std::size_t y = 0; y < spec.ky; ++y) {
    const double v = grid_coord(y, spec.ky);
    for (std::size_t x = 0; x < spec.kx; ++x) {
      const double u = grid_coord(x, spec.kx);
      double val = 0.0;
      if (a.body.contains(u, v)) {
        val = intensity[0];
        if (a.lung_l.contains(u, v) || a.lung_r.contains(u, v)) val = intensity[1];
        if (a.spine.contains(u, v)) val = intensity[4];
        if (wall.contains(u, v)) val = intensity[2];
        if (pool.contains(u, v)) val = intensity[3];
      }
      const double phase = a.phase0 + a.phase_u * u + a.phase_v * v;
      img[y * spec.kx + x] = std::polar(val, phase);
    }
  }
  return img;
}

CoilSensitivities phantom_sensitivities(const PhantomSpec& spec) {
  ComplexArray maps({spec.n_coils, spec.ky, spec.kx});
  if (spec.coil_profile == CoilProfile::uniform) {
    std::fill(maps.vec().begin(), maps.vec().end(), cdouble(1.0, 0.0));
    return normalize_rss(std::move(maps));
  }
  // Separate stream so coil draws do not perturb the anatomy.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const std::size_t nc = spec.n_coils;
  for (std::size_t c = 0; c < nc; ++c) {
    const double theta = 2.0 * kPi * static_cast<double>(c) / static_cast<double>(nc) + 0.3 * (U(rng) - 0.5);
    const double radius = 1.0 + 0.2 * U(rng);
    const double cu = radius * std::cos(theta), cv = radius * std::sin(theta);
    const double sigma = 0.8 + 0.3 * U(rng);
    const double phi = 2.0 * kPi * U(rng);
    const double tilt = 0.8 * (U(rng) - 0.5);
    for (std::size_t y = 0; y < spec.ky; ++y) {
      const double v = grid_coord(y, spec.ky);
      for (std::size_t x = 0; x < spec.kx; ++x) {
        const double u = grid_coord(x, spec.kx);
        const double d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
        const double mag = std::exp(-d2 / (2.0 * sigma * sigma));
        const double ph = phi + tilt * (u * std::cos(theta) + v * std::sin(theta)) * kPi;
        maps[(c * spec.ky + y) * spec.kx + x] = std::polar(mag, ph);
      }
    }
  }
  return normalize_rss(std::move(maps));
}

CaseRecord simulate_case(const PhantomSpec& spec) {
  spec.validate();
  CaseRecord rec;
  rec.spec = spec;
  rec.sens_true = phantom_sensitivities(spec);
  // Round the maps first so the stored maps are exactly the ones used.
  for (auto& v : rec.sens_true.maps.vec()) v = cdouble(to_f32(v.real()), to_f32(v.imag()));

  const std::size_t nf = spec.n_frames, nc = spec.n_coils, plane = spec.ky * spec.kx;
  ComplexArray coil_imgs({nf, nc, spec.ky, spec.kx});
  for (std::size_t f = 0; f < nf; ++f) {
    const ComplexArray img = phantom_image(spec, static_cast<long>(f));
    const ComplexArray ci = expand(img, rec.sens_true);
    std::copy(ci.vec().begin(), ci.vec().end(), coil_imgs.data() + f * nc * plane);
  }
  rec.target = rss(coil_imgs);
  ComplexArray k = fft2c(coil_imgs);

  if (spec.noise_std > 0.0) {
    double kmax = 0.0;
    for (auto v : k.vec()) kmax = std::max(kmax, std::abs(v));
    std::mt19937_64 rng(spec.seed ^ 0xd1b54a32d192ed03ULL);
    std::normal_distribution<double> N(0.0, spec.noise_std * kmax / std::sqrt(2.0));
    for (auto& v : k.vec()) v += cdouble(N(rng), N(rng));
  }
  for (auto& v : k.vec()) v = cdouble(to_f32(v.real()), to_f32(v.imag()));
  for (auto& v : rec.target.vec()) v = to_f32(v);
  rec.kspace = KSpaceVolume{std::move(k), spec.frame_axis};
  return rec;
}

const char* to_string(Boundary b) { return b == Boundary::cyclic ? "cyclic" : "replicate"; }

Boundary boundary_from_string(const std::string& s) {
  if (s == "cyclic") return Boundary::cyclic;
  if (s == "replicate") return Boundary::replicate;
  throw ConfigError("unknown boundary '" + s + "'");
}

Boundary default_boundary(FrameAxis axis) {
  return axis == FrameAxis::temporal ? Boundary::cyclic : Boundary::replicate;
}

std::vector<std::size_t> adjacent_indices(std::size_t n_frames, std::size_t center, int a, Boundary boundary) {
  if (center >= n_frames) {
    throw ShapeError("adjacent stack: center " + std::to_string(center) + " outside [0, " + std::to_string(n_frames) + ")");
  }
  if (a < 0) throw ConfigError("adjacent stack: a must be >= 0");
  const long n = static_cast<long>(n_frames);
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(2 * a + 1));
  for (long d = -a; d <= a; ++d) {
    const long i = static_cast<long>(center) + d;
    idx.push_back(static_cast<std::size_t>(boundary == Boundary::cyclic ? wrap(i, n) : std::clamp(i, 0L, n - 1)));
  }
  return idx;
}

ComplexArray build_adjacent_stack(const KSpaceVolume& k, std::size_t center, int a, Boundary boundary) {
  const auto idx = adjacent_indices(k.frames(), center, a, boundary);
  std::vector<ComplexArray> frames;
  frames.reserve(idx.size());
  for (auto i : idx) frames.push_back(take(k.data, i));
  return stack(frames);
}

// ---- I/O --------------------------------------------------------------------

namespace {

nlohmann::json spec_to_json(const PhantomSpec& s) {
  return {{"ky", s.ky},
          {"kx", s.kx},
          {"n_coils", s.n_coils},
          {"n_frames", s.n_frames},
          {"frame_axis", to_string(s.frame_axis)},
          {"motion_amplitude", s.motion_amplitude},
          {"contrast_schedule", s.contrast_schedule},
          {"noise_std", s.noise_std},
          {"seed", s.seed},
          {"coil_profile", s.coil_profile == CoilProfile::uniform ? "uniform" : "gaussian"}};
}

PhantomSpec spec_from_json(const nlohmann::json& j) {
  PhantomSpec s;
  try {
    s.ky = j.at("ky").get<std::size_t>();
    s.kx = j.at("kx").get<std::size_t>();
    s.n_coils = j.at("n_coils").get<std::size_t>();
    s.n_frames = j.at("n_frames").get<std::size_t>();
    s.frame_axis = frame_axis_from_string(j.at("frame_axis").get<std::string>());
    s.motion_amplitude = j.at("motion_amplitude").get<double>();
    s.contrast_schedule = j.value("contrast_schedule", std::vector<double>{});
    s.noise_std = j.at("noise_std").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.coil_profile = j.value("coil_profile", std::string("gaussian")) == "uniform" ? CoilProfile::uniform : CoilProfile::gaussian;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("spec", e.what());
  } catch (const ConfigError& e) {
    throw FormatError("spec", e.what());
  }
  return s;
}

}  // namespace

Container case_container(const CaseRecord& rec) {
  Container c;
  c.magic = kCaseMagic;
  c.kind = "case";
  c.meta["frame_axis"] = to_string(rec.kspace.axis_meaning);
  c.meta["spec"] = spec_to_json(rec.spec);
  c.put("kspace", rec.kspace.data, {"frame", "coil", "ky", "kx"});
  c.put("target", rec.target, {"frame", "ky", "kx"});
  c.put("sens_true", rec.sens_true.maps, {"coil", "ky", "kx"});
  return c;
}

void write_case(const CaseRecord& rec, const std::filesystem::path& dir) { write_container(case_container(rec), dir); }

CaseRecord read_case(const std::filesystem::path& dir) {
  const Container c = read_container(dir, kCaseMagic);
  CaseRecord rec;
  if (!c.meta.contains("spec")) throw FormatError("spec", "missing");
  rec.spec = spec_from_json(c.meta.at("spec"));
  FrameAxis axis;
  try {
    axis = frame_axis_from_string(c.meta.value("frame_axis", std::string{}));
  } catch (const ConfigError& e) {
    throw FormatError("frame_axis", e.what());
  }
  rec.kspace = KSpaceVolume{c.complex("kspace"), axis};
  rec.target = c.real("target");
  rec.sens_true = CoilSensitivities{c.complex("sens_true")};
  const auto& k = rec.kspace.data.shape();
  if (k.size() != 4 || rec.target.shape() != Shape{k[0], k[2], k[3]} ||
      rec.sens_true.maps.shape() != Shape{k[1], k[2], k[3]}) {
    throw FormatError("arrays", "inconsistent shapes: kspace " + shape_str(k) + ", target " +
                                    shape_str(rec.target.shape()) + ", sens_true " + shape_str(rec.sens_true.maps.shape()));
  }
  return rec;
}

}  // namespace promptmr
