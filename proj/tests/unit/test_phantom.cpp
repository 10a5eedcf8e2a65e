#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "promptmr/container.hpp"
#include "promptmr/error.hpp"
#include "promptmr/phantom.hpp"

using namespace promptmr;
namespace fs = std::filesystem;

namespace {

PhantomSpec small_spec(FrameAxis axis = FrameAxis::temporal) {
  PhantomSpec s;
  s.ky = 24;
  s.kx = 20;
  s.n_coils = 3;
  s.n_frames = 5;
  s.frame_axis = axis;
  s.seed = 11;
  return s;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("promptmr_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Phantom, SpecValidation) {
  PhantomSpec s = small_spec();
  EXPECT_NO_THROW(s.validate());
  s.n_frames = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.n_coils = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.motion_amplitude = 0.25;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.noise_std = -1.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Phantom, Deterministic) {
  const CaseRecord a = simulate_case(small_spec()), b = simulate_case(small_spec());
  EXPECT_EQ(a.kspace.data, b.kspace.data);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.sens_true.maps, b.sens_true.maps);
  PhantomSpec other = small_spec();
  other.seed = 12;
  EXPECT_NE(simulate_case(other).kspace.data, a.kspace.data);
}

TEST(Phantom, SingleUnitCoilNoiselessIsFftOfImage) {
  PhantomSpec s = small_spec();
  s.n_coils = 1;
  s.noise_std = 0.0;
  s.coil_profile = CoilProfile::uniform;
  const CaseRecord rec = simulate_case(s);
  for (std::size_t f = 0; f < s.n_frames; ++f) {
    const ComplexArray img = phantom_image(s, static_cast<long>(f));
    const ComplexArray k = take(rec.kspace.data, f);
    EXPECT_LT(oracle::rel_err(k.span(), fft2c(img).span()), 1e-6);
    const RealArray t = take(rec.target, f);
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(t[i], std::abs(img[i]), 1e-6);
  }
}

TEST(Phantom, TargetIsRssOfNoiselessKspace) {
  for (auto axis : {FrameAxis::temporal, FrameAxis::contrast}) {
    PhantomSpec s = small_spec(axis);
    s.noise_std = 0.0;
    const CaseRecord rec = simulate_case(s);
    const RealArray r = rss(ifft2c(rec.kspace.data));
    ASSERT_EQ(r.shape(), rec.target.shape());
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(r[i], rec.target[i], 1e-5);
  }
}

TEST(Phantom, TemporalGeometryIsPeriodic) {
  PhantomSpec s = small_spec();
  s.n_frames = 12;
  EXPECT_EQ(phantom_image(s, 0), phantom_image(s, 12));
  EXPECT_EQ(phantom_image(s, 3), phantom_image(s, -9));
  EXPECT_NE(phantom_image(s, 0), phantom_image(s, 3));
}

TEST(Phantom, ContrastModeKeepsGeometry) {
  PhantomSpec s = small_spec(FrameAxis::contrast);
  s.contrast_schedule = {0.5, 1.0, 0.7, 0.9, 0.3};
  const ComplexArray a = phantom_image(s, 0), b = phantom_image(s, 1);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i] == cdouble(0.0), b[i] == cdouble(0.0));
  EXPECT_NE(a, b);
}

TEST(Phantom, SensitivitiesNormalizedAndComplex) {
  const CaseRecord rec = simulate_case(small_spec());
  const RealArray r = rss(rec.sens_true.maps);
  for (double v : r.vec()) EXPECT_NEAR(v, 1.0, 1e-5);
  double imag = 0.0;
  for (auto v : rec.sens_true.maps.vec()) imag += std::abs(v.imag());
  EXPECT_GT(imag, 0.0);
}

TEST(Phantom, NoForcedConjugateSymmetry) {
  PhantomSpec s = small_spec();
  s.noise_std = 0.0;
  s.ky = s.kx = 16;
  const CaseRecord rec = simulate_case(s);
  const ComplexArray k = take(take(rec.kspace.data, 0), 0);
  // Hermitian symmetry about the centre would mean k[-u,-v] = conj(k[u,v]).
  double asym = 0.0, total = 0.0;
  for (std::size_t u = 1; u < 16; ++u)
    for (std::size_t v = 1; v < 16; ++v) {
      asym += std::abs(k[u * 16 + v] - std::conj(k[(16 - u) * 16 + (16 - v)]));
      total += std::abs(k[u * 16 + v]);
    }
  EXPECT_GT(asym / total, 0.01);
}

TEST(Phantom, FiniteValues) {
  const CaseRecord rec = simulate_case(small_spec(FrameAxis::contrast));
  for (auto v : rec.kspace.data.vec()) EXPECT_TRUE(std::isfinite(v.real()) && std::isfinite(v.imag()));
}

TEST(AdjacentStack, Examples) {
  EXPECT_EQ(adjacent_indices(5, 0, 1, Boundary::cyclic), (std::vector<std::size_t>{4, 0, 1}));
  EXPECT_EQ(adjacent_indices(5, 0, 2, Boundary::replicate), (std::vector<std::size_t>{0, 0, 0, 1, 2}));
  EXPECT_EQ(adjacent_indices(5, 3, 0, Boundary::cyclic), (std::vector<std::size_t>{3}));
  EXPECT_EQ(adjacent_indices(1, 0, 2, Boundary::cyclic), (std::vector<std::size_t>{0, 0, 0, 0, 0}));
  EXPECT_THROW(adjacent_indices(5, 5, 1, Boundary::cyclic), std::invalid_argument);
}

TEST(AdjacentStack, CopiesFrames) {
  const CaseRecord rec = simulate_case(small_spec());
  for (auto b : {Boundary::cyclic, Boundary::replicate}) {
    for (int a : {0, 1, 2, 3}) {
      const ComplexArray st = build_adjacent_stack(rec.kspace, 1, a, b);
      ASSERT_EQ(st.dim(0), static_cast<std::size_t>(2 * a + 1));
      const auto idx = adjacent_indices(rec.kspace.frames(), 1, a, b);
      for (std::size_t j = 0; j < idx.size(); ++j) EXPECT_EQ(take(st, j), take(rec.kspace.data, idx[j]));
    }
  }
  EXPECT_EQ(default_boundary(FrameAxis::temporal), Boundary::cyclic);
  EXPECT_EQ(default_boundary(FrameAxis::contrast), Boundary::replicate);
}

TEST(CaseIo, RoundTripIsBitExact) {
  const fs::path d1 = scratch("rt1"), d2 = scratch("rt2");
  const CaseRecord rec = simulate_case(small_spec(FrameAxis::contrast));
  write_case(rec, d1);
  const CaseRecord back = read_case(d1);
  EXPECT_EQ(back.kspace.data, rec.kspace.data);
  EXPECT_EQ(back.kspace.axis_meaning, FrameAxis::contrast);
  EXPECT_EQ(back.target, rec.target);
  EXPECT_EQ(back.sens_true.maps, rec.sens_true.maps);
  EXPECT_EQ(back.spec, rec.spec);
  write_case(back, d2);
  for (const auto& e : fs::directory_iterator(d1)) EXPECT_EQ(slurp(e.path()), slurp(d2 / e.path().filename()));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(CaseIo, WrongMagicNamesField) {
  const fs::path d = scratch("magic");
  write_case(simulate_case(small_spec()), d);
  auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  m["magic"] = "NOT-A-CASE";
  std::ofstream(d / "manifest.json") << m.dump(2);
  try {
    read_case(d);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.field(), "magic");
  }
  fs::remove_all(d);
}

TEST(CaseIo, UnsupportedVersionNamesField) {
  const fs::path d = scratch("version");
  write_case(simulate_case(small_spec()), d);
  auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  m["format_version"] = 2;
  std::ofstream(d / "manifest.json") << m.dump(2);
  try {
    read_case(d);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.field(), "format_version");
  }
  fs::remove_all(d);
}

TEST(CaseIo, TruncatedPayloadIsLengthError) {
  const fs::path d = scratch("trunc");
  write_case(simulate_case(small_spec()), d);
  const fs::path bin = d / "kspace.bin";
  fs::resize_file(bin, fs::file_size(bin) - 8);
  EXPECT_THROW(read_case(d), LengthError);
  fs::remove_all(d);
}

TEST(CaseIo, UnknownKeysAreIgnored) {
  const fs::path d = scratch("extra");
  const CaseRecord rec = simulate_case(small_spec());
  write_case(rec, d);
  auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  m["scanner_vendor"] = "unknown";
  m["arrays"][0]["checksum"] = "n/a";
  std::ofstream(d / "manifest.json") << m.dump(2);
  EXPECT_EQ(read_case(d).target, rec.target);
  fs::remove_all(d);
}

TEST(Container, ManifestDocumentsArrays) {
  const fs::path d = scratch("manifest");
  write_case(simulate_case(small_spec()), d);
  const auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  EXPECT_EQ(m["magic"], kCaseMagic);
  EXPECT_EQ(m["format_version"], 1);
  EXPECT_EQ(m["frame_axis"], "temporal");
  bool saw_kspace = false;
  for (const auto& a : m["arrays"]) {
    EXPECT_EQ(a["order"], "row-major");
    EXPECT_EQ(a["byte_length"].get<std::uintmax_t>(), fs::file_size(d / a["file"].get<std::string>()));
    if (a["name"] == "kspace") {
      saw_kspace = true;
      EXPECT_EQ(a["dtype"], "complex64");
      EXPECT_EQ(a["shape"], nlohmann::json::array({5, 3, 24, 20}));
      EXPECT_EQ(a["byte_length"], 5 * 3 * 24 * 20 * 8);
    }
  }
  EXPECT_TRUE(saw_kspace);
  fs::remove_all(d);
}
