#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "promptmr/error.hpp"
#include "promptmr/metrics.hpp"

using namespace promptmr;

TEST(Nmse, Examples) {
  std::mt19937_64 rng(1);
  const RealArray t = oracle::random_real({2, 8, 8}, rng, 0.1, 1.0);
  EXPECT_EQ(nmse(t, t), 0.0);
  EXPECT_DOUBLE_EQ(nmse(RealArray(t.shape()), t), 1.0);
  RealArray p = t;
  for (auto& v : p.vec()) v *= 1.1;
  EXPECT_NEAR(nmse(p, t), 0.01, 1e-12);
  EXPECT_THROW(nmse(t, RealArray(t.shape())), DataError);
}

TEST(Psnr, Examples) {
  RealArray t({10, 10}, 0.5);
  t[0] = 1.0;
  RealArray p = t;
  EXPECT_TRUE(std::isinf(psnr(p, t)));
  // One pixel off by 0.1 over 100 pixels: mse = 1e-4, peak 1.0 -> 40 dB.
  p[7] += 0.1;
  EXPECT_NEAR(psnr(p, t), 40.0, 1e-9);
  RealArray ps = p, ts = t;
  for (auto& v : ps.vec()) v *= 3.7;
  for (auto& v : ts.vec()) v *= 3.7;
  EXPECT_NEAR(psnr(ps, ts), psnr(p, t), 1e-9);
}

TEST(Ssim, IdentityIsOneAndSymmetric) {
  std::mt19937_64 rng(2);
  const RealArray a = oracle::random_real({2, 12, 12}, rng), b = oracle::random_real({2, 12, 12}, rng);
  EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
  SsimOptions fixed;
  fixed.data_range = 1.0;
  EXPECT_NEAR(ssim(a, b, fixed), ssim(b, a, fixed), 1e-14);
  const double v = ssim(a, b);
  EXPECT_GE(v, -1.0);
  EXPECT_LE(v, 1.0);
}

TEST(Ssim, ConstantPredictionMatchesOracle) {
  RealArray t({16, 16});
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) t[i * 16 + j] = 0.5 + 0.4 * std::sin(0.7 * i) * std::cos(0.3 * j);
  const RealArray p({16, 16}, 0.4);
  EXPECT_NEAR(ssim(p, t), oracle::ssim_volume(p, t), 1e-12);
}

TEST(Metrics, MatchBruteForceOnRandomImages) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const RealArray t = oracle::random_real({2, static_cast<std::size_t>(9 + trial), 11}, rng, 0.0, 2.0);
    const RealArray p = oracle::random_real(t.shape(), rng, 0.0, 2.0);
    EXPECT_NEAR(nmse(p, t), oracle::nmse(p, t), 1e-12);
    EXPECT_NEAR(psnr(p, t), oracle::psnr(p, t), 1e-10);
    EXPECT_NEAR(ssim(p, t), oracle::ssim_volume(p, t), 1e-12);
  }
}

TEST(Ssim, TooSmallThrows) {
  EXPECT_THROW(ssim(RealArray({5, 5}, 1.0), RealArray({5, 5}, 1.0)), ShapeError);
  EXPECT_THROW(ssim(RealArray({8, 8}, 1.0), RealArray({8, 9}, 1.0)), ShapeError);
}

TEST(SsimLoss, ValueAndStationarity) {
  std::mt19937_64 rng(4);
  const RealArray t = oracle::random_real({2, 10, 10}, rng);
  ag::Var p = ag::Var::parameter(t);
  const ag::Var loss = ssim_loss(p, t);
  EXPECT_NEAR(loss.item(), 0.0, 1e-14);
  ag::backward(loss);
  for (double g : p.grad()) EXPECT_LT(std::abs(g), 1e-6);
}

TEST(SsimLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const RealArray t = oracle::random_real({2, 10, 9}, rng);
  ag::Var p = ag::Var::parameter(oracle::random_real(t.shape(), rng));
  const auto r = oracle::grad_check([&] { return ssim_loss(p, t); }, {p}, 60, rng);
  EXPECT_LT(r.rel_err, 1e-4);
  EXPECT_NEAR(ssim_loss(p, t).item(), 1.0 - ssim(p.array(), t), 1e-12);
}

TEST(Report, AggregateIsMeanAndSkipsInfinitePsnr) {
  std::vector<MetricRow> rows = {
      {"c0", "temporal", 4, "promptmr", "stage1", 0.02, 30.0, 0.9},
      {"c1", "temporal", 4, "promptmr", "stage1", 0.04, std::numeric_limits<double>::infinity(), 0.8},
      {"c2", "temporal", 4, "promptmr", "stage1", 0.06, 34.0, 0.7},
      {"c0", "temporal", 4, "zero_filled", "zero_filled", 0.2, 20.0, 0.5},
  };
  const auto agg = aggregate(rows);
  ASSERT_EQ(agg.size(), 2u);
  const auto& pm = agg[0].model == "promptmr" ? agg[0] : agg[1];
  EXPECT_EQ(pm.cases, 3u);
  EXPECT_NEAR(pm.nmse, 0.04, 1e-12);
  EXPECT_NEAR(pm.ssim, 0.8, 1e-12);
  EXPECT_NEAR(pm.psnr, 32.0, 1e-12);
  EXPECT_EQ(pm.psnr_excluded, 1u);
  std::reverse(rows.begin(), rows.end());
  const auto again = aggregate(rows);
  ASSERT_EQ(again.size(), agg.size());
  for (std::size_t i = 0; i < agg.size(); ++i) EXPECT_DOUBLE_EQ(again[i].nmse, agg[i].nmse);
  EXPECT_NE(format_report_table(agg).find("4.00/32.00/0.8000"), std::string::npos);  // NMSE x1e-2
}

TEST(Report, CsvRoundTrip) {
  const std::vector<MetricRow> rows = {{"case_a", "contrast", 8, "baseline_caunet", "stage1", 0.0123456789, 31.5, 0.91},
                                       {"case_b", "temporal", 10, "promptmr", "stage2", 0.5, 12.25, -0.1}};
  const auto path = std::filesystem::temp_directory_path() / "promptmr_report_test.csv";
  write_report_csv(rows, path);
  const auto back = read_report_csv(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].case_id, "case_b");
  EXPECT_EQ(back[0].accel, 8);
  EXPECT_DOUBLE_EQ(back[0].nmse, 0.0123456789);
  EXPECT_DOUBLE_EQ(back[1].ssim, -0.1);
  std::filesystem::remove(path);
}
