#include <gtest/gtest.h>

#include "oracles.hpp"
#include "promptmr/error.hpp"
#include "promptmr/nets.hpp"

using namespace promptmr;
using ag::Var;

namespace {

NetConfig tiny(bool prompts, int in = 2, int out = 2) {
  NetConfig c;
  c.in_channels = in;
  c.out_channels = out;
  c.base_width = 4;
  c.reduction = 2;
  c.cab_per_block = 1;
  c.use_prompts = prompts;
  if (prompts) {
    PromptConfig p;
    p.levels = {PromptLevel{3, 6, 6, 0}, PromptLevel{3, 4, 4, 0}, PromptLevel{3, 2, 2, 0}};
    c.prompt = p;
  }
  return c;
}

Var input(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Var::constant(oracle::random_real(std::move(s), rng, -1.0, 1.0));
}

Var probe(const Var& y) {
  std::mt19937_64 rng(4242);
  return ag::sum(ag::mul(y, Var::constant(oracle::random_real(y.shape(), rng, -1.0, 1.0))));
}

std::vector<Var> pick(const ParamStore& store, std::size_t n, std::mt19937_64& rng) {
  std::vector<Var> all = store.vars();
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(n, all.size()));
  return all;
}

}  // namespace

TEST(Cab, ZeroBranchIsIdentity) {
  ParamStore store;
  std::mt19937_64 rng(1);
  Cab cab(store, "cab", 8, 4, rng);
  for (auto& v : cab.conv2.weight.mutable_value()) v = 0.0;
  for (auto& v : cab.conv2.bias.mutable_value()) v = 0.0;
  const Var x = input({1, 8, 6, 7}, 2);
  EXPECT_EQ(cab.forward(x).array(), x.array());
}

TEST(Cab, ShapeAndGateRange) {
  ParamStore store;
  std::mt19937_64 rng(3);
  Cab cab(store, "cab", 6, 3, rng);
  for (Shape s : {Shape{1, 6, 5, 5}, Shape{3, 6, 9, 4}}) {
    RealArray gates;
    const Var y = cab.forward(input(s, 4), &gates);
    EXPECT_EQ(y.shape(), s);
    EXPECT_EQ(gates.shape(), (Shape{s[0], 6}));
    for (double g : gates.vec()) {
      EXPECT_GT(g, 0.0);
      EXPECT_LT(g, 1.0);
    }
  }
}

TEST(Cab, IndivisibleReductionIsConfigError) {
  ParamStore store;
  std::mt19937_64 rng(5);
  EXPECT_THROW(Cab(store, "cab", 6, 4, rng), ConfigError);
}

TEST(Cab, GradientCheck) {
  ParamStore store;
  std::mt19937_64 rng(6);
  Cab cab(store, "cab", 4, 2, rng);
  Var x = Var::parameter(oracle::random_real({2, 4, 5, 5}, rng, -1, 1));
  auto params = store.vars();
  params.push_back(x);
  EXPECT_LT(oracle::grad_check([&] { return probe(cab.forward(x)); }, params, 12, rng).rel_err, 1e-4);
}

TEST(PromptBlock, WeightsAreDistribution) {
  ParamStore store;
  std::mt19937_64 rng(7);
  PromptBlock pb(store, "p", 6, PromptLevel{5, 6, 6, 0}, 4, rng);
  for (int i = 0; i < 100; ++i) {
    Var w;
    const Var out = pb.forward(input({1, 6, 5, 7}, 100 + i), &w);
    EXPECT_EQ(out.shape(), (Shape{1, 4, 5, 7}));
    double s = 0.0;
    for (double v : w.value()) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(PromptBlock, SingletonBankIsInputIndependent) {
  ParamStore store;
  std::mt19937_64 rng(8);
  PromptBlock pb(store, "p", 3, PromptLevel{1, 4, 4, 0}, 2, rng);
  Var w1, w2;
  const Var a = pb.forward(input({1, 3, 8, 8}, 1), &w1), b = pb.forward(input({1, 3, 8, 8}, 2), &w2);
  EXPECT_EQ(w1.value()[0], 1.0);
  EXPECT_EQ(w2.value()[0], 1.0);
  EXPECT_EQ(a.array(), b.array());
}

TEST(PromptBlock, DependsOnFeaturesOnlyThroughGap) {
  ParamStore store;
  std::mt19937_64 rng(9);
  PromptBlock pb(store, "p", 2, PromptLevel{4, 3, 3, 0}, 2, rng);
  // Same per-channel means, different spatial layout.
  const Var a = Var::constant({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Var b = Var::constant({1, 2, 2, 2}, {4, 3, 2, 1, 8, 7, 6, 5});
  Var wa, wb;
  pb.forward(a, &wa);
  pb.forward(b, &wb);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(wa.value()[i], wb.value()[i], 1e-15);
}

TEST(PromptBlock, SoftmaxShiftInvariance) {
  ParamStore store;
  std::mt19937_64 rng(10);
  PromptBlock pb(store, "p", 3, PromptLevel{5, 4, 4, 0}, 2, rng);
  const Var x = input({1, 3, 6, 6}, 11);
  Var w0, w1;
  const Var y0 = pb.forward(x, &w0);
  for (auto& v : pb.head_b.mutable_value()) v += 3.25;
  const Var y1 = pb.forward(x, &w1);
  EXPECT_LT(oracle::rel_err(w1.value(), w0.value()), 1e-12);
  EXPECT_LT(oracle::rel_err(y1.value(), y0.value()), 1e-12);
}

TEST(PromptBlock, GradientCheck) {
  ParamStore store;
  std::mt19937_64 rng(12);
  PromptBlock pb(store, "p", 4, PromptLevel{3, 4, 4, 0}, 3, rng);
  Var x = Var::parameter(oracle::random_real({2, 4, 6, 5}, rng, -1, 1));
  auto params = store.vars();
  params.push_back(x);
  EXPECT_LT(oracle::grad_check([&] { return probe(pb.forward(x)); }, params, 12, rng).rel_err, 1e-4);
}

TEST(Unet, ShapePreservedForOddAndEvenSizes) {
  for (bool prompts : {false, true}) {
    ParamStore store;
    std::mt19937_64 rng(13);
    Unet net(tiny(prompts, 2, 3), store, "u", rng);
    for (std::size_t h : {63, 64, 65}) {
      const Var y = net.forward(input({1, 2, h, 64}, h));
      EXPECT_EQ(y.shape(), (Shape{1, 3, h, 64}));
    }
    EXPECT_EQ(net.forward(input({2, 2, 8, 11}, 1)).shape(), (Shape{2, 3, 8, 11}));
    EXPECT_THROW(net.forward(input({1, 2, 7, 8}, 1)), ShapeError);
    EXPECT_THROW(net.forward(input({1, 3, 8, 8}, 1)), ShapeError);
  }
}

TEST(Unet, Deterministic) {
  ParamStore store;
  std::mt19937_64 rng(14);
  Unet net(tiny(true), store, "u", rng);
  const Var x = input({1, 2, 12, 12}, 3);
  EXPECT_EQ(net.forward(x).array(), net.forward(x).array());
  ParamStore store2;
  std::mt19937_64 rng2(14);
  Unet net2(tiny(true), store2, "u", rng2);
  EXPECT_EQ(net2.forward(x).array(), net.forward(x).array());
}

TEST(Unet, ZeroInitOutputGivesZero) {
  ParamStore store;
  std::mt19937_64 rng(15);
  NetConfig c = tiny(true);
  c.zero_init_output = true;
  Unet net(c, store, "u", rng);
  const Var y = net.forward(input({1, 2, 9, 10}, 4));
  for (double v : y.value()) EXPECT_EQ(v, 0.0);
}

TEST(Unet, FamilyGuards) {
  ParamStore store;
  std::mt19937_64 rng(16);
  EXPECT_THROW(PromptUnet(tiny(false), store, "a", rng), ConfigError);
  EXPECT_THROW(CAUnet(tiny(true), store, "b", rng), ConfigError);
  NetConfig bad = tiny(false);
  bad.levels = 4;
  EXPECT_THROW(CAUnet(bad, store, "c", rng), ConfigError);
}

TEST(Unet, TraceRecordsWeightsPerLevel) {
  ParamStore store;
  std::mt19937_64 rng(17);
  PromptUnet net(tiny(true), store, "u", rng);
  UnetTrace trace;
  net.forward(input({2, 2, 8, 8}, 5), &trace);
  ASSERT_EQ(trace.prompt_weights.size(), 3u);
  for (const auto& w : trace.prompt_weights) EXPECT_EQ(w.shape(), (Shape{2, 3}));
}

TEST(Unet, ZeroPromptsEqualCaunetWithZeroPaddedInputs) {
  ParamStore ps, cs;
  std::mt19937_64 r1(18), r2(19);
  PromptUnet pnet(tiny(true), ps, "u", r1);
  CAUnet cnet(tiny(false), cs, "u", r2);
  for (const auto& [name, v] : ps.entries())
    if (name.find(".components") != std::string::npos)
      for (auto& x : ps.at(name).mutable_value()) x = 0.0;
  // Copy every CAUnet tensor from the prompt net; fuse convs keep the leading
  // (feature) input channels, which is the CAUnet with zeros appended.
  for (const auto& [name, v] : cs.entries()) {
    Var dst = v;
    const Var& src = ps.at(name);
    if (src.shape() == dst.shape()) {
      std::copy(src.value().begin(), src.value().end(), dst.mutable_value().begin());
      continue;
    }
    const std::size_t co = dst.dim(0), ci = dst.dim(1), ci_big = src.dim(1), k2 = dst.dim(2) * dst.dim(3);
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < ci; ++i)
        for (std::size_t t = 0; t < k2; ++t) dst.mutable_value()[(o * ci + i) * k2 + t] = src.value()[(o * ci_big + i) * k2 + t];
  }
  const Var x = input({1, 2, 13, 12}, 6);
  EXPECT_LT(oracle::rel_err(pnet.forward(x).value(), cnet.forward(x).value()), 1e-13);
}

TEST(Unet, CaunetGradientCheck) {
  ParamStore store;
  std::mt19937_64 rng(20);
  CAUnet net(tiny(false), store, "u", rng);
  const Var x = input({1, 2, 8, 8}, 7);
  EXPECT_LT(oracle::grad_check([&] { return probe(net.forward(x)); }, pick(store, 10, rng), 4, rng).rel_err, 1e-4);
}

TEST(Unet, PromptUnetGradientCheckIncludingPrompts) {
  ParamStore store;
  std::mt19937_64 rng(21);
  PromptUnet net(tiny(true), store, "u", rng);
  const Var x = input({1, 2, 8, 8}, 8);
  std::vector<Var> params = pick(store, 8, rng);
  for (const auto& [name, v] : store.entries())
    if (name.find("prompt") != std::string::npos && (name.find("components") != std::string::npos || name.find("head") != std::string::npos))
      params.push_back(v);
  EXPECT_LT(oracle::grad_check([&] { return probe(net.forward(x)); }, params, 4, rng).rel_err, 1e-4);
}

TEST(Unet, ParameterCountMatchesStore) {
  for (bool p : {false, true}) {
    ParamStore store;
    std::mt19937_64 rng(22);
    Unet net(tiny(p), store, "", rng);
    EXPECT_EQ(count_parameters(tiny(p)), store.scalar_count());
  }
  EXPECT_GT(count_parameters(tiny(true)), count_parameters(tiny(false)));
}
