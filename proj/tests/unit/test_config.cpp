#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "oracles.hpp"
#include "promptmr/checkpoint.hpp"
#include "promptmr/config.hpp"
#include "promptmr/error.hpp"
#include "scratch.hpp"

using namespace promptmr;
namespace fs = std::filesystem;

TEST(Config, DefaultsValidate) {
  const ReconConfig c = parse_config("");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.accelerations, (std::vector<int>{4, 8, 10}));
  EXPECT_EQ(c.model.cascades, 12);
  EXPECT_EQ(c.model.adjacency, 2);
  EXPECT_EQ(c.task, TaskSet::all);
}

TEST(Config, YamlAndOverrides) {
  const ReconConfig c = parse_config("seed: 3\nmodel:\n  cascades: 5\n  family: baseline_caunet\n",
                                     {"model.adjacency=0", "accelerations=[4]", "stage1.lr=0.5"});
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.model.cascades, 5);
  EXPECT_EQ(c.model.family, ModelFamily::baseline_caunet);
  EXPECT_EQ(c.model.adjacency, 0);
  EXPECT_EQ(c.model.denoiser.in_channels, 2);
  EXPECT_FALSE(c.model.denoiser.use_prompts);
  EXPECT_EQ(c.accelerations, std::vector<int>{4});
  EXPECT_DOUBLE_EQ(c.stage1.optim.lr, 0.5);
}

TEST(Config, UnknownKeyIsConfigError) {
  EXPECT_THROW(parse_config("modle:\n  cascades: 3\n"), ConfigError);
  EXPECT_THROW(parse_config("", {"model.casades=3"}), ConfigError);
  EXPECT_THROW(parse_config("", {"no_equals_sign"}), ConfigError);
}

TEST(Config, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(parse_config("version: 2\n"), ConfigError);
  EXPECT_THROW(parse_config("task: cardiac\n"), ConfigError);
  EXPECT_THROW(parse_config("accelerations: []\n"), ConfigError);
  EXPECT_THROW(parse_config("model:\n  cascades: zero\n"), ConfigError);
  EXPECT_THROW(parse_config(": : :\n"), ConfigError);
}

TEST(Config, DumpRoundTrips) {
  const ReconConfig a = parse_config("seed: 9\nrun_dir: /tmp/x\nrefine:\n  boundary: replicate\n", {"model.adjacency=1"});
  const ReconConfig b = parse_config(dump_config(a));
  EXPECT_EQ(dump_config(a), dump_config(b));
  EXPECT_EQ(b.refine.boundary, Boundary::replicate);
}

TEST(Config, SeedArgumentWins) {
  const fs::path dir = oracle::scratch("config_seed");
  fs::create_directories(dir);
  std::ofstream(dir / "c.yaml") << "seed: 4\n";
  EXPECT_EQ(load_config(dir / "c.yaml", {"seed=5"}, 6).seed, 6u);
  EXPECT_EQ(load_config(dir / "c.yaml", {"seed=5"}).seed, 5u);
  EXPECT_THROW(load_config(dir / "missing.yaml"), ConfigError);
}

TEST(Config, DataDirFromEnvironment) {
  ::setenv("PROMPTMR_DATA_DIR", "/srv/mri", 1);
  EXPECT_EQ(load_config(std::nullopt).data_dir, fs::path("/srv/mri"));
  EXPECT_EQ(load_config(std::nullopt, {"data_dir=/elsewhere"}).data_dir, fs::path("/elsewhere"));
  ::unsetenv("PROMPTMR_DATA_DIR");
  EXPECT_EQ(load_config(std::nullopt).data_dir, fs::path("data"));
}

TEST(Config, ArchitectureJsonRoundTrip) {
  const ReconConfig c = parse_config("", {"model.adjacency=1", "refine.boundary=cyclic"});
  EXPECT_EQ(to_json(unrolled_config_from_json(to_json(c.model))), to_json(c.model));
  EXPECT_EQ(to_json(refine_config_from_json(to_json(c.refine))), to_json(c.refine));
}

namespace {

UnrolledConfig tiny_model() {
  UnrolledConfig c = UnrolledConfig::defaults(ModelFamily::promptmr, 1);
  c.cascades = 2;
  for (NetConfig* n : {&c.denoiser, &c.sme}) {
    n->base_width = 4;
    n->reduction = 2;
    n->cab_per_block = 1;
    n->prompt->levels = {PromptLevel{3, 6, 6, 0}, PromptLevel{3, 4, 4, 0}, PromptLevel{3, 2, 2, 0}};
  }
  c.sync();
  return c;
}

}  // namespace

TEST(Checkpoint, Stage1RoundTripIsFloat32Exact) {
  const fs::path dir = oracle::scratch("ckpt_s1");
  const UnrolledModel a(tiny_model(), 1);
  save_stage1(dir, a, {{"epoch", 3}});
  const UnrolledModel b = load_stage1(dir);
  EXPECT_EQ(to_json(b.config()), to_json(a.config()));
  ASSERT_EQ(a.params().entries().size(), b.params().entries().size());
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    const auto& [name, va] = a.params().entries()[i];
    const auto vb = b.params().at(name).value();
    for (std::size_t j = 0; j < va.size(); ++j) EXPECT_EQ(vb[j], static_cast<double>(static_cast<float>(va.value()[j])));
  }
  EXPECT_EQ(read_checkpoint(dir).info.at("epoch"), 3);
}

TEST(Checkpoint, KindMismatchIsFormatError) {
  const fs::path dir = oracle::scratch("ckpt_kind");
  save_stage2(dir, Refiner(RefineConfig{}, 2));
  EXPECT_THROW(load_stage1(dir), FormatError);
  EXPECT_NO_THROW(load_stage2(dir));
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
  const fs::path dir = oracle::scratch("ckpt_shape");
  const UnrolledModel a(tiny_model(), 1);
  save_stage1(dir, a);
  UnrolledConfig other = tiny_model();
  other.denoiser.base_width = 8;
  other.sync();
  UnrolledModel b(other, 1);
  EXPECT_THROW(assign_parameters(b.params(), read_checkpoint(dir)), FormatError);
}

TEST(Checkpoint, TrainStateRestoresEverything) {
  const fs::path dir = oracle::scratch("ckpt_state");
  UnrolledModel a(tiny_model(), 1);
  AdamW opt_a(a.params().vars(), OptimConfig{});
  for (auto& v : a.params().vars()) {
    auto g = v.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.01 * static_cast<double>(i % 7) - 0.02;
  }
  opt_a.step(1e-3);
  std::mt19937_64 rng(77);
  rng.discard(13);
  TrainState st{2, 9, 0.75, serialize_rng(rng), {0.5, 0.25}};
  save_train_state(dir, st, a.params(), opt_a);

  UnrolledModel b(tiny_model(), 99);
  AdamW opt_b(b.params().vars(), OptimConfig{});
  const TrainState got = load_train_state(dir, b.params(), opt_b);
  EXPECT_EQ(got.epoch, 2);
  EXPECT_EQ(got.step, 9);
  EXPECT_EQ(got.best_val_ssim, 0.75);
  EXPECT_EQ(got.loss_history, st.loss_history);
  EXPECT_EQ(opt_b.steps(), opt_a.steps());
  EXPECT_EQ(opt_b.first_moments(), opt_a.first_moments());
  EXPECT_EQ(opt_b.second_moments(), opt_a.second_moments());
  for (const auto& [name, v] : a.params().entries()) {
    const auto w = b.params().at(name).value();
    EXPECT_TRUE(std::equal(v.value().begin(), v.value().end(), w.begin())) << name;
  }
  std::mt19937_64 r2 = deserialize_rng(got.rng_state);
  EXPECT_EQ(r2(), rng());
}
