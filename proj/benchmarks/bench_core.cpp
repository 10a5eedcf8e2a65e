#include <benchmark/benchmark.h>

#include <random>

#include "promptmr/fourier.hpp"
#include "promptmr/metrics.hpp"
#include "promptmr/nets.hpp"
#include "promptmr/unrolled.hpp"

using namespace promptmr;

namespace {

ComplexArray noise(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  ComplexArray a(std::move(s));
  for (auto& v : a.vec()) v = cdouble(n(rng), n(rng));
  return a;
}

void BM_Fft2c(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const ComplexArray x = noise({4, n, n}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fft2c(x));
}
BENCHMARK(BM_Fft2c)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  ParamStore store;
  const Conv2d conv = make_conv(store, "c", static_cast<int>(c), static_cast<int>(c), 3, 1, true, rng);
  const ag::Var x = ag::Var::constant(RealArray({1, c, 64, 64}, 0.5));
  ag::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv(x));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(c * c * 9 * 64 * 64));
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(32);

void BM_UnetForward(benchmark::State& state) {
  NetConfig cfg;
  cfg.in_channels = cfg.out_channels = 10;
  cfg.base_width = static_cast<int>(state.range(0));
  cfg.use_prompts = true;
  cfg.prompt = PromptConfig{};
  ParamStore store;
  std::mt19937_64 rng(3);
  Unet net(cfg, store, "u", rng);
  const ag::Var x = ag::Var::constant(RealArray({1, 10, 64, 64}, 0.1));
  ag::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_UnetForward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

// One Stage-I training step (forward + SSIM loss + backward) on a single window.
void BM_Stage1Step(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  UnrolledConfig cfg = UnrolledConfig::defaults(ModelFamily::promptmr, static_cast<int>(state.range(3)));
  cfg.cascades = static_cast<int>(state.range(2));
  cfg.denoiser.base_width = static_cast<int>(state.range(1));
  cfg.sync();
  UnrolledModel model(cfg, 4);
  PhantomSpec spec;
  spec.ky = spec.kx = n;
  spec.n_frames = 6;
  const CaseRecord rec = simulate_case(spec);
  const auto mask = make_mask(static_cast<int>(n), 4, static_cast<int>(n / 4), MaskScheme::equispaced, 0);
  const KSpaceVolume y = apply_mask(rec.kspace, mask);
  const RealArray target = take(rec.target, 2);
  for (auto _ : state) {
    model.params().zero_grad();
    ag::backward(ssim_loss(model.reconstruct_frame(y, mask, 2), target));
  }
}
BENCHMARK(BM_Stage1Step)
    ->Args({32, 8, 4, 1})
    ->Args({32, 12, 6, 1})
    ->Args({64, 8, 4, 1})
    ->Args({64, 32, 12, 2})
    ->Unit(benchmark::kMillisecond)
    ->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
