// Timings for the phase-map DFT and agent interaction.
// PnP-RANSAC is timed at two correspondence counts.

#include <benchmark/benchmark.h>

#include "agentreg/attention.hpp"
#include "agentreg/numerics.hpp"
#include "agentreg/phase.hpp"
#include "agentreg/pose.hpp"
#include "agentreg/synth.hpp"

using namespace agentreg;

namespace {

void BM_Dft2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor x = random_normal({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dft2(x));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Dft2)->RangeMultiplier(2)->Range(8, 64)->Complexity();

void BM_PhaseMap(benchmark::State& state) {
  Rng rng(2);
  Tensor img({32, 32, 3});
  for (double& v : img.values()) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(extract_phase_map(img));
}
BENCHMARK(BM_PhaseMap);

void BM_RaiForward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const std::size_t c = 16, pi = 64, pp = 64;
  Rng rng(3);
  const Tensor agents = random_normal({k, c}, rng);
  const Tensor fi = random_normal({pi, c}, rng), fp = random_normal({pp, c}, rng);
  const RaiWeights w{random_normal({c, c}, rng, 0.3), random_normal({c, c}, rng, 0.3),
                     random_normal({c, c}, rng, 0.3)};
  const std::vector<double> masks(k, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(rai_attention(agents, fi, fp, masks, w));
}
BENCHMARK(BM_RaiForward)->Arg(4)->Arg(12)->Arg(32);

void BM_RaiBackward(benchmark::State& state) {
  const std::size_t k = 12, c = 16, pi = 64, pp = 64;
  Rng rng(4);
  const Tensor agents = random_normal({k, c}, rng);
  const Tensor fi = random_normal({pi, c}, rng), fp = random_normal({pp, c}, rng);
  const RaiWeights w{random_normal({c, c}, rng, 0.3), random_normal({c, c}, rng, 0.3),
                     random_normal({c, c}, rng, 0.3)};
  const std::vector<double> masks(k, 1.0);
  const Tensor gi = random_normal({pi, c}, rng), gp = random_normal({pp, c}, rng);
  RaiCache cache;
  rai_attention(agents, fi, fp, masks, w, &cache);
  for (auto _ : state) benchmark::DoNotOptimize(attention_backward(cache, w, gi, gp));
}
BENCHMARK(BM_RaiBackward);

void BM_RansacPnp(benchmark::State& state) {
  Rng gen(5);
  const PnpProblem prob = generate_pnp_problem(static_cast<std::size_t>(state.range(0)), 1.0, 0.3, gen);
  for (auto _ : state) {
    Rng rng(6);
    benchmark::DoNotOptimize(ransac_pnp(prob.pairs, prob.camera, RansacConfig{}, rng));
  }
}
BENCHMARK(BM_RansacPnp)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
