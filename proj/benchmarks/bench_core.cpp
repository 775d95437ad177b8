#include "pfgmm/baselines.hpp"
#include "pfgmm/matrix_kit.hpp"
#include "pfgmm/pfgmm.hpp"
#include "pfgmm/sim.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace pfgmm;

namespace {

Mat random_spd(int d) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N;
  Mat A(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = N(rng);
  return A * A.transpose() + d * Mat::Identity(d, d);
}

SimDraw draw(int p, bool endogenous) {
  SimConfig cfg = SimConfig::example21();
  cfg.p = p;
  cfg.beta0.conservativeResize(p);
  if (endogenous) cfg.endo = Endogeneity{EndoKind::Level1, 6.0, EndoSet::set(1)};
  return generate(cfg, 0);
}

}  // namespace

static void BM_Sqrtm(benchmark::State& state) {
  const SpdBlock A(random_spd(static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(sqrtm_spd(A).matrix().data());
}
BENCHMARK(BM_Sqrtm)->Arg(6)->Arg(32)->Arg(128);

static void BM_PfgmmFit(benchmark::State& state) {
  const SimDraw d = draw(static_cast<int>(state.range(0)), state.range(1) != 0);
  PfgmmOptions opts;
  opts.unpenalized = {0, 1};
  const PenaltySpec pen = PenaltySpec::scad(0.1);
  for (auto _ : state) {
    const FitResult fit = fit_pfgmm(d.data, pen, ProxySpec::log_n(), opts);
    benchmark::DoNotOptimize(fit.objective);
  }
}
BENCHMARK(BM_PfgmmFit)->Args({100, 0})->Args({300, 0})->Args({300, 1})->Unit(benchmark::kMillisecond);

static void BM_MpleFit(benchmark::State& state) {
  const SimDraw d = draw(static_cast<int>(state.range(0)), false);
  FitOptions opts;
  opts.unpenalized = {0, 1};
  const PenaltySpec pen = PenaltySpec::scad(0.5);
  for (auto _ : state) {
    const FitResult fit = fit_mple(d.data, pen, opts);
    benchmark::DoNotOptimize(fit.objective);
  }
}
BENCHMARK(BM_MpleFit)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
