#include <benchmark/benchmark.h>

#include "ivcace/counts.hpp"
#include "ivcace/em.hpp"
#include "ivcace/estimands.hpp"
#include "ivcace/simulation.hpp"

using namespace ivcace;

namespace {

const Dataset& single_cov_data() {
  static const Dataset d = generate(scenario_params(Scenario::Nonignorable), 5000, 1).records;
  return d;
}

const RegistryDesign& registry() {
  static const RegistryDesign r = registry_like_design();
  return r;
}

const Dataset& registry_data() {
  static const Dataset d = generate_from_params(registry().spec, registry().params, 20000, 1).records;
  return d;
}

void BM_EStepRegistry(benchmark::State& state) {
  const auto counts = tabulate_observed(registry_data(), registry().spec);
  for (auto _ : state) benchmark::DoNotOptimize(e_step(registry().params, counts).total());
}
BENCHMARK(BM_EStepRegistry);

void BM_FitSingleCovariate(benchmark::State& state) {
  FitConfig cfg;
  cfg.n_restarts = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_em(single_cov_data(), single_cov_spec(), cfg).loglik());
}
BENCHMARK(BM_FitSingleCovariate)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_FitRegistry(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(fit_em(registry_data(), registry().spec, FitConfig{}).loglik());
}
BENCHMARK(BM_FitRegistry)->Unit(benchmark::kMillisecond);

// One bootstrap replicate: resample plus a warm-started single-restart fit.
void BM_BootstrapReplicate(benchmark::State& state) {
  const auto point = fit_em(registry_data(), registry().spec, FitConfig{});
  BootstrapConfig boot;
  boot.n_resamples = 1;
  const std::vector<EstimandTarget> t{EstimandTarget::weighted(Weighting::ComplierCount)};
  std::uint64_t seed = 1;
  for (auto _ : state) {
    boot.seed = seed++;
    benchmark::DoNotOptimize(bootstrap_ci(registry_data(), registry().spec, FitConfig{}, boot, t, point).rows);
  }
}
BENCHMARK(BM_BootstrapReplicate)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
