// Serial reference loops against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "cfaudit/forest.hpp"
#include "cfaudit/inference.hpp"
#include "cfaudit/simulation.hpp"

using namespace cfaudit;

namespace {

const GeneratedData& scenario_data() {
  static const GeneratedData data = [] {
    ScenarioConfig cfg = ScenarioConfig::preset(2);
    cfg.forest.n_trees = 30;
    const GeneratedData train = generate_scenario_data(cfg, Role::train, 1000, 1);
    const RiskModel model = train_risk_model(train, cfg, 2);
    return generate_scenario_data(cfg, Role::estimation, 3000, 3, &model);
  }();
  return data;
}

void BM_PermutationReference(benchmark::State& state) {
  const auto exec = state.range(0) ? Execution::parallel : Execution::serial;
  const Dataset& ds = scenario_data().data;
  for (auto _ : state) {
    const auto ref = permutation_reference(ds, MetricSpec{}, RateKind::negative, MetricId::avg, 100, 7, exec);
    benchmark::DoNotOptimize(ref.samples.data());
  }
  state.SetLabel(exec == Execution::parallel ? "parallel" : "serial");
}
BENCHMARK(BM_PermutationReference)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RescaledBootstrap(benchmark::State& state) {
  const auto exec = state.range(0) ? Execution::parallel : Execution::serial;
  const Dataset& ds = scenario_data().data;
  for (auto _ : state) {
    const auto br = rescaled_bootstrap(ds, MetricSpec{}, RateKind::negative, MetricId::avg, 200, ResampleRule{}, 8, exec);
    benchmark::DoNotOptimize(br.se);
  }
  state.SetLabel(exec == Execution::parallel ? "parallel" : "serial");
}
BENCHMARK(BM_RescaledBootstrap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ForestFit(benchmark::State& state) {
  const auto exec = state.range(0) ? Execution::parallel : Execution::serial;
  const GeneratedData& g = scenario_data();
  ForestConfig cfg;
  cfg.n_trees = 100;
  for (auto _ : state) {
    const ForestModel f = fit_random_forest(g.data.covariates(), g.data.outcome(), cfg, exec);
    benchmark::DoNotOptimize(f.trees.data());
  }
  state.SetLabel(exec == Execution::parallel ? "parallel" : "serial");
}
BENCHMARK(BM_ForestFit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
