#include <benchmark/benchmark.h>

#include "scl/design.hpp"
#include "scl/estimators.hpp"
#include "scl/geometry.hpp"
#include "scl/outcomes.hpp"
#include "scl/owopt.hpp"

namespace {

void BM_ScalingClusters(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto space = scl::uniform_disk_population(n, n);
  const double h = scl::scaling_rule(n, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(scl::scaling_clusters(space, h));
}
BENCHMARK(BM_ScalingClusters)->Arg(400)->Arg(1600);

void BM_HtEstimate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto space = scl::uniform_disk_population(n, n);
  const double h = scl::scaling_rule(n, 1.0);
  const auto partition = scl::scaling_clusters(space, h);
  const auto sets = scl::neighborhood_clusters(space, partition, h);
  const auto outcomes = scl::make_sim_dgp(space, n);
  const auto draw = scl::draw_treatments(partition, 0.5, 7);
  const scl::Vector Y = scl::realize(outcomes, draw.d);
  for (auto _ : state) benchmark::DoNotOptimize(scl::ipw_ht(Y, draw.b, sets, 0.5));
}
BENCHMARK(BM_HtEstimate)->Arg(400)->Arg(1600);

void BM_OwSolve(benchmark::State& state) {
  const std::size_t n = 60;
  const auto space = scl::uniform_disk_population(n, n);
  const double h = scl::scaling_rule(n, 1.0);
  const auto partition = scl::scaling_clusters(space, h);
  const auto grid = scl::make_size_grid(space, scl::default_ow_sizes(h));
  const auto tables = scl::saturation_tables(space, partition, grid, 0.5, {});
  scl::InterferenceBudget budget;
  for (auto _ : state) benchmark::DoNotOptimize(scl::optimize_weights(tables, budget, h, 0.5));
}
BENCHMARK(BM_OwSolve)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
