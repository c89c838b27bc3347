#include "twinbeam/gaussian.hpp"
#include "twinbeam/propagator.hpp"
#include "twinbeam/scenario.hpp"
#include "twinbeam/schmidt.hpp"

#include <benchmark/benchmark.h>

using namespace twinbeam;

namespace {

ScenarioConfig apodized(int n_points) {
  ScenarioConfig c;
  c.geometry = Geometry::ApodizedSingle;
  c.n_points = n_points;
  c.n_domains = 1000;
  return c;
}

// Pump strength giving <N_S> = 1, so the exponentials are not trivially close to the identity.
double unit_gain_pump(const SourceModel& m) { return m.calibrate(1.0).n_pump; }

void BM_StitchChunked(benchmark::State& state) {
  SourceModel m(apodized(static_cast<int>(state.range(0))));
  PumpSpectrum pump = m.pump(unit_gain_pump(m));
  for (auto _ : state) benchmark::DoNotOptimize(stitch(m.profile(), m.grid(), m.medium(), pump));
}
BENCHMARK(BM_StitchChunked)->Arg(41)->Arg(81)->Arg(161)->Unit(benchmark::kMillisecond);

void BM_StitchNaive(benchmark::State& state) {
  SourceModel m(apodized(static_cast<int>(state.range(0))));
  PumpSpectrum pump = m.pump(unit_gain_pump(m));
  for (auto _ : state) benchmark::DoNotOptimize(stitch_naive(m.profile(), m.grid(), m.medium(), pump));
}
BENCHMARK(BM_StitchNaive)->Arg(41)->Arg(81)->Arg(161)->Unit(benchmark::kMillisecond);

void BM_DomainExponential(benchmark::State& state) {
  SourceModel m(apodized(static_cast<int>(state.range(0))));
  GeneratorBlocks q = assemble_generator(m.grid(), m.medium(), m.pump(unit_gain_pump(m)), 1);
  double dz = m.profile().domain_length;
  for (auto _ : state) benchmark::DoNotOptimize(domain_propagator(q, dz));
}
BENCHMARK(BM_DomainExponential)->Arg(81)->Arg(161)->Arg(321)->Unit(benchmark::kMillisecond);

void BM_SchmidtDecompose(benchmark::State& state) {
  SourceModel m(apodized(static_cast<int>(state.range(0))));
  Propagator u = m.propagator(unit_gain_pump(m));
  for (auto _ : state) benchmark::DoNotOptimize(schmidt_decompose(u, m.grid()));
}
BENCHMARK(BM_SchmidtDecompose)->Arg(81)->Arg(161)->Arg(321)->Unit(benchmark::kMillisecond);

void BM_FilteredDecomposition(benchmark::State& state) {
  SourceModel m(apodized(static_cast<int>(state.range(0))));
  SchmidtDecomposition d = schmidt_decompose(m.propagator(unit_gain_pump(m)), m.grid());
  Vec t = filter_on_grid(FilterFunction::top_hat(0.0, 1.5), m.grid());
  for (auto _ : state) {
    CovarianceMatrix cov = covariance_from_state(d, t);
    WilliamsonResult w = williamson(cov.V);
    benchmark::DoNotOptimize(bloch_messiah(w.S));
  }
}
BENCHMARK(BM_FilteredDecomposition)->Arg(81)->Arg(161)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
