// Serial reference vs OpenMP kernels on synthetic power series.
//   ./build/bench/bench_kernels --benchmark_filter=trapezoid

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mlfp/kernels.hpp"
#include "mlfp/telemetry.hpp"

using namespace mlfp;

namespace {

struct Series {
  std::vector<std::int64_t> t;
  std::vector<double> p;
  kernels::SeriesView view() const { return {t, p}; }
};

Series make_series(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> w(80.0, 700.0);
  Series s;
  s.t.resize(n);
  s.p.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.t[i] = static_cast<std::int64_t>(i) * 100;
    s.p[i] = w(rng);
  }
  return s;
}

template <kernels::TrapezoidSum (*F)(kernels::SeriesView, std::int64_t)>
void trapezoid(benchmark::State& state) {
  const auto s = make_series(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(F(s.view(), 10'000));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <double (*F)(kernels::SeriesView, double)>
void time_above(benchmark::State& state) {
  const auto s = make_series(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(F(s.view(), 595.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <void (*F)(std::span<const kernels::SeriesView>, std::span<const std::int64_t>, std::span<double>)>
void resample(benchmark::State& state) {
  std::vector<Series> devices;
  for (int d = 0; d < 8; ++d) devices.push_back(make_series(static_cast<std::size_t>(state.range(0)), 10 + d));
  std::vector<kernels::SeriesView> views;
  for (const auto& d : devices) views.push_back(d.view());
  const auto grid = kernels::union_grid(views);
  std::vector<double> out(grid.size());
  for (auto _ : state) {
    F(views, grid, out);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 8);
}

void integrate(benchmark::State& state, telemetry::ExecutionPolicy policy) {
  std::vector<telemetry::PowerSample> samples;
  const auto n = static_cast<std::size_t>(state.range(0));
  for (int d = 0; d < 8; ++d) {
    const auto s = make_series(n, 20 + d);
    for (std::size_t i = 0; i < n; ++i) samples.push_back({s.t[i], "gpu" + std::to_string(d), s.p[i]});
  }
  const auto trace = telemetry::make_trace(std::move(samples));
  telemetry::IntegrationOptions o;
  o.policy = policy;
  for (auto _ : state) benchmark::DoNotOptimize(telemetry::integrate_energy(trace, o).kwh);
  state.SetItemsProcessed(state.iterations() * state.range(0) * 8);
}

}  // namespace

BENCHMARK(trapezoid<kernels::serial::trapezoid>)->Name("trapezoid/serial")->Range(1 << 12, 1 << 22);
BENCHMARK(trapezoid<kernels::parallel::trapezoid>)->Name("trapezoid/parallel")->Range(1 << 12, 1 << 22);
BENCHMARK(time_above<kernels::serial::time_at_or_above>)->Name("time_at_or_above/serial")->Range(1 << 12, 1 << 22);
BENCHMARK(time_above<kernels::parallel::time_at_or_above>)->Name("time_at_or_above/parallel")->Range(1 << 12, 1 << 22);
BENCHMARK(resample<kernels::serial::resample_mean>)->Name("resample_mean/serial")->Range(1 << 10, 1 << 18);
BENCHMARK(resample<kernels::parallel::resample_mean>)->Name("resample_mean/parallel")->Range(1 << 10, 1 << 18);
BENCHMARK_CAPTURE(integrate, serial, telemetry::ExecutionPolicy::serial)->Range(1 << 12, 1 << 20);
BENCHMARK_CAPTURE(integrate, parallel, telemetry::ExecutionPolicy::parallel)->Range(1 << 12, 1 << 20);

BENCHMARK_MAIN();
