#pragma once

// Data-parallel inner loops of the telemetry module. Every kernel exists in
// two forms: `serial` is the plain reference loop kept for testing, and
// `parallel` is the OpenMP version used in production paths. The parallel
// reductions sum fixed-size blocks and then combine the block partials in
// order, so their results do not depend on the thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mlfp::kernels {

inline constexpr std::size_t kReductionBlock = 8192;

struct SeriesView {
  std::span<const std::int64_t> timestamp_ms;
  std::span<const double> power_w;
};

struct TrapezoidSum {
  double watt_ms = 0.0;
  std::size_t skipped_gaps = 0;
  // Index of the first segment with dt <= 0, or -1.
  std::ptrdiff_t first_unsorted = -1;
};

namespace serial {

TrapezoidSum trapezoid(SeriesView series, std::int64_t max_gap_ms);
// Milliseconds during which the linearly interpolated power is >= threshold.
double time_at_or_above(SeriesView series, double threshold_w);
// Mean over devices covering each grid time; NaN where none does.
void resample_mean(std::span<const SeriesView> devices, std::span<const std::int64_t> grid,
                   std::span<double> out);

}  // namespace serial

namespace parallel {

TrapezoidSum trapezoid(SeriesView series, std::int64_t max_gap_ms);
double time_at_or_above(SeriesView series, double threshold_w);
void resample_mean(std::span<const SeriesView> devices, std::span<const std::int64_t> grid,
                   std::span<double> out);

}  // namespace parallel

// Sorted union of all timestamps.
std::vector<std::int64_t> union_grid(std::span<const SeriesView> devices);

}  // namespace mlfp::kernels
