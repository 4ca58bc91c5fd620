#include <omp.h>

#include <algorithm>
#include <limits>

#include "mlfp/kernels.hpp"
#include "segment.hpp"

namespace mlfp::kernels::parallel {

namespace {

std::size_t block_count(std::size_t segments) {
  return (segments + kReductionBlock - 1) / kReductionBlock;
}

}  // namespace

TrapezoidSum trapezoid(SeriesView series, std::int64_t max_gap_ms) {
  const auto& t = series.timestamp_ms;
  const auto& p = series.power_w;
  TrapezoidSum result;
  if (t.size() < 2) return result;

  const std::size_t segments = t.size() - 1;
  const std::size_t blocks = block_count(segments);
  std::vector<double> partial(blocks, 0.0);
  std::vector<std::size_t> gaps(blocks, 0);
  std::vector<std::ptrdiff_t> unsorted(blocks, -1);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReductionBlock + 1;
    const std::size_t hi = std::min(lo + kReductionBlock, segments + 1);
    double sum = 0.0;
    std::size_t skipped = 0;
    std::ptrdiff_t bad = -1;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::int64_t dt = t[i] - t[i - 1];
      if (dt <= 0) {
        if (bad < 0) bad = static_cast<std::ptrdiff_t>(i - 1);
        continue;
      }
      if (dt > max_gap_ms) {
        ++skipped;
        continue;
      }
      sum += 0.5 * (p[i - 1] + p[i]) * static_cast<double>(dt);
    }
    partial[b] = sum;
    gaps[b] = skipped;
    unsorted[b] = bad;
  }

  for (std::size_t b = 0; b < blocks; ++b) {
    result.watt_ms += partial[b];
    result.skipped_gaps += gaps[b];
    if (result.first_unsorted < 0 && unsorted[b] >= 0) result.first_unsorted = unsorted[b];
  }
  return result;
}

double time_at_or_above(SeriesView series, double threshold_w) {
  const auto& t = series.timestamp_ms;
  const auto& p = series.power_w;
  if (t.size() < 2) return 0.0;

  const std::size_t segments = t.size() - 1;
  const std::size_t blocks = block_count(segments);
  std::vector<double> partial(blocks, 0.0);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReductionBlock + 1;
    const std::size_t hi = std::min(lo + kReductionBlock, segments + 1);
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      sum += detail::segment_time_at_or_above(t[i - 1], p[i - 1], t[i], p[i], threshold_w);
    }
    partial[b] = sum;
  }

  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

void resample_mean(std::span<const SeriesView> devices, std::span<const std::int64_t> grid,
                   std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(grid.size()); ++g) {
    const std::int64_t at = grid[g];
    double sum = 0.0;
    int covering = 0;
    for (const auto& dev : devices) {
      const auto& t = dev.timestamp_ms;
      if (t.empty() || at < t.front() || at > t.back()) continue;
      const auto it = std::upper_bound(t.begin(), t.end(), at);
      const auto c = static_cast<std::size_t>(std::distance(t.begin(), it)) - 1;
      sum += detail::interpolate(t, dev.power_w, c, at);
      ++covering;
    }
    out[g] = covering > 0 ? sum / covering : std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace mlfp::kernels::parallel

namespace mlfp::kernels {

std::vector<std::int64_t> union_grid(std::span<const SeriesView> devices) {
  std::vector<std::int64_t> grid;
  std::size_t total = 0;
  for (const auto& d : devices) total += d.timestamp_ms.size();
  grid.reserve(total);
  for (const auto& d : devices) grid.insert(grid.end(), d.timestamp_ms.begin(), d.timestamp_ms.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

}  // namespace mlfp::kernels
