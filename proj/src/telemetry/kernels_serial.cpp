#include <cmath>
#include <limits>

#include "mlfp/kernels.hpp"
#include "segment.hpp"

namespace mlfp::kernels::serial {

TrapezoidSum trapezoid(SeriesView series, std::int64_t max_gap_ms) {
  TrapezoidSum result;
  const auto& t = series.timestamp_ms;
  const auto& p = series.power_w;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const std::int64_t dt = t[i] - t[i - 1];
    if (dt <= 0) {
      if (result.first_unsorted < 0) result.first_unsorted = static_cast<std::ptrdiff_t>(i - 1);
      continue;
    }
    if (dt > max_gap_ms) {
      ++result.skipped_gaps;
      continue;
    }
    result.watt_ms += 0.5 * (p[i - 1] + p[i]) * static_cast<double>(dt);
  }
  return result;
}

double time_at_or_above(SeriesView series, double threshold_w) {
  double total = 0.0;
  const auto& t = series.timestamp_ms;
  const auto& p = series.power_w;
  for (std::size_t i = 1; i < t.size(); ++i) {
    total += detail::segment_time_at_or_above(t[i - 1], p[i - 1], t[i], p[i], threshold_w);
  }
  return total;
}

void resample_mean(std::span<const SeriesView> devices, std::span<const std::int64_t> grid,
                   std::span<double> out) {
  std::vector<std::size_t> cursor(devices.size(), 0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const std::int64_t at = grid[g];
    double sum = 0.0;
    int covering = 0;
    for (std::size_t d = 0; d < devices.size(); ++d) {
      const auto& t = devices[d].timestamp_ms;
      const auto& p = devices[d].power_w;
      if (t.empty() || at < t.front() || at > t.back()) continue;
      std::size_t& c = cursor[d];
      while (c + 1 < t.size() && t[c + 1] <= at) ++c;
      sum += detail::interpolate(t, p, c, at);
      ++covering;
    }
    out[g] = covering > 0 ? sum / covering : std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace mlfp::kernels::serial
