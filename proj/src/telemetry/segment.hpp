#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace mlfp::kernels::detail {

inline double segment_time_at_or_above(std::int64_t t0, double p0, std::int64_t t1, double p1,
                                       double threshold) {
  const double dt = static_cast<double>(t1 - t0);
  if (dt <= 0.0) return 0.0;
  const bool a = p0 >= threshold;
  const bool b = p1 >= threshold;
  if (a && b) return dt;
  if (!a && !b) return 0.0;
  if (a) return dt * (p0 - threshold) / (p0 - p1);
  return dt * (p1 - threshold) / (p1 - p0);
}

// Value at `at`, where t[c] <= at and either c is the last index or at < t[c+1].
inline double interpolate(std::span<const std::int64_t> t, std::span<const double> p, std::size_t c,
                          std::int64_t at) {
  if (t[c] == at || c + 1 >= t.size()) return p[c];
  const double f = static_cast<double>(at - t[c]) / static_cast<double>(t[c + 1] - t[c]);
  return p[c] + f * (p[c + 1] - p[c]);
}

}  // namespace mlfp::kernels::detail
