#include <algorithm>
#include <cmath>
#include <string>

#include "mlfp/kernels.hpp"
#include "mlfp/telemetry.hpp"

namespace mlfp::telemetry {

namespace {

enum class Band { high, mid, low };

double crossing_ms(std::int64_t t0, double p0, std::int64_t t1, double p1, double level) {
  if (p0 == p1) return static_cast<double>(t0);
  return static_cast<double>(t0) + static_cast<double>(t1 - t0) * (p0 - level) / (p0 - p1);
}

void validate(const FluctuationParams& p) {
  if (!(p.device_max_w > 0.0)) throw ArgumentError("device max power must be positive");
  if (!(p.lo_frac >= 0.0 && p.lo_frac < p.hi_frac && p.hi_frac <= 1.0)) {
    throw ArgumentError("thresholds out of order: need 0 <= lo < hi <= 1 (got lo=" + std::to_string(p.lo_frac) +
                        ", hi=" + std::to_string(p.hi_frac) + ")");
  }
  if (p.min_dwell_ms <= 0) throw ArgumentError("min dwell must be positive");
}

}  // namespace

NodeSeries node_mean_series(const PowerTrace& trace, ExecutionPolicy policy) {
  std::vector<kernels::SeriesView> views;
  views.reserve(trace.devices.size());
  for (const auto& d : trace.devices) views.push_back({d.timestamp_ms, d.power_w});

  NodeSeries node;
  node.timestamp_ms = kernels::union_grid(views);
  node.mean_power_w.resize(node.timestamp_ms.size());
  if (policy == ExecutionPolicy::serial) {
    kernels::serial::resample_mean(views, node.timestamp_ms, node.mean_power_w);
  } else {
    kernels::parallel::resample_mean(views, node.timestamp_ms, node.mean_power_w);
  }
  return node;
}

FluctuationReport detect_fluctuations(const PowerTrace& trace, const FluctuationParams& params) {
  validate(params);
  FluctuationReport report;
  report.hi_threshold_w = params.hi_frac * params.device_max_w;
  report.lo_threshold_w = params.lo_frac * params.device_max_w;
  const double hi = report.hi_threshold_w;
  const double lo = report.lo_threshold_w;

  const NodeSeries node = node_mean_series(trace, params.policy);
  const auto& t = node.timestamp_ms;
  const auto& p = node.mean_power_w;
  if (t.empty()) return report;

  const kernels::SeriesView view{t, p};
  const double duration = static_cast<double>(t.back() - t.front());
  if (duration > 0.0) {
    const double active = params.policy == ExecutionPolicy::serial ? kernels::serial::time_at_or_above(view, hi)
                                                                   : kernels::parallel::time_at_or_above(view, hi);
    report.duty_cycle_active = std::clamp(active / duration, 0.0, 1.0);
  } else {
    report.duty_cycle_active = p.front() >= hi ? 1.0 : 0.0;
  }

  for (std::size_t i = 1; i < t.size(); ++i) {
    const double ramp = std::abs(p[i] - p[i - 1]) / (static_cast<double>(t[i] - t[i - 1]) / 1000.0);
    report.max_ramp_w_per_s = std::max(report.max_ramp_w_per_s, ramp);
  }

  // Hysteresis scan: an episode opens after a run of high samples, collects
  // every low sample, and closes at the next high sample.
  auto band = [&](double w) { return w >= hi ? Band::high : (w < lo ? Band::low : Band::mid); };

  bool have_high_run = false;
  double high_sum = 0.0;
  std::size_t high_count = 0;
  bool in_high_run = false;

  bool episode_has_low = false;
  std::size_t first_low = 0, last_low = 0;
  double low_sum = 0.0;
  std::size_t low_count = 0;
  double episode_pre_mean = 0.0;

  for (std::size_t i = 0; i < t.size(); ++i) {
    const Band b = band(p[i]);
    if (b == Band::high) {
      if (episode_has_low) {
        const double start = crossing_ms(t[first_low - 1], p[first_low - 1], t[first_low], p[first_low], lo);
        const double end = last_low + 1 < t.size()
                               ? crossing_ms(t[last_low], p[last_low], t[last_low + 1], p[last_low + 1], lo)
                               : static_cast<double>(t[last_low]);
        if (end - start >= static_cast<double>(params.min_dwell_ms)) {
          report.events.push_back({std::llround(start), std::llround(end), episode_pre_mean,
                                   low_sum / static_cast<double>(low_count)});
        }
        episode_has_low = false;
      }
      if (!in_high_run) {
        high_sum = 0.0;
        high_count = 0;
        in_high_run = true;
      }
      high_sum += p[i];
      ++high_count;
      have_high_run = true;
      continue;
    }

    if (in_high_run) {
      in_high_run = false;
      episode_pre_mean = high_sum / static_cast<double>(high_count);
    }
    if (b == Band::low && have_high_run) {
      if (!episode_has_low) {
        episode_has_low = true;
        first_low = i;
        low_sum = 0.0;
        low_count = 0;
      }
      last_low = i;
      low_sum += p[i];
      ++low_count;
    }
  }

  report.event_count = report.events.size();
  return report;
}

}  // namespace mlfp::telemetry
