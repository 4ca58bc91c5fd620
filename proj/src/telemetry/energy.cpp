#include <cmath>
#include <string>

#include "mlfp/kernels.hpp"
#include "mlfp/telemetry.hpp"

namespace mlfp::telemetry {

namespace {

constexpr double kWattMsPerKwh = 3.6e9;

kernels::SeriesView view_of(const DeviceSeries& d) { return {d.timestamp_ms, d.power_w}; }

}  // namespace

EnergyEstimate integrate_energy(const PowerTrace& trace, const IntegrationOptions& options) {
  if (!(options.node_overhead_factor >= 1.0) || !std::isfinite(options.node_overhead_factor)) {
    throw ArgumentError("node overhead factor must be a finite value >= 1");
  }
  if (options.max_gap_ms <= 0) throw ArgumentError("max gap must be positive");

  EnergyEstimate estimate;
  for (const auto& device : trace.devices) {
    DeviceEnergy de{device.device_id, 0.0, 0};
    if (device.size() < 2) {
      estimate.warnings.push_back("device " + device.device_id + " has a single sample; contributes 0 kWh");
      estimate.per_device.push_back(de);
      continue;
    }
    const auto sum = options.policy == ExecutionPolicy::serial
                         ? kernels::serial::trapezoid(view_of(device), options.max_gap_ms)
                         : kernels::parallel::trapezoid(view_of(device), options.max_gap_ms);
    if (sum.first_unsorted >= 0) {
      throw InternalError("device " + device.device_id + " samples not strictly increasing at index " +
                          std::to_string(sum.first_unsorted));
    }
    if (sum.skipped_gaps > 0) {
      estimate.warnings.push_back("device " + device.device_id + ": " + std::to_string(sum.skipped_gaps) +
                                  " gap(s) longer than " + std::to_string(options.max_gap_ms) +
                                  " ms contribute no energy");
    }
    de.kwh = sum.watt_ms / kWattMsPerKwh * options.node_overhead_factor;
    de.skipped_gaps = sum.skipped_gaps;
    estimate.kwh += de.kwh;
    estimate.per_device.push_back(std::move(de));
  }
  return estimate;
}

double extrapolate_energy(double node_energy_kwh, int measured_nodes, int total_nodes) {
  if (measured_nodes < 1) throw ArgumentError("measured node count must be at least 1");
  if (total_nodes < measured_nodes) {
    throw ArgumentError("total nodes (" + std::to_string(total_nodes) + ") less than measured nodes (" +
                        std::to_string(measured_nodes) + ")");
  }
  if (!(node_energy_kwh >= 0.0)) throw ArgumentError("energy must be non-negative");
  return node_energy_kwh * total_nodes / measured_nodes;
}

}  // namespace mlfp::telemetry
