#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mlfp/errors.hpp"

namespace mlfp::telemetry {

inline constexpr double kH100MaxPowerW = 700.0;
inline constexpr double kPowerSlackFactor = 1.1;
inline constexpr int kDefaultGpusPerNode = 8;
inline constexpr std::int64_t kMaxBridgedGapMs = 10'000;

struct PowerSample {
  std::int64_t timestamp_ms = 0;
  std::string device_id;
  double power_w = 0.0;

  bool operator==(const PowerSample&) const = default;
};

// One device's samples in structure-of-arrays form, strictly increasing in
// time. The kernels operate on these spans directly.
struct DeviceSeries {
  std::string device_id;
  std::vector<std::int64_t> timestamp_ms;
  std::vector<double> power_w;

  std::size_t size() const { return timestamp_ms.size(); }
  bool operator==(const DeviceSeries&) const = default;
};

struct PowerTrace {
  std::vector<DeviceSeries> devices;  // sorted by device_id
  int measured_node_count = 1;
  int gpus_per_node = kDefaultGpusPerNode;

  std::size_t sample_count() const;
  std::int64_t first_timestamp_ms() const;
  std::int64_t last_timestamp_ms() const;
  // last - first over all devices; 0 for fewer than two distinct timestamps.
  std::int64_t duration_ms() const;
  std::vector<PowerSample> samples() const;

  bool operator==(const PowerTrace&) const = default;
};

// Groups loose samples by device and sorts each stream. Duplicate timestamps
// within one device throw ValidationError.
PowerTrace make_trace(std::vector<PowerSample> samples, int measured_node_count = 1,
                      int gpus_per_node = kDefaultGpusPerNode);

enum class TraceFormat { csv, jsonl };

TraceFormat trace_format_from_name(const std::string& name);
// Guesses from the file extension (.csv, .jsonl, .ndjson); throws on anything else.
TraceFormat trace_format_from_path(const std::string& path);

struct ParseOptions {
  int measured_node_count = 1;
  int gpus_per_node = kDefaultGpusPerNode;
  double device_max_w = kH100MaxPowerW;
  double slack_factor = kPowerSlackFactor;
  // Fraction of data lines that must decode for the trace to be kept.
  double min_valid_fraction = 0.99;
};

struct ParseReport {
  std::size_t data_lines = 0;
  std::vector<std::size_t> malformed_lines;  // 1-based line numbers
  std::vector<std::size_t> flagged_lines;    // power above device max x slack
  std::vector<std::string> messages;
};

struct ParsedTrace {
  PowerTrace trace;
  ParseReport report;
};

// Thrown when too many lines are malformed. Carries the offending line numbers.
class TraceRejected : public ValidationError {
 public:
  TraceRejected(const std::string& what, std::vector<std::size_t> lines)
      : ValidationError(what), lines_(std::move(lines)) {}
  const std::vector<std::size_t>& lines() const { return lines_; }

 private:
  std::vector<std::size_t> lines_;
};

class EmptyTraceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Single streaming pass over CSV (`timestamp_ms,device_id,power_w` header)
// or JSONL (one object per line with the same keys).
ParsedTrace parse_trace(std::istream& in, TraceFormat format, const ParseOptions& options = {});
ParsedTrace load_trace(const std::string& path, const ParseOptions& options = {});

void write_csv(std::ostream& out, const PowerTrace& trace);
void write_jsonl(std::ostream& out, const PowerTrace& trace);

// Canonical single-document form: metadata plus the full sample array. Round
// trips bit-exactly through deserialize_trace.
std::string serialize_trace(const PowerTrace& trace);
PowerTrace deserialize_trace(const std::string& document);

// ---------------------------------------------------------------------------
// Energy

enum class ExecutionPolicy { serial, parallel };

struct IntegrationOptions {
  std::int64_t max_gap_ms = kMaxBridgedGapMs;
  // Multiplier for users whose meter covers the whole node, not just GPUs.
  double node_overhead_factor = 1.0;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
};

struct DeviceEnergy {
  std::string device_id;
  double kwh = 0.0;
  std::size_t skipped_gaps = 0;
};

struct EnergyEstimate {
  double kwh = 0.0;  // per measured node set, after the overhead factor
  std::vector<DeviceEnergy> per_device;
  std::vector<std::string> warnings;
};

// Trapezoidal integral of power over time, summed over devices, in kWh.
EnergyEstimate integrate_energy(const PowerTrace& trace, const IntegrationOptions& options = {});

// node_energy x total_nodes / measured_nodes.
double extrapolate_energy(double node_energy_kwh, int measured_nodes, int total_nodes);

// ---------------------------------------------------------------------------
// Fluctuations

struct FluctuationParams {
  double device_max_w = kH100MaxPowerW;
  double hi_frac = 0.85;
  double lo_frac = 0.25;
  std::int64_t min_dwell_ms = 2'000;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
};

struct FluctuationEvent {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  double pre_dip_mean_w = 0.0;
  double dip_mean_w = 0.0;
};

struct FluctuationReport {
  std::size_t event_count = 0;
  std::vector<FluctuationEvent> events;
  double duty_cycle_active = 0.0;
  double max_ramp_w_per_s = 0.0;
  double hi_threshold_w = 0.0;
  double lo_threshold_w = 0.0;
};

// Average power across devices on the union of all sample times; each device
// is linearly interpolated and only counted inside its own time range.
struct NodeSeries {
  std::vector<std::int64_t> timestamp_ms;
  std::vector<double> mean_power_w;
};

NodeSeries node_mean_series(const PowerTrace& trace, ExecutionPolicy policy = ExecutionPolicy::parallel);

FluctuationReport detect_fluctuations(const PowerTrace& trace, const FluctuationParams& params = {});

}  // namespace mlfp::telemetry
