#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>

#include <json.hpp>

#include "mlfp/telemetry.hpp"

namespace mlfp::telemetry {

namespace {

constexpr std::string_view kCsvHeader = "timestamp_ms,device_id,power_w";
constexpr std::string_view kDocumentFormat = "mlfp.trace";
constexpr int kDocumentVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_int64(std::string_view s, std::int64_t& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

bool parse_power(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return false;
  return std::isfinite(out) && out >= 0.0;
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

struct LocatedSample {
  PowerSample sample;
  std::size_t line = 0;
};

void check_positive(int value, const char* what) {
  if (value < 1) throw ArgumentError(std::string(what) + " must be a positive integer");
}

struct GroupResult {
  PowerTrace trace;
  std::vector<std::size_t> duplicate_lines;
};

GroupResult group_samples(std::vector<LocatedSample> located, int measured_node_count, int gpus_per_node) {
  check_positive(measured_node_count, "measured_node_count");
  check_positive(gpus_per_node, "gpus_per_node");
  std::map<std::string, std::vector<LocatedSample>> by_device;
  for (auto& ls : located) {
    auto key = ls.sample.device_id;
    by_device[std::move(key)].push_back(std::move(ls));
  }

  GroupResult result;
  result.trace.measured_node_count = measured_node_count;
  result.trace.gpus_per_node = gpus_per_node;
  for (auto& [id, items] : by_device) {
    std::stable_sort(items.begin(), items.end(), [](const LocatedSample& a, const LocatedSample& b) {
      return a.sample.timestamp_ms < b.sample.timestamp_ms;
    });
    DeviceSeries series;
    series.device_id = id;
    series.timestamp_ms.reserve(items.size());
    series.power_w.reserve(items.size());
    for (const auto& ls : items) {
      if (!series.timestamp_ms.empty() && series.timestamp_ms.back() == ls.sample.timestamp_ms) {
        result.duplicate_lines.push_back(ls.line);
        continue;
      }
      series.timestamp_ms.push_back(ls.sample.timestamp_ms);
      series.power_w.push_back(ls.sample.power_w);
    }
    result.trace.devices.push_back(std::move(series));
  }
  return result;
}

bool decode_sample_object(const nlohmann::json& j, PowerSample& out) {
  if (!j.is_object()) return false;
  const auto ts = j.find("timestamp_ms");
  const auto dev = j.find("device_id");
  const auto pw = j.find("power_w");
  if (ts == j.end() || dev == j.end() || pw == j.end()) return false;
  if (!ts->is_number_integer() || !dev->is_string() || !pw->is_number()) return false;
  out.timestamp_ms = ts->get<std::int64_t>();
  out.device_id = dev->get<std::string>();
  out.power_w = pw->get<double>();
  return !out.device_id.empty() && std::isfinite(out.power_w) && out.power_w >= 0.0;
}

bool decode_jsonl_line(std::string_view line, PowerSample& out) {
  const auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
  return !j.is_discarded() && decode_sample_object(j, out);
}

bool decode_csv_line(std::string_view line, PowerSample& out) {
  const auto c1 = line.find(',');
  if (c1 == std::string_view::npos) return false;
  const auto c2 = line.find(',', c1 + 1);
  if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) return false;
  if (!parse_int64(line.substr(0, c1), out.timestamp_ms)) return false;
  const auto dev = trim(line.substr(c1 + 1, c2 - c1 - 1));
  if (dev.empty()) return false;
  out.device_id.assign(dev);
  return parse_power(line.substr(c2 + 1), out.power_w);
}

}  // namespace

std::size_t PowerTrace::sample_count() const {
  std::size_t n = 0;
  for (const auto& d : devices) n += d.size();
  return n;
}

std::int64_t PowerTrace::first_timestamp_ms() const {
  std::int64_t first = 0;
  bool any = false;
  for (const auto& d : devices) {
    if (d.timestamp_ms.empty()) continue;
    first = any ? std::min(first, d.timestamp_ms.front()) : d.timestamp_ms.front();
    any = true;
  }
  return first;
}

std::int64_t PowerTrace::last_timestamp_ms() const {
  std::int64_t last = 0;
  bool any = false;
  for (const auto& d : devices) {
    if (d.timestamp_ms.empty()) continue;
    last = any ? std::max(last, d.timestamp_ms.back()) : d.timestamp_ms.back();
    any = true;
  }
  return last;
}

std::int64_t PowerTrace::duration_ms() const {
  if (sample_count() == 0) return 0;
  return last_timestamp_ms() - first_timestamp_ms();
}

std::vector<PowerSample> PowerTrace::samples() const {
  std::vector<PowerSample> out;
  out.reserve(sample_count());
  for (const auto& d : devices) {
    for (std::size_t i = 0; i < d.size(); ++i) out.push_back({d.timestamp_ms[i], d.device_id, d.power_w[i]});
  }
  return out;
}

PowerTrace make_trace(std::vector<PowerSample> samples, int measured_node_count, int gpus_per_node) {
  std::vector<LocatedSample> located;
  located.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) located.push_back({std::move(samples[i]), i + 1});
  auto grouped = group_samples(std::move(located), measured_node_count, gpus_per_node);
  if (!grouped.duplicate_lines.empty()) {
    throw ValidationError("duplicate timestamp within one device stream (sample " +
                          std::to_string(grouped.duplicate_lines.front()) + ")");
  }
  return std::move(grouped.trace);
}

TraceFormat trace_format_from_name(const std::string& name) {
  if (name == "csv") return TraceFormat::csv;
  if (name == "jsonl") return TraceFormat::jsonl;
  throw ArgumentError("unknown trace format '" + name + "' (expected csv or jsonl)");
}

TraceFormat trace_format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "csv") return TraceFormat::csv;
  if (ext == "jsonl" || ext == "ndjson") return TraceFormat::jsonl;
  throw ArgumentError("cannot infer trace format from '" + path + "'; pass --format csv|jsonl");
}

ParsedTrace parse_trace(std::istream& in, TraceFormat format, const ParseOptions& options) {
  check_positive(options.measured_node_count, "measured_node_count");
  check_positive(options.gpus_per_node, "gpus_per_node");

  ParseReport report;
  std::vector<LocatedSample> located;
  const double flag_above = options.device_max_w * options.slack_factor;

  std::string line;
  std::size_t line_no = 0;
  bool header_seen = format != TraceFormat::csv;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (trim(view).empty()) continue;

    if (!header_seen) {
      std::string normalized;
      for (char c : view) {
        if (c != ' ' && c != '\t') normalized.push_back(c);
      }
      if (normalized != kCsvHeader) {
        throw FormatError("unparseable CSV header on line " + std::to_string(line_no) + ": expected '" +
                          std::string(kCsvHeader) + "'");
      }
      header_seen = true;
      continue;
    }

    ++report.data_lines;
    PowerSample sample;
    const bool ok = format == TraceFormat::csv ? decode_csv_line(view, sample) : decode_jsonl_line(view, sample);
    if (!ok) {
      report.malformed_lines.push_back(line_no);
      continue;
    }
    if (sample.power_w > flag_above) report.flagged_lines.push_back(line_no);
    located.push_back({std::move(sample), line_no});
  }
  if (in.bad()) throw IoError("read error while parsing trace");

  if (report.data_lines == 0) throw EmptyTraceError("trace contains no samples");

  auto grouped = group_samples(std::move(located), options.measured_node_count, options.gpus_per_node);
  if (!grouped.duplicate_lines.empty()) {
    report.malformed_lines.insert(report.malformed_lines.end(), grouped.duplicate_lines.begin(),
                                  grouped.duplicate_lines.end());
    std::sort(report.malformed_lines.begin(), report.malformed_lines.end());
    report.messages.push_back(std::to_string(grouped.duplicate_lines.size()) +
                              " duplicate timestamp(s) dropped");
  }

  const double valid = static_cast<double>(report.data_lines - report.malformed_lines.size()) /
                       static_cast<double>(report.data_lines);
  if (valid < options.min_valid_fraction) {
    std::ostringstream msg;
    msg << report.malformed_lines.size() << " of " << report.data_lines
        << " lines malformed; rejecting trace (lines:";
    const std::size_t shown = std::min<std::size_t>(report.malformed_lines.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg << ' ' << report.malformed_lines[i];
    if (shown < report.malformed_lines.size()) msg << " ...";
    msg << ')';
    throw TraceRejected(msg.str(), report.malformed_lines);
  }
  if (grouped.trace.sample_count() == 0) throw EmptyTraceError("trace contains no valid samples");

  if (!report.malformed_lines.empty()) {
    report.messages.push_back(std::to_string(report.malformed_lines.size()) + " malformed line(s) skipped");
  }
  if (!report.flagged_lines.empty()) {
    report.messages.push_back(std::to_string(report.flagged_lines.size()) + " sample(s) above " +
                              std::to_string(flag_above) + " W flagged");
  }
  return {std::move(grouped.trace), std::move(report)};
}

ParsedTrace load_trace(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace '" + path + "'");
  return parse_trace(in, trace_format_from_path(path), options);
}

void write_csv(std::ostream& out, const PowerTrace& trace) {
  std::string buf;
  buf.append(kCsvHeader).push_back('\n');
  for (const auto& d : trace.devices) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      buf.append(std::to_string(d.timestamp_ms[i])).push_back(',');
      buf.append(d.device_id).push_back(',');
      append_double(buf, d.power_w[i]);
      buf.push_back('\n');
    }
    out << buf;
    buf.clear();
  }
}

void write_jsonl(std::ostream& out, const PowerTrace& trace) {
  for (const auto& d : trace.devices) {
    const std::string id = nlohmann::json(d.device_id).dump();
    std::string buf;
    for (std::size_t i = 0; i < d.size(); ++i) {
      buf.append("{\"timestamp_ms\":").append(std::to_string(d.timestamp_ms[i]));
      buf.append(",\"device_id\":").append(id).append(",\"power_w\":");
      append_double(buf, d.power_w[i]);
      buf.append("}\n");
    }
    out << buf;
  }
}

std::string serialize_trace(const PowerTrace& trace) {
  std::string out;
  out.reserve(trace.sample_count() * 56 + 128);
  out.append("{\"format\":\"").append(kDocumentFormat).append("\",\"version\":");
  out.append(std::to_string(kDocumentVersion));
  out.append(",\"measured_node_count\":").append(std::to_string(trace.measured_node_count));
  out.append(",\"gpus_per_node\":").append(std::to_string(trace.gpus_per_node));
  out.append(",\"samples\":[");
  bool first = true;
  for (const auto& d : trace.devices) {
    const std::string id = nlohmann::json(d.device_id).dump();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!first) out.push_back(',');
      first = false;
      out.append("{\"timestamp_ms\":").append(std::to_string(d.timestamp_ms[i]));
      out.append(",\"device_id\":").append(id).append(",\"power_w\":");
      append_double(out, d.power_w[i]);
      out.push_back('}');
    }
  }
  out.append("]}\n");
  return out;
}

PowerTrace deserialize_trace(const std::string& document) {
  auto doc = nlohmann::json::parse(document, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw FormatError("trace document is not a JSON object");
  if (doc.value("format", std::string{}) != kDocumentFormat) {
    throw FormatError("trace document has wrong or missing \"format\" tag");
  }
  if (doc.value("version", 0) != kDocumentVersion) throw FormatError("unsupported trace document version");
  const auto nodes = doc.find("measured_node_count");
  const auto gpus = doc.find("gpus_per_node");
  const auto samples = doc.find("samples");
  if (nodes == doc.end() || !nodes->is_number_integer() || gpus == doc.end() || !gpus->is_number_integer() ||
      samples == doc.end() || !samples->is_array()) {
    throw FormatError("trace document missing metadata or sample array");
  }
  std::vector<PowerSample> out;
  out.reserve(samples->size());
  for (const auto& s : *samples) {
    PowerSample ps;
    if (!decode_sample_object(s, ps)) {
      throw FormatError("malformed sample in trace document at index " + std::to_string(out.size()));
    }
    out.push_back(std::move(ps));
  }
  if (out.empty()) throw EmptyTraceError("trace document has no samples");
  return make_trace(std::move(out), nodes->get<int>(), gpus->get<int>());
}

}  // namespace mlfp::telemetry
