#include "mlfp/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlfp/impact.hpp"
#include "mlfp/inference.hpp"
#include "mlfp/ledger.hpp"
#include "mlfp/profiles.hpp"
#include "mlfp/rounding.hpp"
#include "mlfp/telemetry.hpp"

namespace mlfp::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

// Six significant digits: enough for every figure the tool prints, and free
// of binary noise such as 38.400000000000006.
std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

enum class Format { markdown, csv, json };

Format parse_format(const std::string& name) {
  if (name == "markdown" || name == "md") return Format::markdown;
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  throw ArgumentError("unknown format '" + name + "' (expected markdown, csv or json)");
}

ledger::ReportStyle to_style(Format f) {
  switch (f) {
    case Format::markdown:
      return ledger::ReportStyle::markdown;
    case Format::csv:
      return ledger::ReportStyle::csv;
    case Format::json:
      return ledger::ReportStyle::json;
  }
  return ledger::ReportStyle::markdown;
}

// Options shared by every subcommand.
struct Common {
  std::vector<std::string> profile_files;
  std::string out_path;
  std::string format = "markdown";
};

// A key/value result rendered in the three output styles.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  // Raw numbers for JSON, parallel to rows; nullopt keeps the cell text.
  std::vector<std::vector<std::optional<double>>> values;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

std::string render(const Table& t, Format f) {
  std::ostringstream out;
  switch (f) {
    case Format::markdown: {
      out << '|';
      for (const auto& c : t.columns) out << ' ' << c << " |";
      out << "\n|";
      for (std::size_t i = 0; i < t.columns.size(); ++i) out << "---|";
      out << '\n';
      for (const auto& r : t.rows) {
        out << '|';
        for (const auto& c : r) out << ' ' << (c.empty() ? "-" : c) << " |";
        out << '\n';
      }
      break;
    }
    case Format::csv:
      for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << csv_field(t.columns[i]);
      out << '\n';
      for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << csv_field(r[i]);
        out << '\n';
      }
      break;
    case Format::json: {
      auto arr = ordered_json::array();
      for (std::size_t ri = 0; ri < t.rows.size(); ++ri) {
        ordered_json row;
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
          const auto* v = ri < t.values.size() && i < t.values[ri].size() ? &t.values[ri][i] : nullptr;
          if (v && *v) {
            row[t.columns[i]] = **v;
          } else {
            row[t.columns[i]] = t.rows[ri][i];
          }
        }
        arr.push_back(std::move(row));
      }
      out << arr.dump(2) << '\n';
      break;
    }
  }
  return out.str();
}

void emit(const std::string& document, const Common& common, std::ostream& out) {
  if (common.out_path.empty()) {
    out << document;
    return;
  }
  std::ofstream f(common.out_path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + common.out_path + "' for writing");
  f << document;
  f.close();
  if (!f) throw IoError("failed writing '" + common.out_path + "'");
}

profiles::ProfileSet load_profile_set(const Common& common) {
  profiles::ProfileSet set = profiles::builtin_profiles();
  for (const auto& path : common.profile_files) set.merge(profiles::load_profiles(path));
  return set;
}

telemetry::PowerTrace read_trace(const std::string& path, const std::string& input_format,
                                 const telemetry::ParseOptions& options, std::ostream& err) {
  const bool canonical = input_format == "json" || (input_format.empty() && path.size() > 5 &&
                                                    path.compare(path.size() - 5, 5, ".json") == 0);
  if (canonical) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trace '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return telemetry::deserialize_trace(buf.str());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace '" + path + "'");
  const auto format = input_format.empty() ? telemetry::trace_format_from_path(path)
                                           : telemetry::trace_format_from_name(input_format);
  auto parsed = telemetry::parse_trace(in, format, options);
  const auto& r = parsed.report;
  if (!r.malformed_lines.empty() || !r.flagged_lines.empty()) {
    err << path << ": " << r.data_lines << " data lines, " << r.malformed_lines.size() << " malformed, "
        << r.flagged_lines.size() << " above device max\n";
  }
  for (const auto& m : r.messages) err << path << ": " << m << '\n';
  return std::move(parsed.trace);
}

// ---------------------------------------------------------------------------

struct TraceArgs {
  std::string path;
  std::string input_format;
  int measured_nodes = 1;
  int gpus_per_node = telemetry::kDefaultGpusPerNode;
  double device_max_w = telemetry::kH100MaxPowerW;
};

void add_trace_options(CLI::App* sub, TraceArgs& a) {
  sub->add_option("--trace", a.path, "Power trace (.csv, .jsonl or canonical .json)")->required();
  sub->add_option("--input-format", a.input_format, "Override the trace format: csv, jsonl or json");
  sub->add_option("--measured-nodes", a.measured_nodes, "Nodes covered by the trace")->capture_default_str();
  sub->add_option("--gpus-per-node", a.gpus_per_node, "GPUs per node")->capture_default_str();
  sub->add_option("--device-max", a.device_max_w, "Device maximum power in W")->capture_default_str();
}

telemetry::ParseOptions parse_options(const TraceArgs& a) {
  telemetry::ParseOptions o;
  o.measured_node_count = a.measured_nodes;
  o.gpus_per_node = a.gpus_per_node;
  o.device_max_w = a.device_max_w;
  return o;
}

// ---------------------------------------------------------------------------

std::string cmd_ingest(const TraceArgs& a, const Common&, std::ostream& err) {
  const auto trace = read_trace(a.path, a.input_format, parse_options(a), err);
  err << "ingested " << trace.sample_count() << " samples from " << trace.devices.size() << " devices over "
      << num(static_cast<double>(trace.duration_ms()) / 1000.0) << " s\n";
  return telemetry::serialize_trace(trace) + "\n";
}

struct EnergyArgs {
  std::optional<int> total_nodes;
  double overhead = 1.0;
  std::int64_t max_gap_ms = telemetry::kMaxBridgedGapMs;
};

std::string cmd_energy(const TraceArgs& a, const EnergyArgs& e, const Common& common, std::ostream& err) {
  const auto trace = read_trace(a.path, a.input_format, parse_options(a), err);
  telemetry::IntegrationOptions io;
  io.max_gap_ms = e.max_gap_ms;
  io.node_overhead_factor = e.overhead;
  const auto est = telemetry::integrate_energy(trace, io);
  for (const auto& w : est.warnings) err << "warning: " << w << '\n';
  const int total = e.total_nodes.value_or(trace.measured_node_count);
  const double kwh = telemetry::extrapolate_energy(est.kwh, trace.measured_node_count, total);

  const Format f = parse_format(common.format);
  if (f == Format::markdown) {
    std::ostringstream out;
    out << num(kwh) << " kWh\n\n";
    out << "- measured nodes: " << trace.measured_node_count << " (" << num(est.kwh) << " kWh)\n";
    out << "- total nodes: " << total << '\n';
    out << "- devices: " << est.per_device.size() << '\n';
    return out.str();
  }
  Table t;
  t.columns = {"scope", "nodes", "kwh"};
  t.rows = {{"measured", std::to_string(trace.measured_node_count), num(est.kwh)},
            {"total", std::to_string(total), num(kwh)}};
  t.values = {{std::nullopt, static_cast<double>(trace.measured_node_count), est.kwh},
              {std::nullopt, static_cast<double>(total), kwh}};
  for (const auto& d : est.per_device) {
    t.rows.push_back({"device:" + d.device_id, "", num(d.kwh)});
    t.values.push_back({std::nullopt, std::nullopt, d.kwh});
  }
  return render(t, f);
}

struct FluctArgs {
  double hi = 0.85;
  double lo = 0.25;
  std::int64_t min_dwell_ms = 2000;
};

std::string cmd_fluct(const TraceArgs& a, const FluctArgs& p, const Common& common, std::ostream& err) {
  const auto trace = read_trace(a.path, a.input_format, parse_options(a), err);
  telemetry::FluctuationParams fp;
  fp.device_max_w = a.device_max_w;
  fp.hi_frac = p.hi;
  fp.lo_frac = p.lo;
  fp.min_dwell_ms = p.min_dwell_ms;
  const auto rep = telemetry::detect_fluctuations(trace, fp);

  const Format f = parse_format(common.format);
  if (f == Format::json) {
    ordered_json j;
    j["event_count"] = rep.event_count;
    j["duty_cycle_active"] = rep.duty_cycle_active;
    j["max_ramp_w_per_s"] = rep.max_ramp_w_per_s;
    j["hi_threshold_w"] = rep.hi_threshold_w;
    j["lo_threshold_w"] = rep.lo_threshold_w;
    j["events"] = ordered_json::array();
    for (const auto& e : rep.events) {
      j["events"].push_back(ordered_json{{"start_ms", e.start_ms},
                                         {"end_ms", e.end_ms},
                                         {"pre_dip_mean_w", e.pre_dip_mean_w},
                                         {"dip_mean_w", e.dip_mean_w}});
    }
    return j.dump(2) + "\n";
  }
  Table t;
  t.columns = {"start_ms", "end_ms", "duration_s", "pre_dip_mean_w", "dip_mean_w"};
  for (const auto& e : rep.events) {
    t.rows.push_back({std::to_string(e.start_ms), std::to_string(e.end_ms),
                      num(static_cast<double>(e.end_ms - e.start_ms) / 1000.0), num(e.pre_dip_mean_w),
                      num(e.dip_mean_w)});
  }
  if (f == Format::csv) return render(t, f);
  std::ostringstream out;
  out << rep.event_count << " fluctuation events\n\n";
  out << "- active duty cycle (>= " << num(rep.hi_threshold_w) << " W): " << num(rep.duty_cycle_active) << '\n';
  out << "- dip threshold: < " << num(rep.lo_threshold_w) << " W\n";
  out << "- max ramp: " << num(rep.max_ramp_w_per_s) << " W/s\n";
  if (!rep.events.empty()) out << '\n' << render(t, f);
  return out.str();
}

struct ImpactArgs {
  std::optional<double> kwh;
  std::optional<double> mwh;
  std::string profile = "jupiter";
  std::string pue_mode = "applied";
  std::string equiv = "default";
};

std::string cmd_impact(const ImpactArgs& a, const Common& common) {
  if (a.kwh.has_value() == a.mwh.has_value()) throw ArgumentError("pass exactly one of --energy-kwh or --energy-mwh");
  const double kwh = a.kwh ? *a.kwh : *a.mwh * 1000.0;
  if (!(kwh >= 0.0)) throw ArgumentError("energy must be non-negative");
  const auto set = load_profile_set(common);
  const auto facility = profiles::select_facility(a.profile, set);
  const auto table = profiles::select_equivalency(a.equiv, set);
  const auto convention = impact::pue_convention_from_name(a.pue_mode);
  const auto r = impact::operational_impact(impact::EnergyQuantity::with(kwh, convention), facility);
  const auto eq = impact::equivalize(r, table);

  Table t;
  t.columns = {"quantity", "value", "unit"};
  t.rows = {{"energy", num(kwh), "kWh"},
            {"co2", num(r.co2_kg()), "kg CO2eq"},
            {"water", num(r.water_l()), "L"},
            {"home_energy_equivalent", eq.home_energy, ""},
            {"person_water_equivalent", eq.person_water, ""}};
  t.values = {{std::nullopt, kwh}, {std::nullopt, r.co2_kg()}, {std::nullopt, r.water_l()}};
  std::string doc = render(t, parse_format(common.format));
  if (parse_format(common.format) == Format::markdown) {
    doc += "\nFacility " + facility.name + ": PUE " + num(facility.pue) + " (" + impact::to_string(convention) +
           "), CI " + num(facility.carbon_intensity) + " kg/kWh, WUE " + num(facility.wue_onsite) + " + " +
           num(facility.wue_offsite) + " L/kWh\n";
  }
  return doc;
}

struct EmbodiedArgs {
  std::string hardware = "h100";
  double gpu_hours = 0.0;
};

std::string cmd_embodied(const EmbodiedArgs& a, const Common& common) {
  if (!(a.gpu_hours >= 0.0)) throw ArgumentError("--gpu-hours must be non-negative");
  const auto set = load_profile_set(common);
  const auto hw = profiles::select_hardware(a.hardware, set);
  const auto per_gpu = impact::embodied_per_gpu(hw);
  const auto rate = impact::amortized_rate(hw);
  const auto total = impact::embodied_total(a.gpu_hours, hw);

  Table t;
  t.columns = {"quantity", "co2_kg", "water_l"};
  t.rows = {{"per_gpu", num(per_gpu.co2_kg), num(per_gpu.water_l)},
            {"per_gpu_hour", num(rate.co2_kg_per_gpu_hour), num(rate.water_l_per_gpu_hour)},
            {"total (" + num(a.gpu_hours) + " GPU hours)", num(total.co2_kg()), num(total.water_l())}};
  t.values = {{std::nullopt, per_gpu.co2_kg, per_gpu.water_l},
              {std::nullopt, rate.co2_kg_per_gpu_hour, rate.water_l_per_gpu_hour},
              {std::nullopt, total.co2_kg(), total.water_l()}};
  return render(t, parse_format(common.format));
}

struct LedgerAddArgs {
  std::string ledger;
  std::string record_json;
  std::string id, kind = "final", model, cluster, group;
  std::optional<double> gpu_hours, energy_mwh, tokens, co2_t, water_kl;
  std::optional<std::int64_t> run_count;
  bool pue_folded = false;
};

std::string cmd_ledger_add(const LedgerAddArgs& a, std::ostream& err) {
  ledger::RunRecord r;
  if (!a.record_json.empty()) {
    const auto j = nlohmann::json::parse(a.record_json, nullptr, false);
    if (j.is_discarded()) throw FormatError("--record is not valid JSON");
    r = ledger::record_from_json(j);
  } else {
    if (a.id.empty()) throw ArgumentError("ledger-add needs --id (or --record)");
    r.id = a.id;
    r.kind = ledger::run_kind_from_name(a.kind);
    r.model_name = a.model.empty() ? a.id : a.model;
    r.cluster = a.cluster;
    r.group = a.group;
    r.gpu_hours = a.gpu_hours;
    r.energy_mwh = a.energy_mwh;
    r.tokens_trained = a.tokens;
    r.co2_t = a.co2_t;
    r.water_kl = a.water_kl;
    r.run_count = a.run_count;
    r.pue_folded = a.pue_folded;
  }
  ledger::append_record(a.ledger, r);
  err << "appended '" << r.id << "' to " << a.ledger << '\n';
  return {};
}

struct LedgerReportArgs {
  std::string ledger;
  std::vector<std::string> recompute;
  std::string pue_mode;
  std::string basis = "published";
  std::string equiv = "default";
  std::string hardware;
};

std::string cmd_ledger_report(const LedgerReportArgs& a, const Common& common) {
  auto set = load_profile_set(common);
  ledger::AggregateOptions options;
  options.basis = ledger::impact_basis_from_name(a.basis);
  for (const auto& p : a.recompute) {
    const auto f = profiles::select_facility(p, set);
    set.facilities[f.name] = f;
    options.recompute_clusters.push_back(f.name);
  }
  if (!a.pue_mode.empty()) options.pue_override = impact::pue_convention_from_name(a.pue_mode);

  const auto snapshot = ledger::load_ledger(a.ledger);
  ledger::CampaignOptions co;
  if (!a.hardware.empty()) {
    const auto hw = profiles::select_hardware(a.hardware, set);
    set.hardware[hw.name] = hw;
    co.hardware = hw.name;
  }
  auto snap = snapshot;
  if (!a.hardware.empty()) snap.hardware = co.hardware;
  const auto campaign = ledger::build_campaign(snap, set, co);
  const auto result = ledger::aggregate(campaign, set, options);

  ledger::ReportContext ctx{profiles::select_equivalency(a.equiv, set), options};
  return ledger::render_report(result, set, ctx, to_style(parse_format(common.format)));
}

struct LedgerAuditArgs {
  std::string ledger;
  double tolerance = 0.02;
  bool check_equivalencies = false;
  std::string equiv = "default";
};

std::string cmd_ledger_audit(const LedgerAuditArgs& a, const Common& common) {
  const auto set = load_profile_set(common);
  const auto snapshot = ledger::load_ledger(a.ledger);
  const auto campaign = ledger::build_campaign(snapshot, set);
  ledger::AuditOptions options;
  options.tolerance = a.tolerance;
  options.check_equivalencies = a.check_equivalencies;
  options.equivalencies = profiles::select_equivalency(a.equiv, set);
  const auto findings = ledger::audit(campaign, set, options);
  return ledger::render_findings(findings, to_style(parse_format(common.format)));
}

struct BreakevenArgs {
  std::string measurement;
  std::optional<double> training_co2;
  std::string model;
  std::string profile = "jupiter";
  std::string pue_mode = "folded";
  std::string training_basis = "final run";
};

std::string cmd_breakeven(const BreakevenArgs& a, const Common& common) {
  const auto set = load_profile_set(common);
  const auto facility = profiles::select_facility(a.profile, set);
  const auto convention = impact::pue_convention_from_name(a.pue_mode);
  const auto ms = inference::load_measurements(a.measurement);

  Table t;
  t.columns = {"model", "rate", "co2_g_per_request", "water_l_per_request", "training_basis", "breakeven",
               "breakeven_count"};
  for (const auto& m : ms) {
    if (!a.model.empty() && m.model_name != a.model) continue;
    const auto r = inference::breakeven_for(m, a.training_co2, facility, convention, a.training_basis);
    t.rows.push_back({r.model_name, r.scenario, num(r.per_request_co2_g), num(r.per_request_water_l),
                      r.training_basis, inference::format_count(r.breakeven_count),
                      r.breakeven_count ? std::to_string(*r.breakeven_count) : ""});
    t.values.push_back({std::nullopt, std::nullopt, r.per_request_co2_g, r.per_request_water_l, std::nullopt,
                        std::nullopt,
                        r.breakeven_count ? std::optional<double>(static_cast<double>(*r.breakeven_count))
                                          : std::nullopt});
  }
  if (t.rows.empty()) throw ValidationError("no measurements matched");
  return render(t, parse_format(common.format));
}

struct SimulateArgs {
  std::string scenario;
  std::string rate;
  std::optional<std::int64_t> requests;
  std::optional<std::uint64_t> seed;
  std::optional<double> input_mean, output_mean, dispersion;
  std::vector<double> coefficients;
};

std::string cmd_simulate(const SimulateArgs& a, const Common& common) {
  inference::WorkloadScenario s;
  if (!a.scenario.empty()) {
    const auto set = load_profile_set(common);
    s = inference::scenario_from_config(set.scenario(a.scenario));
  }
  if (!a.rate.empty()) s.request_rate = inference::parse_rate(a.rate);
  if (a.requests) s.n_requests = *a.requests;
  if (a.seed) s.seed = *a.seed;
  if (a.input_mean) s.input_len.mean = *a.input_mean;
  if (a.output_mean) s.output_len.mean = *a.output_mean;
  if (a.dispersion) s.input_len.dispersion = s.output_len.dispersion = *a.dispersion;
  if (!a.coefficients.empty()) {
    if (a.coefficients.size() != 3) throw ArgumentError("--coefficients takes three values: input, output, second");
    s.coefficients = {a.coefficients[0], a.coefficients[1], a.coefficients[2]};
  }
  const auto m = inference::simulate_workload(s);

  const Format f = parse_format(common.format);
  if (f == Format::csv) {
    std::ostringstream out;
    inference::write_measurements(out, {m});
    return out.str();
  }
  Table t;
  t.columns = {"model_name", "request_rate", "n_requests", "energy_kwh", "makespan_s", "seconds_per_100",
               "mean_input_tokens", "mean_output_tokens", "seed"};
  const double per100 = m.makespan_s * 100.0 / static_cast<double>(m.n_requests);
  t.rows = {{m.model_name, inference::rate_label(m.request_rate), std::to_string(m.n_requests), num(m.energy_kwh),
             num(m.makespan_s), num(per100), num(m.mean_input_tokens), num(m.mean_output_tokens),
             std::to_string(s.seed)}};
  t.values = {{std::nullopt, m.request_rate, static_cast<double>(m.n_requests), m.energy_kwh, m.makespan_s, per100,
               m.mean_input_tokens, m.mean_output_tokens, static_cast<double>(s.seed)}};
  return render(t, f);
}

struct FitArgs {
  std::string measurement;
  std::string model;
};

std::string cmd_fit(const FitArgs& a, const Common& common) {
  const auto all = inference::load_measurements(a.measurement);
  std::map<std::string, std::vector<inference::InferenceMeasurement>> by_model;
  std::vector<std::string> order;
  for (const auto& m : all) {
    if (!a.model.empty() && m.model_name != a.model) continue;
    if (!by_model.contains(m.model_name)) order.push_back(m.model_name);
    by_model[m.model_name].push_back(m);
  }
  if (order.empty()) throw ValidationError("no measurements matched");

  Table t;
  t.columns = {"model", "per_input_token_kwh", "per_output_token_kwh", "per_active_second_kwh", "tokens_pooled",
               "max_relative_residual"};
  for (const auto& name : order) {
    const auto fit = inference::fit_energy_model(by_model[name]);
    const auto& c = fit.coefficients;
    t.rows.push_back({name, num(c.per_input_token_kwh), num(c.per_output_token_kwh), num(c.per_active_second_kwh),
                      fit.tokens_pooled ? "yes" : "no", num(fit.max_relative_residual)});
    t.values.push_back({std::nullopt, c.per_input_token_kwh, c.per_output_token_kwh, c.per_active_second_kwh,
                        std::nullopt, fit.max_relative_residual});
  }
  return render(t, parse_format(common.format));
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--profiles", c.profile_files, "Extra profile config files, merged over the presets");
  sub->add_option("--out", c.out_path, "Write the output document here instead of standard output");
  sub->add_option("--format", c.format, "Output format: markdown, csv or json")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Environmental footprint accounting for ML training and inference", "mlfp"};
  app.require_subcommand(1);
  Common common;

  TraceArgs trace;
  auto* ingest = app.add_subcommand("ingest", "Validate a power trace and write its canonical JSON form");
  add_trace_options(ingest, trace);

  EnergyArgs energy;
  auto* energy_cmd = app.add_subcommand("energy", "Integrate a power trace to kWh and extrapolate to a cluster");
  add_trace_options(energy_cmd, trace);
  energy_cmd->add_option("--nodes", energy.total_nodes, "Total nodes to extrapolate to");
  energy_cmd->add_option("--overhead", energy.overhead, "Node overhead factor (>= 1)")->capture_default_str();
  energy_cmd->add_option("--max-gap-ms", energy.max_gap_ms, "Longest gap bridged by integration")
      ->capture_default_str();

  FluctArgs fluct;
  auto* fluct_cmd = app.add_subcommand("fluct", "Detect checkpoint power dips in a trace");
  add_trace_options(fluct_cmd, trace);
  fluct_cmd->add_option("--hi", fluct.hi, "Active threshold as a fraction of device max")->capture_default_str();
  fluct_cmd->add_option("--lo", fluct.lo, "Dip threshold as a fraction of device max")->capture_default_str();
  fluct_cmd->add_option("--min-dwell-ms", fluct.min_dwell_ms, "Shortest dip counted")->capture_default_str();

  ImpactArgs imp;
  auto* impact_cmd = app.add_subcommand("impact", "Operational CO2 and water for an energy figure");
  impact_cmd->add_option("--energy-kwh", imp.kwh, "Energy in kWh");
  impact_cmd->add_option("--energy-mwh", imp.mwh, "Energy in MWh");
  impact_cmd->add_option("--profile", imp.profile, "Facility preset or profile file")->capture_default_str();
  impact_cmd->add_option("--pue-mode", imp.pue_mode, "applied or folded")->capture_default_str();
  impact_cmd->add_option("--equiv", imp.equiv, "Equivalency table preset or file")->capture_default_str();

  EmbodiedArgs emb;
  auto* embodied_cmd = app.add_subcommand("embodied", "Embodied hardware impacts, per GPU and amortized");
  embodied_cmd->add_option("--hardware", emb.hardware, "Hardware preset or profile file")->capture_default_str();
  embodied_cmd->add_option("--gpu-hours", emb.gpu_hours, "GPU hours to amortize over")->capture_default_str();

  LedgerAddArgs add;
  auto* add_cmd = app.add_subcommand("ledger-add", "Append a run record to a ledger file");
  add_cmd->add_option("--ledger", add.ledger, "Ledger file (JSONL)")->required();
  add_cmd->add_option("--record", add.record_json, "Whole record as a JSON object");
  add_cmd->add_option("--id", add.id, "Record id; reusing an id supersedes the earlier record");
  add_cmd->add_option("--kind", add.kind, "development, final or external")->capture_default_str();
  add_cmd->add_option("--model", add.model, "Model name");
  add_cmd->add_option("--cluster", add.cluster, "Facility name, or 'external'");
  add_cmd->add_option("--group", add.group, "Development group");
  add_cmd->add_option("--gpu-hours", add.gpu_hours, "GPU hours");
  add_cmd->add_option("--energy-mwh", add.energy_mwh, "Energy in MWh");
  add_cmd->add_option("--tokens", add.tokens, "Tokens trained");
  add_cmd->add_option("--co2-t", add.co2_t, "Published CO2 in tonnes");
  add_cmd->add_option("--water-kl", add.water_kl, "Published water in kL");
  add_cmd->add_option("--run-count", add.run_count, "Runs summarised by this record");
  add_cmd->add_flag("--pue-folded", add.pue_folded, "Energy already includes facility overhead");

  LedgerReportArgs rep;
  auto* report_cmd = app.add_subcommand("ledger-report", "Render development, final-run and total impact tables");
  report_cmd->add_option("--ledger", rep.ledger, "Ledger file (JSONL)")->required();
  report_cmd->add_option("--profile", rep.recompute,
                         "Recompute rows on this facility from energy (repeatable; preset or file)");
  report_cmd->add_option("--pue-mode", rep.pue_mode, "Force applied or folded on every recomputed row");
  report_cmd->add_option("--basis", rep.basis, "published or computed")->capture_default_str();
  report_cmd->add_option("--equiv", rep.equiv, "Equivalency table preset or file")->capture_default_str();
  report_cmd->add_option("--hardware", rep.hardware, "Hardware preset or file (overrides the ledger)");

  LedgerAuditArgs aud;
  auto* audit_cmd = app.add_subcommand("ledger-audit", "Flag rows whose implied factors disagree with profiles");
  audit_cmd->add_option("--ledger", aud.ledger, "Ledger file (JSONL)")->required();
  audit_cmd->add_option("--tolerance", aud.tolerance, "Relative deviation allowed")->capture_default_str();
  audit_cmd->add_flag("--check-equivalencies", aud.check_equivalencies,
                      "Also check published equivalency strings");
  audit_cmd->add_option("--equiv", aud.equiv, "Equivalency table preset or file")->capture_default_str();

  BreakevenArgs be;
  auto* be_cmd = app.add_subcommand("breakeven", "Inference requests needed to match training CO2");
  be_cmd->add_option("--measurement", be.measurement, "Measurement CSV")->required();
  be_cmd->add_option("--training-co2", be.training_co2, "Training CO2 in tonnes");
  be_cmd->add_option("--model", be.model, "Only rows for this model");
  be_cmd->add_option("--profile", be.profile, "Facility preset or file")->capture_default_str();
  be_cmd->add_option("--pue-mode", be.pue_mode, "applied or folded")->capture_default_str();
  be_cmd->add_option("--training-basis", be.training_basis, "Label for the training figure used")
      ->capture_default_str();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate an inference workload under an energy model");
  sim_cmd->add_option("--scenario", sim.scenario, "[scenario] section from --profiles");
  sim_cmd->add_option("--rate", sim.rate, "Requests per second, or 'batch'");
  sim_cmd->add_option("--requests", sim.requests, "Number of requests");
  sim_cmd->add_option("--seed", sim.seed, "Random seed (default 0)");
  sim_cmd->add_option("--input-mean", sim.input_mean, "Mean prompt length in tokens");
  sim_cmd->add_option("--output-mean", sim.output_mean, "Mean generated length in tokens");
  sim_cmd->add_option("--dispersion", sim.dispersion, "Log-normal sigma for both lengths");
  sim_cmd->add_option("--coefficients", sim.coefficients, "kWh per input token, per output token, per second")
      ->expected(3)
      ->delimiter(',');

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the linear energy model to measurements");
  fit_cmd->add_option("--measurement", fit.measurement, "Measurement CSV")->required();
  fit_cmd->add_option("--model", fit.model, "Only rows for this model");

  for (auto* sub : {ingest, energy_cmd, fluct_cmd, impact_cmd, embodied_cmd, add_cmd, report_cmd, audit_cmd, be_cmd,
                    sim_cmd, fit_cmd}) {
    add_common(sub, common);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    std::string doc;
    if (ingest->parsed()) doc = cmd_ingest(trace, common, err);
    else if (energy_cmd->parsed()) doc = cmd_energy(trace, energy, common, err);
    else if (fluct_cmd->parsed()) doc = cmd_fluct(trace, fluct, common, err);
    else if (impact_cmd->parsed()) doc = cmd_impact(imp, common);
    else if (embodied_cmd->parsed()) doc = cmd_embodied(emb, common);
    else if (add_cmd->parsed()) doc = cmd_ledger_add(add, err);
    else if (report_cmd->parsed()) doc = cmd_ledger_report(rep, common);
    else if (audit_cmd->parsed()) doc = cmd_ledger_audit(aud, common);
    else if (be_cmd->parsed()) doc = cmd_breakeven(be, common);
    else if (sim_cmd->parsed()) doc = cmd_simulate(sim, common);
    else if (fit_cmd->parsed()) doc = cmd_fit(fit, common);
    if (!doc.empty()) emit(doc, common, out);
    return kExitOk;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::logic_error& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace mlfp::cli
