#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "mlfp/ledger.hpp"

namespace mlfp::ledger {

namespace {

using ordered_json = nlohmann::ordered_json;

const std::set<std::string> kRecordKeys = {"id",      "kind",     "model_name", "cluster",    "gpu_hours",
                                           "energy_mwh", "tokens_trained", "co2_t", "water_kl", "pue_folded",
                                           "group",   "run_count"};

std::optional<double> optional_number(const nlohmann::json& j, const char* key, const std::string& id) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw FormatError("record '" + id + "': field '" + key + "' must be a number or null");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw FormatError("record '" + id + "': field '" + key + "' is not finite");
  return v;
}

std::string optional_string(const nlohmann::json& j, const char* key, const std::string& id) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw FormatError("record '" + id + "': field '" + key + "' must be a string");
  return it->get<std::string>();
}

void put(ordered_json& j, const char* key, const std::optional<double>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

PublishedTotals totals_from_json(const nlohmann::json& j) {
  PublishedTotals t;
  t.gpu_hours = optional_number(j, "gpu_hours", "development_total");
  t.energy_mwh = optional_number(j, "energy_mwh", "development_total");
  if (const auto r = optional_number(j, "run_count", "development_total")) t.runs = std::llround(*r);
  t.co2_t = optional_number(j, "co2_t", "development_total");
  t.water_kl = optional_number(j, "water_kl", "development_total");
  return t;
}

ordered_json totals_to_json(const PublishedTotals& t) {
  ordered_json j;
  j["kind"] = "development_total";
  put(j, "gpu_hours", t.gpu_hours);
  put(j, "energy_mwh", t.energy_mwh);
  if (t.runs) {
    j["run_count"] = *t.runs;
  } else {
    j["run_count"] = nullptr;
  }
  put(j, "co2_t", t.co2_t);
  put(j, "water_kl", t.water_kl);
  return j;
}

}  // namespace

const char* to_string(RunKind k) {
  switch (k) {
    case RunKind::development:
      return "development";
    case RunKind::final_run:
      return "final";
    case RunKind::external:
      return "external";
  }
  return "final";
}

RunKind run_kind_from_name(const std::string& name) {
  if (name == "development") return RunKind::development;
  if (name == "final") return RunKind::final_run;
  if (name == "external") return RunKind::external;
  throw FormatError("unknown run kind '" + name + "' (expected development, final or external)");
}

bool RunRecord::inferred() const {
  const auto it = extra.find("inferred");
  return it != extra.end() && it->is_boolean() && it->get<bool>();
}

void validate(const RunRecord& r) {
  if (r.id.empty()) throw ValidationError("run record without id");
  if (!r.energy_mwh && !r.co2_t) {
    throw ValidationError("record '" + r.id + "': needs energy_mwh or co2_t");
  }
  auto non_negative = [&](const std::optional<double>& v, const char* what) {
    if (v && !(*v >= 0.0)) throw ValidationError("record '" + r.id + "': " + what + " must be non-negative");
  };
  non_negative(r.gpu_hours, "gpu_hours");
  non_negative(r.energy_mwh, "energy_mwh");
  non_negative(r.tokens_trained, "tokens_trained");
  non_negative(r.co2_t, "co2_t");
  non_negative(r.water_kl, "water_kl");
  if (r.run_count && *r.run_count < 1) throw ValidationError("record '" + r.id + "': run_count must be >= 1");
}

RunRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("ledger record is not a JSON object");
  const auto id_it = j.find("id");
  if (id_it == j.end() || !id_it->is_string()) throw FormatError("ledger record missing string 'id'");
  RunRecord r;
  r.id = id_it->get<std::string>();
  r.kind = run_kind_from_name(optional_string(j, "kind", r.id));
  r.model_name = optional_string(j, "model_name", r.id);
  r.cluster = optional_string(j, "cluster", r.id);
  r.gpu_hours = optional_number(j, "gpu_hours", r.id);
  r.energy_mwh = optional_number(j, "energy_mwh", r.id);
  r.tokens_trained = optional_number(j, "tokens_trained", r.id);
  r.co2_t = optional_number(j, "co2_t", r.id);
  r.water_kl = optional_number(j, "water_kl", r.id);
  if (const auto it = j.find("pue_folded"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw FormatError("record '" + r.id + "': 'pue_folded' must be a boolean");
    r.pue_folded = it->get<bool>();
  }
  r.group = optional_string(j, "group", r.id);
  if (const auto it = j.find("run_count"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw FormatError("record '" + r.id + "': 'run_count' must be an integer");
    r.run_count = it->get<std::int64_t>();
  }
  for (const auto& [k, v] : j.items()) {
    if (!kRecordKeys.contains(k)) r.extra[k] = v;
  }
  if (r.model_name.empty()) r.model_name = r.id;
  validate(r);
  return r;
}

namespace {

std::string record_line(const RunRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["kind"] = to_string(r.kind);
  j["model_name"] = r.model_name;
  j["cluster"] = r.cluster;
  put(j, "gpu_hours", r.gpu_hours);
  put(j, "energy_mwh", r.energy_mwh);
  put(j, "tokens_trained", r.tokens_trained);
  put(j, "co2_t", r.co2_t);
  put(j, "water_kl", r.water_kl);
  j["pue_folded"] = r.pue_folded;
  if (!r.group.empty()) j["group"] = r.group;
  if (r.run_count) j["run_count"] = *r.run_count;
  for (const auto& [k, v] : r.extra.items()) j[k] = v;
  return j.dump();
}

}  // namespace

nlohmann::json record_to_json(const RunRecord& r) { return nlohmann::json::parse(record_line(r)); }

LedgerSnapshot read_ledger(std::istream& in, const std::string& source) {
  LedgerSnapshot snap;
  std::map<std::string, std::size_t> index;
  std::vector<bool> live;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string at = source + ":" + std::to_string(line_no) + ": ";
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError(at + "not a JSON object");

    const std::string kind = j.value("kind", std::string{});
    try {
      if (kind == "campaign") {
        if (const auto h = optional_number(j, "total_gpu_hours", "campaign")) snap.total_gpu_hours = *h;
        if (const auto it = j.find("hardware"); it != j.end() && it->is_string()) {
          snap.hardware = it->get<std::string>();
        }
        continue;
      }
      if (kind == "development_total") {
        snap.dev_totals = totals_from_json(j);
        continue;
      }
      if (j.value("deleted", false)) {
        const auto id = j.value("id", std::string{});
        if (const auto it = index.find(id); it != index.end() && live[it->second]) {
          live[it->second] = false;
          ++snap.superseded;
        }
        continue;
      }
      RunRecord r = record_from_json(j);
      if (const auto it = index.find(r.id); it != index.end()) {
        snap.records[it->second] = std::move(r);
        if (live[it->second]) ++snap.superseded;
        live[it->second] = true;
      } else {
        index.emplace(r.id, snap.records.size());
        snap.records.push_back(std::move(r));
        live.push_back(true);
      }
    } catch (const ValidationError& e) {
      throw FormatError(at + e.what());
    }
  }
  if (in.bad()) throw IoError("read error in " + source);

  std::vector<RunRecord> kept;
  for (std::size_t i = 0; i < snap.records.size(); ++i) {
    if (live[i]) kept.push_back(std::move(snap.records[i]));
  }
  snap.records = std::move(kept);
  return snap;
}

LedgerSnapshot load_ledger(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ledger '" + path + "'");
  return read_ledger(in, path);
}

void append_record(std::ostream& out, const RunRecord& record) {
  validate(record);
  out << record_line(record) << '\n';
  out.flush();
  if (!out) throw IoError("failed to append ledger record '" + record.id + "'");
}

void append_record(const std::string& path, const RunRecord& record) {
  validate(record);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open ledger '" + path + "' for append");
  append_record(out, record);
}

void write_snapshot(std::ostream& out, const LedgerSnapshot& snapshot) {
  if (snapshot.total_gpu_hours || snapshot.hardware) {
    ordered_json j;
    j["id"] = "campaign";
    j["kind"] = "campaign";
    put(j, "total_gpu_hours", snapshot.total_gpu_hours);
    if (snapshot.hardware) j["hardware"] = *snapshot.hardware;
    out << j.dump() << '\n';
  }
  if (snapshot.dev_totals) out << totals_to_json(*snapshot.dev_totals).dump() << '\n';
  for (const auto& r : snapshot.records) out << record_line(r) << '\n';
  if (!out) throw IoError("failed to write ledger snapshot");
}

Campaign build_campaign(const LedgerSnapshot& snapshot, const profiles::ProfileSet& profiles,
                        const CampaignOptions& options) {
  Campaign c;
  c.hardware = profiles.hardware_profile(snapshot.hardware.value_or(options.hardware));

  std::map<std::string, DevGroup> groups;
  double recorded_gpu_hours = 0.0;
  for (const auto& r : snapshot.records) {
    if (r.kind != RunKind::external && r.gpu_hours) recorded_gpu_hours += *r.gpu_hours;
    switch (r.kind) {
      case RunKind::development: {
        const std::string key = r.group.empty() ? r.model_name : r.group;
        auto& g = groups[key];
        g.name = key;
        g.runs.push_back(r);
        g.declared_run_count += r.runs();
        g.inferred = g.inferred || r.inferred();
        break;
      }
      case RunKind::final_run:
        c.final_runs.push_back(r);
        break;
      case RunKind::external:
        c.external_runs.push_back(r);
        break;
    }
  }
  auto by_id = [](const RunRecord& a, const RunRecord& b) { return a.id < b.id; };
  for (auto& [name, g] : groups) {
    std::sort(g.runs.begin(), g.runs.end(), by_id);
    c.dev_groups.push_back(std::move(g));
  }
  // Groups appear in the order of their lowest run id, so fixtures control
  // the table layout.
  std::sort(c.dev_groups.begin(), c.dev_groups.end(),
            [](const DevGroup& a, const DevGroup& b) { return a.runs.front().id < b.runs.front().id; });
  std::sort(c.final_runs.begin(), c.final_runs.end(), by_id);
  std::sort(c.external_runs.begin(), c.external_runs.end(), by_id);

  c.dev_totals = snapshot.dev_totals;
  if (c.dev_totals && !c.dev_groups.empty()) {
    std::vector<GroupRow> listed;
    for (const auto& g : c.dev_groups) listed.push_back(published_row(g));
    auto rec = reconcile_groups(*c.dev_totals, listed, options.default_cluster, true);
    if (rec.inferred && !groups.contains(rec.inferred->name)) {
      for (const auto& r : rec.inferred->runs) {
        if (r.gpu_hours) recorded_gpu_hours += *r.gpu_hours;
      }
      c.dev_groups.push_back(std::move(*rec.inferred));
    }
  }

  c.total_gpu_hours = snapshot.total_gpu_hours.value_or(recorded_gpu_hours);
  if (c.total_gpu_hours + 1e-9 * std::max(1.0, c.total_gpu_hours) < recorded_gpu_hours) {
    throw ValidationError("campaign total_gpu_hours (" + std::to_string(c.total_gpu_hours) +
                          ") is less than the recorded sum (" + std::to_string(recorded_gpu_hours) + ")");
  }
  return c;
}

}  // namespace mlfp::ledger
