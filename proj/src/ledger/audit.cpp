#include <algorithm>
#include <cmath>
#include <limits>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "mlfp/ledger.hpp"
#include "mlfp/rounding.hpp"

namespace mlfp::ledger {

namespace {

// Half a unit in the last printed digit of a published figure: 892 -> 0.5,
// 0.3 -> 0.05. Published values are stored as printed.
double half_unit(double v) {
  for (int d = 0; d <= 6; ++d) {
    const double scaled = v * std::pow(10.0, d);
    if (std::abs(scaled - std::round(scaled)) < 1e-9 * std::max(1.0, std::abs(scaled))) {
      return 0.5 * std::pow(10.0, -d);
    }
  }
  return 0.0;
}

double relative(double observed, double expected) {
  if (expected == 0.0) return observed == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(observed - expected) / std::abs(expected);
}

struct Interval {
  double lo, hi;
  bool contains(double x) const { return x >= lo - 1e-12 && x <= hi + 1e-12; }
};

// Range of numerator/denominator consistent with both being rounded prints.
Interval ratio_range(double num, double den) {
  const double hn = half_unit(num), hd = half_unit(den);
  const double lo = std::max(0.0, num - hn) / (den + hd);
  const double hi = den - hd > 0 ? (num + hn) / (den - hd) : std::numeric_limits<double>::infinity();
  return {lo, hi};
}

void check_factor(const RunRecord& r, const char* check, double published, double energy_mwh, double profile_rate,
                  double pue, const AuditOptions& options, std::vector<Finding>& out) {
  const double implied = published / energy_mwh;
  const double folded = profile_rate;
  const double applied = profile_rate * pue;
  const Interval range = ratio_range(published, energy_mwh);
  const double dev_folded = relative(implied, folded);
  const double dev_applied = relative(implied, applied);
  const bool use_folded = dev_folded <= dev_applied;
  const double expected = use_folded ? folded : applied;
  const double deviation = std::min(dev_folded, dev_applied);
  if (deviation <= options.tolerance) return;
  if (range.contains(folded) || range.contains(applied)) return;  // explained by print rounding

  std::ostringstream detail;
  detail << "implied " << implied << " vs " << expected << (use_folded ? " (PUE folded)" : " (PUE applied)")
         << " on cluster " << r.cluster;
  out.push_back({r.id, check, implied, expected, deviation, detail.str()});
}

// Parses "13 yrs, 6 mo", "21 years", "9 months", "3 mo" into months.
std::optional<double> parse_duration_months(const std::string& s) {
  static const std::regex years_months(R"(^\s*(\d+)\s*(?:yrs?|years?)\s*,\s*(\d+)\s*mo\s*$)");
  static const std::regex years_only(R"(^\s*(\d+)\s*(?:yrs?|years?)\s*$)");
  static const std::regex months_only(R"(^\s*(\d+)\s*(?:mo|months?)\s*$)");
  std::smatch m;
  if (std::regex_match(s, m, years_months)) return std::stod(m[1]) * 12 + std::stod(m[2]);
  if (std::regex_match(s, m, years_only)) return std::stod(m[1]) * 12;
  if (std::regex_match(s, m, months_only)) return std::stod(m[1]);
  return std::nullopt;
}

void check_equivalency(const RunRecord& r, const char* key, const char* check, const std::optional<double>& value,
                       double factor, const AuditOptions& options, std::vector<Finding>& out) {
  const auto it = r.extra.find(key);
  if (it == r.extra.end() || !it->is_string() || !value || factor <= 0.0) return;
  const auto months = parse_duration_months(it->get<std::string>());
  if (!months || *months <= 0.0) return;

  const double implied = *value / (*months / 12.0);
  const double hv = half_unit(*value);
  const Interval range{(*value - hv) / ((*months + 0.5) / 12.0), (*value + hv) / ((*months - 0.5) / 12.0)};
  const double deviation = relative(implied, factor);
  if (deviation <= options.tolerance || range.contains(factor)) return;
  std::ostringstream detail;
  detail << "\"" << it->get<std::string>() << "\" implies " << implied << " per year vs table factor " << factor;
  out.push_back({r.id, check, implied, factor, deviation, detail.str()});
}

void audit_record(const RunRecord& r, const profiles::ProfileSet& profiles, const AuditOptions& options,
                  std::vector<Finding>& out) {
  if (r.inferred()) {
    out.push_back({r.id, "inferred_group", 0.0, 0.0, 0.0,
                   "row is a reconciliation residual, not a published figure"});
  }
  if (options.check_equivalencies) {
    check_equivalency(r, "co2_equiv", "co2_equivalency", r.co2_t, options.equivalencies.co2_per_home_year, options,
                      out);
    check_equivalency(r, "water_equiv", "water_equivalency", r.water_kl, options.equivalencies.water_per_person_year,
                      options, out);
  }
  if (r.cluster == kExternalCluster || !r.energy_mwh || *r.energy_mwh <= 0.0) return;
  if (!profiles.facilities.contains(r.cluster)) {
    out.push_back({r.id, "unknown_facility", 0.0, 0.0, 0.0, "cluster '" + r.cluster + "' has no facility profile"});
    return;
  }
  const auto& f = profiles.facility(r.cluster);
  if (r.co2_t) check_factor(r, "implied_ci", *r.co2_t, *r.energy_mwh, f.carbon_intensity, f.pue, options, out);
  if (r.water_kl) check_factor(r, "implied_wue", *r.water_kl, *r.energy_mwh, f.wue_total(), f.pue, options, out);
}

std::optional<double> sum_field(const std::vector<RunRecord>& runs, std::optional<double> RunRecord::*field) {
  if (runs.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& r : runs) {
    if (!(r.*field)) return std::nullopt;
    total += *(r.*field);
  }
  return total;
}

}  // namespace

GroupRow published_row(const DevGroup& group) {
  GroupRow row;
  row.name = group.name;
  row.gpu_hours = sum_field(group.runs, &RunRecord::gpu_hours);
  row.energy_mwh = sum_field(group.runs, &RunRecord::energy_mwh);
  row.runs = group.declared_run_count;
  row.co2_t = sum_field(group.runs, &RunRecord::co2_t);
  row.water_kl = sum_field(group.runs, &RunRecord::water_kl);
  return row;
}

ReconcileResult reconcile_groups(const PublishedTotals& totals, const std::vector<GroupRow>& listed,
                                 const std::string& cluster, bool pue_folded) {
  if (listed.empty()) throw ArgumentError("reconcile_groups needs at least one listed group");
  ReconcileResult out;
  out.residual.name = "residual";

  bool positive = false;
  auto column = [&](const char* name, const std::optional<double>& total, auto field) -> std::optional<double> {
    if (!total) return std::nullopt;
    double sum = 0.0;
    for (const auto& g : listed) {
      const auto v = g.*field;
      if (!v) return std::nullopt;
      sum += static_cast<double>(*v);
    }
    // Exact column subtraction, done on the printed decimals.
    const int decimals = 6;
    const double residual =
        rounding::add(rounding::round_half_up(*total, decimals), rounding::round_half_up(-sum, decimals)).value();
    if (residual < 0.0) {
      std::ostringstream detail;
      detail << "listed groups sum to " << sum << " " << name << ", exceeding the published total " << *total;
      out.findings.push_back({"total", "negative_residual", sum, *total, relative(sum, *total), detail.str()});
    } else if (residual > 0.0) {
      positive = true;
    }
    return residual;
  };

  out.residual.gpu_hours = column("GPU hours", totals.gpu_hours, &GroupRow::gpu_hours);
  out.residual.energy_mwh = column("MWh", totals.energy_mwh, &GroupRow::energy_mwh);
  if (const auto runs = column("runs", totals.runs ? std::optional<double>(static_cast<double>(*totals.runs))
                                                   : std::nullopt,
                               &GroupRow::runs)) {
    out.residual.runs = std::llround(*runs);
  }
  out.residual.co2_t = column("tCO2eq", totals.co2_t, &GroupRow::co2_t);
  out.residual.water_kl = column("kL", totals.water_kl, &GroupRow::water_kl);

  if (!out.findings.empty() || !positive) return out;

  RunRecord r;
  r.id = "inferred-residual";
  r.kind = RunKind::development;
  r.model_name = out.residual.name;
  r.cluster = cluster;
  r.gpu_hours = out.residual.gpu_hours;
  r.energy_mwh = out.residual.energy_mwh;
  r.co2_t = out.residual.co2_t;
  r.water_kl = out.residual.water_kl;
  r.pue_folded = pue_folded;
  r.group = out.residual.name;
  if (out.residual.runs && *out.residual.runs >= 1) r.run_count = *out.residual.runs;
  r.extra["inferred"] = true;
  if (!r.energy_mwh && !r.co2_t) return out;  // nothing a run record could carry

  DevGroup g;
  g.name = out.residual.name;
  g.declared_run_count = r.runs();
  g.inferred = true;
  g.runs.push_back(std::move(r));
  out.inferred = std::move(g);
  return out;
}

std::vector<Finding> audit(const Campaign& campaign, const profiles::ProfileSet& profiles,
                           const AuditOptions& options) {
  std::vector<Finding> out;
  for (const auto& g : campaign.dev_groups) {
    for (const auto& r : g.runs) audit_record(r, profiles, options, out);
  }
  for (const auto& r : campaign.final_runs) audit_record(r, profiles, options, out);
  for (const auto& r : campaign.external_runs) audit_record(r, profiles, options, out);

  if (campaign.dev_totals && !campaign.dev_groups.empty()) {
    std::vector<GroupRow> listed;
    for (const auto& g : campaign.dev_groups) {
      if (!g.inferred) listed.push_back(published_row(g));
    }
    if (!listed.empty()) {
      auto rec = reconcile_groups(*campaign.dev_totals, listed);
      out.insert(out.end(), rec.findings.begin(), rec.findings.end());
    }
  }
  return out;
}

std::string render_findings(const std::vector<Finding>& findings, ReportStyle style) {
  std::ostringstream out;
  switch (style) {
    case ReportStyle::json: {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& f : findings) {
        nlohmann::ordered_json j;
        j["row_id"] = f.row_id;
        j["check"] = f.check;
        j["observed"] = f.observed;
        j["expected"] = f.expected;
        j["deviation"] = std::isfinite(f.deviation) ? nlohmann::ordered_json(f.deviation) : nullptr;
        j["detail"] = f.detail;
        arr.push_back(std::move(j));
      }
      out << nlohmann::ordered_json{{"findings", arr}}.dump(2) << '\n';
      break;
    }
    case ReportStyle::csv:
      out << "row_id,check,observed,expected,deviation,detail\n";
      for (const auto& f : findings) {
        std::string detail = f.detail;
        std::replace(detail.begin(), detail.end(), '"', '\'');
        out << f.row_id << ',' << f.check << ',' << f.observed << ',' << f.expected << ',' << f.deviation << ",\""
            << detail << "\"\n";
      }
      break;
    case ReportStyle::markdown:
      if (findings.empty()) {
        out << "No findings.\n";
        break;
      }
      out << "| Row | Check | Observed | Expected | Deviation | Detail |\n";
      out << "|---|---|---|---|---|---|\n";
      for (const auto& f : findings) {
        out << "| " << f.row_id << " | " << f.check << " | " << f.observed << " | " << f.expected << " | ";
        if (std::isfinite(f.deviation)) {
          out << rounding::round_half_up(f.deviation * 100.0, 1).str() << "%";
        } else {
          out << "-";
        }
        out << " | " << f.detail << " |\n";
      }
      break;
  }
  return out.str();
}

}  // namespace mlfp::ledger
