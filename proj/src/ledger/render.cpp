#include <sstream>

#include <json.hpp>

#include "mlfp/ledger.hpp"
#include "mlfp/rounding.hpp"

namespace mlfp::ledger {

namespace {

using rounding::Decimal;
using rounding::display_round;

// Below these magnitudes a cell keeps one decimal (0.3 t, 5.9 kL, 0.8 MWh).
constexpr double kCo2OneDecimalBelow = 1.0;
constexpr double kEnergyOneDecimalBelow = 10.0;
constexpr double kWaterOneDecimalBelow = 10.0;

enum class Section { development, final_runs, external };

const char* section_name(Section s) {
  switch (s) {
    case Section::development:
      return "development";
    case Section::final_runs:
      return "final";
    case Section::external:
      return "external";
  }
  return "final";
}

// A table row as displayed, plus the unrounded values behind it.
struct Line {
  Section section;
  std::string label;
  bool total = false;
  std::optional<Decimal> gpu_khours, mwh, co2_t, water_kl;
  std::optional<std::int64_t> runs;
  std::string co2_equiv, water_equiv;
  std::optional<double> raw_gpu_hours, raw_mwh, raw_co2_t, raw_water_kl;
};

std::optional<Decimal> cell(const std::optional<double>& v, double one_decimal_below) {
  if (!v) return std::nullopt;
  return display_round(*v, one_decimal_below);
}

std::optional<double> scaled(const std::optional<double>& v, double factor) {
  if (!v) return std::nullopt;
  return *v * factor;
}

Line make_line(Section section, const RowImpact& row, const profiles::EquivalencyTable& eq) {
  Line l;
  l.section = section;
  l.label = row.inferred ? row.label + " (inferred)" : row.label;
  l.raw_gpu_hours = row.gpu_hours;
  l.raw_mwh = row.energy_mwh;
  l.raw_co2_t = scaled(row.co2_kg, 1e-3);
  l.raw_water_kl = scaled(row.water_l, 1e-3);
  if (row.gpu_hours) l.gpu_khours = rounding::round_half_up(*row.gpu_hours / 1000.0, 0);
  l.mwh = cell(l.raw_mwh, kEnergyOneDecimalBelow);
  l.co2_t = cell(l.raw_co2_t, kCo2OneDecimalBelow);
  l.water_kl = cell(l.raw_water_kl, kWaterOneDecimalBelow);
  if (section == Section::development) l.runs = row.runs;
  if (l.raw_co2_t && eq.co2_per_home_year > 0) l.co2_equiv = impact::format_years(*l.raw_co2_t / eq.co2_per_home_year);
  if (l.raw_water_kl && eq.water_per_person_year > 0) {
    l.water_equiv = impact::format_years(*l.raw_water_kl / eq.water_per_person_year);
  }
  return l;
}

// Totals are sums of the displayed cells, so a printed column always adds up.
Line total_line(Section section, const std::vector<Line>& lines, const profiles::EquivalencyTable& eq) {
  Line t;
  t.section = section;
  t.total = true;
  t.label = "Total";
  Decimal gpu{0, 0}, mwh{0, 1}, co2{0, 1}, water{0, 1};
  std::int64_t runs = 0;
  for (const auto& l : lines) {
    if (l.gpu_khours) gpu = rounding::add(gpu, *l.gpu_khours);
    if (l.mwh) mwh = rounding::add(mwh, *l.mwh);
    if (l.co2_t) co2 = rounding::add(co2, *l.co2_t);
    if (l.water_kl) water = rounding::add(water, *l.water_kl);
    if (l.runs) runs += *l.runs;
  }
  if (section == Section::development) {
    t.gpu_khours = gpu;
    t.runs = runs;
  }
  t.mwh = display_round(mwh.value(), kEnergyOneDecimalBelow);
  t.co2_t = display_round(co2.value(), kCo2OneDecimalBelow);
  t.water_kl = display_round(water.value(), kWaterOneDecimalBelow);
  t.raw_gpu_hours = gpu.value() * 1000.0;
  t.raw_mwh = mwh.value();
  t.raw_co2_t = co2.value();
  t.raw_water_kl = water.value();
  if (eq.co2_per_home_year > 0) t.co2_equiv = impact::format_years(co2.value() / eq.co2_per_home_year);
  if (eq.water_per_person_year > 0) t.water_equiv = impact::format_years(water.value() / eq.water_per_person_year);
  return t;
}

std::string text(const std::optional<Decimal>& d, const char* missing) { return d ? d->str() : missing; }

std::string gpu_text(const std::optional<Decimal>& k, const char* missing) {
  if (!k) return missing;
  return k->str() + "k";
}

struct SummaryLine {
  std::string label;
  double co2_t;
  double water_kl;
};

struct Document {
  std::vector<Line> development, finals, externals;
  std::vector<SummaryLine> summary;
  impact::Equivalencies total_equiv;
  std::vector<std::string> footer;
};

std::string fmt_number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

Document build(const CampaignImpact& impact, const profiles::ProfileSet& profiles, const ReportContext& ctx) {
  Document doc;
  const auto& eq = ctx.equivalencies;
  for (const auto& g : impact.groups) doc.development.push_back(make_line(Section::development, g, eq));
  doc.development.push_back(total_line(Section::development, doc.development, eq));
  for (const auto& r : impact.finals) doc.finals.push_back(make_line(Section::final_runs, r, eq));
  doc.finals.push_back(total_line(Section::final_runs, doc.finals, eq));
  for (const auto& r : impact.externals) doc.externals.push_back(make_line(Section::external, r, eq));

  // The summary quotes the table totals as printed, so the document adds up
  // from top to bottom.
  const Line& dev = doc.development.back();
  const Line& fin = doc.finals.back();
  const double embodied_t = impact.embodied.co2_kg() / 1000.0;
  const double embodied_kl = impact.embodied.water_l() / 1000.0;
  doc.summary = {
      {"Embodied (hardware)", embodied_t, embodied_kl},
      {"Development", *dev.raw_co2_t, *dev.raw_water_kl},
      {"Final training runs", *fin.raw_co2_t, *fin.raw_water_kl},
  };
  Decimal co2_sum{0, 1}, water_sum{0, 1};
  for (const auto& s : doc.summary) {
    co2_sum = rounding::add(co2_sum, display_round(s.co2_t, kWaterOneDecimalBelow));
    water_sum = rounding::add(water_sum, display_round(s.water_kl, kWaterOneDecimalBelow));
  }
  doc.summary.push_back({"Total", co2_sum.value(), water_sum.value()});
  doc.total_equiv = impact::equivalize(impact.grand_total, eq);

  for (const auto& name : impact.facilities_used) {
    const auto it = profiles.facilities.find(name);
    if (it == profiles.facilities.end()) continue;
    const auto& f = it->second;
    doc.footer.push_back("facility " + f.name + ": PUE " + fmt_number(f.pue) + ", CI " +
                         fmt_number(f.carbon_intensity) + " kg/kWh, WUE " + fmt_number(f.wue_onsite) + " + " +
                         fmt_number(f.wue_offsite) + " L/kWh");
  }
  if (!impact.hardware.empty()) {
    const auto rate = [&]() -> std::optional<impact::AmortizedRate> {
      const auto it = profiles.hardware.find(impact.hardware);
      if (it == profiles.hardware.end()) return std::nullopt;
      return impact::amortized_rate(it->second);
    }();
    std::string line = "hardware " + impact.hardware + ": " + fmt_number(impact.total_gpu_hours) + " GPU hours";
    if (rate) {
      line += ", " + fmt_number(rate->co2_kg_per_gpu_hour) + " kg CO2eq and " +
              fmt_number(rate->water_l_per_gpu_hour) + " L per GPU hour";
    }
    doc.footer.push_back(line);
  }
  doc.footer.push_back("equivalencies " + eq.name + ": " + fmt_number(eq.co2_per_home_year) + " t/home-year, " +
                       fmt_number(eq.co2_per_tanker_truck) + " t/tanker truck, " +
                       fmt_number(eq.co2_per_forest_acre_year) + " t/forest acre-year, " +
                       fmt_number(eq.water_per_person_year) + " kL/person-year");
  std::string convention = ctx.options.pue_override
                               ? std::string("PUE ") + impact::to_string(*ctx.options.pue_override) + " on every row"
                               : std::string("PUE convention per row");
  std::string basis = ctx.options.basis == ImpactBasis::computed ? "computed from energy" : "published where given";
  if (ctx.options.basis == ImpactBasis::published && !ctx.options.recompute_clusters.empty()) {
    basis += ", recomputed on";
    for (const auto& c : ctx.options.recompute_clusters) basis += " " + c;
  }
  doc.footer.push_back("basis: " + basis + "; " + convention);
  return doc;
}

void markdown_final_table(std::ostringstream& out, const std::vector<Line>& lines) {
  out << "| Model | MWh | CO2 (t) | Equiv. (home energy) | Water (kL) | Equiv. (person water) |\n";
  out << "|---|---:|---:|---|---:|---|\n";
  for (const auto& l : lines) {
    const std::string label = l.total ? "**" + l.label + "**" : l.label;
    out << "| " << label << " | " << text(l.mwh, "-") << " | " << text(l.co2_t, "-") << " | "
        << (l.co2_equiv.empty() ? "-" : l.co2_equiv) << " | " << text(l.water_kl, "-") << " | "
        << (l.water_equiv.empty() ? "-" : l.water_equiv) << " |\n";
  }
}

std::string render_markdown(const Document& doc) {
  std::ostringstream out;
  out << "## Development\n\n";
  out << "| Group | GPU Hours | MWh | Runs | CO2 (t) | Equiv. (home energy) | Water (kL) | Equiv. (person water) |\n";
  out << "|---|---:|---:|---:|---:|---|---:|---|\n";
  for (const auto& l : doc.development) {
    const std::string label = l.total ? "**" + l.label + "**" : l.label;
    out << "| " << label << " | " << gpu_text(l.gpu_khours, "-") << " | " << text(l.mwh, "-") << " | "
        << (l.runs ? std::to_string(*l.runs) : "-") << " | " << text(l.co2_t, "-") << " | "
        << (l.co2_equiv.empty() ? "-" : l.co2_equiv) << " | " << text(l.water_kl, "-") << " | "
        << (l.water_equiv.empty() ? "-" : l.water_equiv) << " |\n";
  }
  out << "\n## Final training runs\n\n";
  markdown_final_table(out, doc.finals);
  if (!doc.externals.empty()) {
    out << "\n## External models (as published)\n\n";
    markdown_final_table(out, doc.externals);
  }
  out << "\n## Summary\n\n";
  out << "| Component | CO2 (t) | Water (kL) |\n|---|---:|---:|\n";
  for (const auto& s : doc.summary) {
    out << "| " << s.label << " | " << display_round(s.co2_t, kWaterOneDecimalBelow).str() << " | "
        << display_round(s.water_kl, kWaterOneDecimalBelow).str() << " |\n";
  }
  const auto& e = doc.total_equiv;
  out << "\nTotal equivalent to " << rounding::round_half_up(e.tanker_trucks, 1).str()
      << " tanker trucks of gasoline, " << rounding::round_half_up(e.home_years, 1).str()
      << " home-years of energy use, " << rounding::round_half_up(e.forest_acre_years, 0).str()
      << " forest acre-years of sequestration, and " << e.person_water << " of one person's water use.\n";
  out << "\nFactors used:\n\n";
  for (const auto& f : doc.footer) out << "- " << f << '\n';
  return out.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

std::string render_csv(const Document& doc) {
  std::ostringstream out;
  out << "section,label,gpu_hours,mwh,runs,co2_t,co2_equiv,water_kl,water_equiv\n";
  auto emit = [&](const Line& l) {
    out << section_name(l.section) << ',' << csv_field(l.label) << ',' << gpu_text(l.gpu_khours, "") << ','
        << text(l.mwh, "") << ',' << (l.runs ? std::to_string(*l.runs) : "") << ',' << text(l.co2_t, "") << ','
        << csv_field(l.co2_equiv) << ',' << text(l.water_kl, "") << ',' << csv_field(l.water_equiv) << '\n';
  };
  for (const auto& l : doc.development) emit(l);
  for (const auto& l : doc.finals) emit(l);
  for (const auto& l : doc.externals) emit(l);
  for (const auto& s : doc.summary) {
    out << "summary," << csv_field(s.label) << ",,,," << display_round(s.co2_t, kWaterOneDecimalBelow).str()
        << ",," << display_round(s.water_kl, kWaterOneDecimalBelow).str() << ",\n";
  }
  return out.str();
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string render_json(const Document& doc) {
  using oj = nlohmann::ordered_json;
  auto lines = [](const std::vector<Line>& v) {
    oj arr = oj::array();
    for (const auto& l : v) {
      oj cells;
      cells["gpu_hours"] = gpu_text(l.gpu_khours, "");
      cells["mwh"] = text(l.mwh, "");
      cells["runs"] = l.runs ? std::to_string(*l.runs) : "";
      cells["co2_t"] = text(l.co2_t, "");
      cells["co2_equiv"] = l.co2_equiv;
      cells["water_kl"] = text(l.water_kl, "");
      cells["water_equiv"] = l.water_equiv;
      oj values;
      values["gpu_hours"] = optional_json(l.raw_gpu_hours);
      values["mwh"] = optional_json(l.raw_mwh);
      values["runs"] = l.runs ? oj(*l.runs) : oj(nullptr);
      values["co2_t"] = optional_json(l.raw_co2_t);
      values["water_kl"] = optional_json(l.raw_water_kl);
      arr.push_back(oj{{"label", l.label}, {"total", l.total}, {"cells", cells}, {"values", values}});
    }
    return arr;
  };
  oj j;
  j["development"] = lines(doc.development);
  j["final"] = lines(doc.finals);
  j["external"] = lines(doc.externals);
  oj summary = oj::array();
  for (const auto& s : doc.summary) {
    summary.push_back(oj{{"label", s.label},
                         {"co2_t", display_round(s.co2_t, kWaterOneDecimalBelow).str()},
                         {"water_kl", display_round(s.water_kl, kWaterOneDecimalBelow).str()},
                         {"values", oj{{"co2_t", s.co2_t}, {"water_kl", s.water_kl}}}});
  }
  j["summary"] = summary;
  j["factors"] = doc.footer;
  return j.dump(2) + "\n";
}

}  // namespace

ReportStyle report_style_from_name(const std::string& name) {
  if (name == "markdown" || name == "md") return ReportStyle::markdown;
  if (name == "csv") return ReportStyle::csv;
  if (name == "json") return ReportStyle::json;
  throw ArgumentError("unknown format '" + name + "' (expected markdown, csv or json)");
}

std::string render_report(const CampaignImpact& impact, const profiles::ProfileSet& profiles,
                          const ReportContext& context, ReportStyle style) {
  const Document doc = build(impact, profiles, context);
  switch (style) {
    case ReportStyle::markdown:
      return render_markdown(doc);
    case ReportStyle::csv:
      return render_csv(doc);
    case ReportStyle::json:
      return render_json(doc);
  }
  return render_markdown(doc);
}

}  // namespace mlfp::ledger
