#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mlfp/ledger.hpp"
#include "mlfp/rounding.hpp"

using namespace mlfp;
using namespace mlfp::ledger;

namespace {

const std::string kLedger = std::string(MLFP_DATA_DIR) + "/ledger/olmo.jsonl";

const profiles::ProfileSet& builtin() { return profiles::builtin_profiles(); }

LedgerSnapshot read(const std::string& text) {
  std::istringstream in(text);
  return read_ledger(in, "test");
}

AggregateOptions recomputed_jupiter() {
  AggregateOptions o;
  o.recompute_clusters = {"jupiter"};
  o.pue_override = impact::PueConvention::folded;
  return o;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) rows.push_back(split_csv(line));
  return rows;
}

std::string render(const CampaignImpact& ci, ReportStyle style, const AggregateOptions& options = {}) {
  return render_report(ci, builtin(), {profiles::default_equivalencies(), options}, style);
}

}  // namespace

TEST_CASE("record JSON round trip preserves unknown fields") {
  const auto j = nlohmann::json::parse(
      R"({"id":"r1","kind":"final","model_name":"M","cluster":"jupiter","energy_mwh":1.5,"co2_t":0.5,)"
      R"("pue_folded":true,"note":"kept","nested":{"a":[1,2]}})");
  const auto r = record_from_json(j);
  CHECK(r.extra["note"] == "kept");
  const auto back = record_from_json(record_to_json(r));
  CHECK(record_to_json(back) == record_to_json(r));
  CHECK(back.energy_mwh == 1.5);
  CHECK_FALSE(back.water_kl.has_value());
  CHECK(back.extra["nested"]["a"][1] == 2);
}

TEST_CASE("record validation") {
  CHECK_THROWS_AS(record_from_json(nlohmann::json::parse(R"({"kind":"final"})")), FormatError);
  CHECK_THROWS_AS(record_from_json(nlohmann::json::parse(R"({"id":"x","kind":"trial"})")), FormatError);
  CHECK_THROWS_AS(record_from_json(nlohmann::json::parse(R"({"id":"x","kind":"final","energy_mwh":-1})")),
                  ValidationError);
  CHECK_THROWS_AS(record_from_json(nlohmann::json::parse(R"({"id":"x","kind":"final","energy_mwh":"lots"})")),
                  FormatError);
  CHECK_THROWS_AS(record_from_json(nlohmann::json::parse(R"({"id":"x","kind":"final","run_count":0})")),
                  ValidationError);
  CHECK(record_from_json(nlohmann::json::parse(R"({"id":"x","kind":"final","energy_mwh":1})")).model_name == "x");
}

TEST_CASE("later records supersede earlier ones; deletions retract") {
  const auto snap = read(R"({"id":"a","kind":"final","cluster":"jupiter","energy_mwh":1}
{"id":"b","kind":"final","cluster":"jupiter","energy_mwh":2}
{"id":"a","kind":"final","cluster":"jupiter","energy_mwh":3}
{"id":"b","deleted":true}
{"id":"c","kind":"final","cluster":"jupiter","energy_mwh":4}
)");
  REQUIRE(snap.records.size() == 2);
  CHECK(snap.records[0].id == "a");
  CHECK(snap.records[0].energy_mwh == 3.0);
  CHECK(snap.records[1].id == "c");
  CHECK(snap.superseded == 2);
}

TEST_CASE("malformed ledger lines report file and line") {
  try {
    read("{\"id\":\"a\",\"kind\":\"final\",\"cluster\":\"jupiter\",\"energy_mwh\":1}\nnot json\n");
    FAIL("expected error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("test:2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_ledger("/nonexistent/ledger.jsonl"), IoError);
}

TEST_CASE("snapshot write/read round trip on the shipped ledger") {
  const auto snap = load_ledger(kLedger);
  std::ostringstream out;
  write_snapshot(out, snap);
  const auto again = read(out.str());
  REQUIRE(again.records.size() == snap.records.size());
  for (std::size_t i = 0; i < snap.records.size(); ++i) {
    CHECK(record_to_json(again.records[i]) == record_to_json(snap.records[i]));
  }
  CHECK(again.total_gpu_hours == snap.total_gpu_hours);
  std::ostringstream out2;
  write_snapshot(out2, again);
  CHECK(out2.str() == out.str());
}

TEST_CASE("append_record writes one parseable line") {
  RunRecord r;
  r.id = "x";
  r.cluster = "jupiter";
  r.energy_mwh = 2.0;
  std::ostringstream out;
  append_record(out, r);
  const std::string line = out.str();
  CHECK(std::count(line.begin(), line.end(), '\n') == 1);
  CHECK(read(out.str()).records.at(0).energy_mwh == 2.0);
  r.energy_mwh = -1.0;
  std::ostringstream bad;
  CHECK_THROWS_AS(append_record(bad, r), ValidationError);
  CHECK(bad.str().empty());
}

TEST_CASE("campaign build: groups, inferred residual, GPU hours") {
  const auto c = build_campaign(load_ledger(kLedger), builtin());
  REQUIRE(c.dev_groups.size() == 5);
  CHECK(c.dev_groups[0].name == "<1B");
  CHECK(c.dev_groups[1].name == "7B");
  CHECK(c.dev_groups[4].inferred);
  const auto& r = c.dev_groups[4].runs.at(0);
  CHECK(r.gpu_hours == doctest::Approx(164000));
  CHECK(r.energy_mwh == doctest::Approx(109));
  CHECK(r.runs() == 227);
  CHECK(c.final_runs.size() == 13);
  CHECK(c.external_runs.size() == 5);
  CHECK(c.total_gpu_hours == 1.65e6);
}

TEST_CASE("campaign total GPU hours below the recorded sum is rejected") {
  const auto snap = read(R"({"kind":"campaign","total_gpu_hours":10}
{"id":"a","kind":"final","cluster":"jupiter","gpu_hours":20,"energy_mwh":1}
)");
  CHECK_THROWS_AS(build_campaign(snap, builtin()), ValidationError);
}

TEST_CASE("aggregation is invariant under record order") {
  auto snap = load_ledger(kLedger);
  const auto base = aggregate(build_campaign(snap, builtin()), builtin(), recomputed_jupiter());
  const std::string expected = render(base, ReportStyle::csv, recomputed_jupiter());
  std::mt19937_64 rng(42);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(snap.records.begin(), snap.records.end(), rng);
    const auto ci = aggregate(build_campaign(snap, builtin()), builtin(), recomputed_jupiter());
    CHECK(ci.grand_total == base.grand_total);
    CHECK(render(ci, ReportStyle::csv, recomputed_jupiter()) == expected);
  }
}

TEST_CASE("grand total is the sum of its components") {
  const auto ci = aggregate(build_campaign(load_ledger(kLedger), builtin()), builtin());
  const auto sum = ci.development.as_operational() + ci.final_runs.as_operational() + ci.embodied;
  CHECK(ci.grand_total.co2_kg() == doctest::Approx(sum.co2_kg()).epsilon(1e-12));
  CHECK(ci.grand_total.water_l() == doctest::Approx(sum.water_l()).epsilon(1e-12));
  double dev = 0.0;
  for (const auto& g : ci.groups) dev += *g.co2_kg;
  CHECK(ci.development.co2_kg == doctest::Approx(dev).epsilon(1e-12));
}

TEST_CASE("published basis keeps published figures; computed basis recomputes") {
  const auto c = build_campaign(load_ledger(kLedger), builtin());
  const auto& twin = *std::find_if(c.final_runs.begin(), c.final_runs.end(),
                                   [](const RunRecord& r) { return r.id == "final-09-olmo-7b-twin"; });
  const auto& olmo2 = *std::find_if(c.final_runs.begin(), c.final_runs.end(),
                                    [](const RunRecord& r) { return r.id == "final-11-olmo-2-7b"; });
  AggregateOptions published;
  CHECK(row_impact(olmo2, builtin(), published).co2_kg == 52'000.0);
  CHECK(row_impact(olmo2, builtin(), published).co2_published);
  AggregateOptions computed;
  computed.basis = ImpactBasis::computed;
  CHECK(*row_impact(olmo2, builtin(), computed).co2_kg == doctest::Approx(157'000 * 0.332));
  // External clusters are never recomputed.
  CHECK(row_impact(twin, builtin(), computed).co2_kg == 70'000.0);
}

TEST_CASE("row impact errors") {
  RunRecord r;
  r.id = "x";
  r.cluster = "atlantis";
  r.energy_mwh = 1.0;
  CHECK_THROWS_AS(row_impact(r, builtin(), {}), ValidationError);
  r.cluster = "jupiter";
  r.energy_mwh.reset();
  CHECK_THROWS_AS(row_impact(r, builtin(), {}), ValidationError);
}

TEST_CASE("table totals add up to the displayed cells") {
  const auto ci = aggregate(build_campaign(load_ledger(kLedger), builtin()), builtin(), recomputed_jupiter());
  const auto rows = csv_rows(render(ci, ReportStyle::csv, recomputed_jupiter()));
  for (const char* section : {"development", "final"}) {
    rounding::Decimal co2{0, 1}, water{0, 1};
    std::vector<std::string> total;
    for (const auto& r : rows) {
      if (r[0] != section) continue;
      if (r[1] == "Total") {
        total = r;
        continue;
      }
      co2 = rounding::add(co2, rounding::round_half_up(std::stod(r[5]), 1));
      water = rounding::add(water, rounding::round_half_up(std::stod(r[7]), 1));
    }
    REQUIRE(!total.empty());
    CHECK(rounding::display_round(co2.value(), 1).str() == total[5]);
    CHECK(rounding::display_round(water.value(), 10).str() == total[7]);
  }
}

TEST_CASE("markdown, csv and json carry the same cells") {
  const auto ci = aggregate(build_campaign(load_ledger(kLedger), builtin()), builtin(), recomputed_jupiter());
  const std::string md = render(ci, ReportStyle::markdown, recomputed_jupiter());
  const auto rows = csv_rows(render(ci, ReportStyle::csv, recomputed_jupiter()));
  const auto json = nlohmann::json::parse(render(ci, ReportStyle::json, recomputed_jupiter()));

  std::size_t final_index = 0;
  for (const auto& r : rows) {
    if (r[0] == "final") {
      const std::string label = r[1] == "Total" ? "**Total**" : r[1];
      const std::string line = "| " + label + " | " + r[3] + " | " + r[5] + " | " + (r[6].empty() ? "-" : r[6]) +
                               " | " + r[7] + " | " + (r[8].empty() ? "-" : r[8]) + " |";
      CHECK_MESSAGE(md.find(line) != std::string::npos, line);
      const auto& j = json["final"][final_index++];
      CHECK(j["label"] == r[1]);
      CHECK(j["cells"]["mwh"] == r[3]);
      CHECK(j["cells"]["co2_t"] == r[5]);
      CHECK(j["cells"]["water_kl"] == r[7]);
    }
    if (r[0] == "summary") {
      const std::string line = "| " + r[1] + " | " + r[5] + " | " + r[7] + " |";
      CHECK_MESSAGE(md.find(line) != std::string::npos, line);
    }
  }
  CHECK(final_index == json["final"].size());
}

TEST_CASE("summary total is the sum of the printed summary cells") {
  const auto ci = aggregate(build_campaign(load_ledger(kLedger), builtin()), builtin());
  const auto rows = csv_rows(render(ci, ReportStyle::csv));
  std::vector<std::vector<std::string>> summary;
  for (const auto& r : rows) {
    if (r[0] == "summary") summary.push_back(r);
  }
  REQUIRE(summary.size() == 4);
  rounding::Decimal co2{0, 1}, water{0, 1};
  for (std::size_t i = 0; i < 3; ++i) {
    co2 = rounding::add(co2, rounding::round_half_up(std::stod(summary[i][5]), 1));
    water = rounding::add(water, rounding::round_half_up(std::stod(summary[i][7]), 1));
  }
  CHECK(rounding::display_round(co2.value(), 10).str() == summary[3][5]);
  CHECK(rounding::display_round(water.value(), 10).str() == summary[3][7]);
  CHECK(summary[3][5] == "493");
  CHECK(summary[3][7] == "2769");
}

TEST_CASE("reconcile_groups: positive and negative residuals") {
  PublishedTotals t{100.0, 10.0, 5, 3.0, 9.0};
  std::vector<GroupRow> listed{{"a", 60.0, 4.0, 2, 1.0, 3.0}, {"b", 30.0, 5.0, 2, 1.5, 4.5}};
  const auto ok = reconcile_groups(t, listed);
  CHECK(ok.findings.empty());
  REQUIRE(ok.inferred.has_value());
  CHECK(ok.residual.gpu_hours == doctest::Approx(10.0));
  CHECK(ok.residual.energy_mwh == doctest::Approx(1.0));
  CHECK(ok.residual.runs == 1);
  CHECK(ok.inferred->runs.at(0).inferred());

  listed[0].co2_t = 2.0;
  const auto bad = reconcile_groups(t, listed);
  CHECK_FALSE(bad.inferred.has_value());
  REQUIRE(bad.findings.size() == 1);
  CHECK(bad.findings[0].check == "negative_residual");

  CHECK_THROWS_AS(reconcile_groups(t, {}), ArgumentError);
}

TEST_CASE("audit on the shipped ledger") {
  const auto c = build_campaign(load_ledger(kLedger), builtin());
  const auto findings = audit(c, builtin());
  std::vector<std::string> flagged;
  for (const auto& f : findings) {
    if (f.check == "implied_ci" || f.check == "implied_wue") flagged.push_back(f.row_id);
  }
  CHECK(std::count(flagged.begin(), flagged.end(), "final-12-olmo-2-13b") == 2);
  CHECK(std::count(flagged.begin(), flagged.end(), "final-11-olmo-2-7b") == 0);
  CHECK(flagged.size() == 2);
  CHECK(std::any_of(findings.begin(), findings.end(), [](const Finding& f) { return f.check == "inferred_group"; }));
  const auto j = nlohmann::json::parse(render_findings(findings, ReportStyle::json));
  CHECK(j["findings"].size() == findings.size());
}

TEST_CASE("audit flags a row whose published figure disagrees with its facility") {
  RunRecord r;
  r.id = "odd";
  r.kind = RunKind::final_run;
  r.cluster = "jupiter";
  r.energy_mwh = 100.0;
  r.co2_t = 50.0;  // implies 0.5 kg/kWh
  r.pue_folded = true;
  Campaign c;
  c.final_runs.push_back(r);
  auto f = audit(c, builtin());
  REQUIRE(f.size() == 1);
  CHECK(f[0].check == "implied_ci");
  CHECK(f[0].observed == doctest::Approx(0.5));
  r.co2_t = 33.2;
  c.final_runs = {r};
  CHECK(audit(c, builtin()).empty());
}

TEST_CASE("audit equivalency strings are opt-in") {
  RunRecord r;
  r.id = "eq";
  r.kind = RunKind::final_run;
  r.cluster = "external";
  r.co2_t = 48.1;
  r.extra["co2_equiv"] = "20 years";  // table factor gives 10 years
  Campaign c;
  c.final_runs.push_back(r);
  CHECK(audit(c, builtin()).empty());
  AuditOptions o;
  o.check_equivalencies = true;
  const auto f = audit(c, builtin(), o);
  REQUIRE(f.size() == 1);
  CHECK(f[0].check == "co2_equivalency");
}
