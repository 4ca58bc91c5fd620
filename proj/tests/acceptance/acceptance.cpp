// Acceptance suite: one PASS/FAIL line per criterion. `--criterion N` runs a
// single criterion; the exit status is non-zero when any selected criterion
// fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlfp/impact.hpp"
#include "mlfp/inference.hpp"
#include "mlfp/ledger.hpp"
#include "mlfp/rounding.hpp"
#include "mlfp/telemetry.hpp"
#include "oracles.hpp"

using namespace mlfp;

namespace {

const std::string kData = MLFP_DATA_DIR;
const std::string kLedger = kData + "/ledger/olmo.jsonl";

const profiles::ProfileSet& builtin() { return profiles::builtin_profiles(); }

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;     // always printed
  std::vector<std::string> failures;  // printed when failing

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string num(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// Unit of the last printed digit of a published value: 202 -> 1, 3.6 -> 0.1.
double last_digit_unit(double printed) {
  for (int d = 0; d <= 6; ++d) {
    const double scaled = printed * std::pow(10.0, d);
    if (std::abs(scaled - std::round(scaled)) < 1e-9 * std::max(1.0, std::abs(scaled))) return std::pow(10.0, -d);
  }
  return 1e-6;
}

// Rounds `computed` to the precision of `printed` and compares within one unit.
bool within_one_digit(double computed, double printed) {
  const double unit = last_digit_unit(printed);
  const int decimals = static_cast<int>(std::lround(-std::log10(unit)));
  const double shown = rounding::round_half_up(computed, decimals).value();
  return std::abs(shown - printed) <= unit * (1.0 + 1e-9);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> csv_row(const std::string& csv, const std::string& section, const std::string& label) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    auto f = split_csv(line);
    if (f.size() >= 2 && f[0] == section && f[1] == label) return f;
  }
  return {};
}

template <class F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

// Final-run table with the Jupiter preset, PUE folded, recomputed from the
// published MWh column.
Outcome final_run_table() {
  Outcome o;
  std::string csv;
  ledger::Campaign campaign;
  ledger::CampaignImpact ci;
  ledger::AggregateOptions options;
  options.recompute_clusters = {"jupiter"};
  options.pue_override = impact::PueConvention::folded;
  const double elapsed = seconds([&] {
    campaign = ledger::build_campaign(ledger::load_ledger(kLedger), builtin());
    ci = ledger::aggregate(campaign, builtin(), options);
    csv = ledger::render_report(ci, builtin(), {profiles::default_equivalencies(), options}, ledger::ReportStyle::csv);
  });

  int rows = 0;
  for (const auto& r : campaign.final_runs) {
    if (r.cluster != "jupiter") continue;
    ++rows;
    const auto row = ledger::row_impact(r, builtin(), options);
    const double co2 = *row.co2_kg / 1000.0, water = *row.water_l / 1000.0;
    o.require(within_one_digit(co2, *r.co2_t),
              r.model_name + " CO2 " + num(co2, 4) + " t vs printed " + num(*r.co2_t));
    o.require(within_one_digit(water, *r.water_kl),
              r.model_name + " water " + num(water, 4) + " kL vs printed " + num(*r.water_kl));
  }
  const auto total = csv_row(csv, "final", "Total");
  o.require(total.size() >= 8, "no final-run total row");
  if (total.size() >= 8) {
    o.note("total " + total[3] + " MWh / " + total[5] + " t / " + total[7] + " kL");
    o.require(total[3] == "913", "total MWh " + total[3] + " != 913");
    o.require(total[5] == "312", "total CO2 " + total[5] + " != 312");
    o.require(total[7] == "1921", "total water " + total[7] + " != 1921");
  }
  o.require(elapsed < 1.0, "runtime " + num(elapsed) + " s");
  o.note(std::to_string(rows) + " Jupiter rows, " + num(elapsed * 1000, 3) + " ms");
  return o;
}

Outcome development_groups() {
  Outcome o;
  const auto campaign = ledger::build_campaign(ledger::load_ledger(kLedger), builtin());
  ledger::AggregateOptions computed;
  computed.basis = ledger::ImpactBasis::computed;
  auto check = [&](const std::string& group, double mwh, const std::string& cluster, bool folded, double co2_t,
                   double water_kl) {
    const auto it = std::find_if(campaign.dev_groups.begin(), campaign.dev_groups.end(),
                                 [&](const ledger::DevGroup& g) { return g.name == group; });
    if (it == campaign.dev_groups.end()) {
      o.require(false, "group " + group + " missing");
      return;
    }
    const auto& r = it->runs.front();
    o.require(r.energy_mwh == mwh, group + " energy " + num(*r.energy_mwh));
    o.require(r.cluster == cluster && r.pue_folded == folded, group + " facility/convention");
    const auto row = ledger::aggregate(*it, builtin(), computed);
    const double co2 = *row.co2_kg / 1000.0, water = *row.water_l / 1000.0;
    o.note(group + " " + num(co2, 4) + " t / " + num(water, 4) + " kL");
    o.require(within_one_digit(co2, co2_t), group + " CO2 " + num(co2) + " vs " + num(co2_t));
    o.require(within_one_digit(water, water_kl), group + " water " + num(water) + " vs " + num(water_kl));
  };
  check("7B", 196, "jupiter", true, 65, 252);
  check("13B", 116, "augusta", false, 46, 402);
  const auto& a = builtin().facility("augusta");
  o.require(a.pue == 1.12 && a.carbon_intensity == 0.351 && std::abs(a.wue_total() - 3.10) < 1e-12,
            "augusta preset factors");
  return o;
}

Outcome embodied_chain() {
  Outcome o;
  const auto& hw = builtin().hardware_profile("h100");
  const auto per = impact::embodied_per_gpu(hw);
  const double server_part = hw.server_embodied_co2 / hw.gpus_per_server;
  const double mineral_part = per.co2_kg - server_part;
  o.require(server_part == 462.5, "server share " + num(server_part));
  o.require(rounding::round_half_up(mineral_part, 3).str() == "0.013", "rare-earth CO2 " + num(mineral_part));
  o.require(rounding::round_half_up(per.water_l, 1).str() == "102.6", "water per GPU " + num(per.water_l));
  const auto rate = impact::amortized_rate(hw);
  o.require(rounding::round_half_up(rate.co2_kg_per_gpu_hour, 3).str() == "0.013",
            "CO2 rate " + num(rate.co2_kg_per_gpu_hour));
  o.require(rounding::round_half_up(rate.water_l_per_gpu_hour, 3).str() == "0.003",
            "water rate " + num(rate.water_l_per_gpu_hour));
  const auto total = impact::embodied_total(1.65e6, hw);
  const double t = total.co2_kg() / 1000.0, kl = total.water_l() / 1000.0;
  o.require(std::abs(t - 21.8) / 21.8 <= 0.02, "embodied CO2 " + num(t) + " t");
  o.require(std::abs(kl - 4.83) / 4.83 <= 0.02, "embodied water " + num(kl) + " kL");
  o.note("per GPU " + num(per.co2_kg) + " kg / " + num(per.water_l) + " L; 1.65M GPU-h -> " + num(t, 4) + " t, " +
         num(kl, 3) + " kL");
  return o;
}

Outcome grand_total() {
  Outcome o;
  const auto campaign = ledger::build_campaign(ledger::load_ledger(kLedger), builtin());
  const auto ci = ledger::aggregate(campaign, builtin());
  const double t = ci.grand_total.co2_kg() / 1000.0, kl = ci.grand_total.water_l() / 1000.0;
  o.require(within_one_digit(t, 493), "grand total CO2 " + num(t) + " t");
  o.require(within_one_digit(kl, 2769), "grand total water " + num(kl) + " kL");
  const auto csv =
      ledger::render_report(ci, builtin(), {profiles::default_equivalencies(), {}}, ledger::ReportStyle::csv);
  const auto row = csv_row(csv, "summary", "Total");
  o.require(row.size() >= 8, "no summary total row");
  if (row.size() >= 8) o.note("computed " + num(t, 5) + " t / " + num(kl, 5) + " kL; printed " + row[5] + " / " + row[7]);
  return o;
}

double parse_short_scale(const std::string& s) {
  std::istringstream in(s);
  double v = 0.0;
  std::string word;
  in >> v >> word;
  if (word == "tril.") return v * 1e12;
  if (word == "bil.") return v * 1e9;
  if (word == "mil.") return v * 1e6;
  if (word == "k") return v * 1e3;
  return v;
}

Outcome breakeven_suite() {
  Outcome o;
  int rows = 0;
  const double elapsed = seconds([&] {
    const auto ms = inference::load_measurements(kData + "/inference/benchmarks.csv");
    std::ifstream in(kData + "/inference/breakeven_published.csv");
    std::string line;
    std::getline(in, line);
    const auto& facility = builtin().facility("jupiter");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv(line);
      const std::string model = f.at(0);
      const auto rate = inference::parse_rate(f.at(1));
      const double training_t = std::stod(f.at(2));
      const std::string printed = f.at(3);
      const auto m = std::find_if(ms.begin(), ms.end(), [&](const inference::InferenceMeasurement& x) {
        return x.model_name == model && x.request_rate == rate;
      });
      if (m == ms.end()) {
        o.require(false, model + " @ " + f[1] + ": no measurement");
        continue;
      }
      ++rows;
      const auto r = inference::breakeven_for(*m, training_t, facility, impact::PueConvention::folded);
      const std::string shown = inference::format_count(r.breakeven_count);
      const double expected = parse_short_scale(printed);
      const double got = r.breakeven_count ? rounding::round_significant(static_cast<double>(*r.breakeven_count), 3)
                                           : 0.0;
      o.require(std::abs(got - expected) <= 0.01 * expected,
                model + " @ " + f[1] + ": " + shown + " vs printed " + printed);
    }
  });
  o.require(elapsed < 1.0, "runtime " + num(elapsed) + " s");
  o.note(std::to_string(rows) + " rows, " + num(elapsed * 1000, 3) + " ms");
  return o;
}

Outcome audit_findings() {
  Outcome o;
  const auto campaign = ledger::build_campaign(ledger::load_ledger(kLedger), builtin());
  const auto findings = ledger::audit(campaign, builtin());
  auto flagged = [&](const std::string& id, const std::string& check) {
    return std::find_if(findings.begin(), findings.end(), [&](const ledger::Finding& f) {
      return f.row_id == id && f.check == check;
    });
  };
  const auto wue = flagged("final-12-olmo-2-13b", "implied_wue");
  o.require(wue != findings.end(), "OLMo 2 13B water not flagged");
  if (wue != findings.end()) {
    o.note("13B implied WUE " + num(wue->observed, 4) + " vs " + num(wue->expected, 4));
    o.require(std::abs(wue->observed - 3.878) < 0.001 && std::abs(wue->expected - 3.472) < 0.001,
              "13B implied WUE " + num(wue->observed) + " vs " + num(wue->expected));
  }
  for (const char* check : {"implied_ci", "implied_wue"}) {
    o.require(flagged("final-11-olmo-2-7b", check) == findings.end(), std::string("OLMo 2 7B flagged: ") + check);
  }

  std::vector<ledger::GroupRow> listed;
  for (const auto& g : campaign.dev_groups) {
    if (!g.inferred) listed.push_back(ledger::published_row(g));
  }
  const auto rec = ledger::reconcile_groups(*campaign.dev_totals, listed);
  o.require(rec.inferred.has_value(), "no inferred group");
  const auto& r = rec.residual;
  o.require(r.gpu_hours && std::abs(*r.gpu_hours - 164000) < 0.5, "residual GPU hours");
  o.require(r.energy_mwh && std::abs(*r.energy_mwh - 109) < 1e-9, "residual MWh");
  o.require(r.runs && *r.runs == 227, "residual runs");
  o.note("residual " + num(r.gpu_hours.value_or(0)) + " GPU-h, " + num(r.energy_mwh.value_or(0)) + " MWh, " +
         std::to_string(r.runs.value_or(0)) + " runs");
  return o;
}

Outcome telemetry_properties() {
  Outcome o;
  std::mt19937_64 rng(0x5eed);
  telemetry::IntegrationOptions opts;
  opts.max_gap_ms = std::numeric_limits<std::int64_t>::max() / 4;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto curve = oracle::random_curve(rng, 30 + k % 50);
    const auto samples = oracle::sample_curve(curve, "gpu" + std::to_string(k % 8), rng, k % 4);
    const double exact = oracle::analytic_kwh(curve);
    const double got = telemetry::integrate_energy(telemetry::make_trace(samples), opts).kwh;
    worst = std::max(worst, std::abs(got - exact) / exact);
  }
  o.require(worst <= 1e-6, "worst relative error " + num(worst));
  o.note("100 traces, worst relative error " + num(worst, 3));

  const auto fx = oracle::checkpoint_dips(2025);
  const auto r = telemetry::detect_fluctuations(telemetry::make_trace(fx.samples));
  o.require(r.event_count == static_cast<std::size_t>(fx.expected_events),
            std::to_string(r.event_count) + " events vs " + std::to_string(fx.expected_events) + " constructed");
  o.require(r.duty_cycle_active >= fx.duty_lo && r.duty_cycle_active <= fx.duty_hi,
            "duty cycle " + num(r.duty_cycle_active) + " outside [" + num(fx.duty_lo) + ", " + num(fx.duty_hi) + "]");
  o.note(std::to_string(r.event_count) + " dips, duty cycle " + num(r.duty_cycle_active, 4));
  return o;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

Outcome simulator_properties() {
  Outcome o;
  inference::WorkloadScenario s;  // rate 1, 2400 requests, seed 0
  s.coefficients = {4.12003e-09, 4.12003e-09, 0.000146506};
  const auto a = inference::simulate_requests(s);
  const auto b = inference::simulate_requests(s);
  bool identical = same_bits(a.measurement.energy_kwh, b.measurement.energy_kwh) &&
                   same_bits(a.measurement.makespan_s, b.measurement.makespan_s);
  for (std::size_t i = 0; identical && i < a.requests.size(); ++i) {
    identical = same_bits(a.requests[i].arrival_s, b.requests[i].arrival_s) &&
                same_bits(a.requests[i].finish_s, b.requests[i].finish_s) &&
                a.requests[i].input_tokens == b.requests[i].input_tokens &&
                a.requests[i].output_tokens == b.requests[i].output_tokens;
  }
  o.require(identical, "repeat run differs");

  const double per100 = a.measurement.makespan_s / (static_cast<double>(s.n_requests) / 100.0);
  o.require(per100 >= 100.0 && per100 <= 102.0, "rate-1 makespan " + num(per100, 4) + " s per 100 requests (seed 0)");
  o.note("seed 0: " + num(per100, 4) + " s per 100 requests");

  const auto xs = inference::sample_interarrivals(1.0, 10'000, s.seed);
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double se = std::sqrt(var / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  o.require(std::abs(mean - 1.0) < 3.0 * se, "interarrival mean " + num(mean) + " (se " + num(se) + ")");

  const inference::EnergyCoefficients truth{3.1e-9, 7.4e-9, 1.2e-4};
  auto synth = [&](std::optional<double> rate, double in, double out, double makespan) {
    inference::InferenceMeasurement m;
    m.model_name = "synthetic";
    m.request_rate = rate;
    m.n_requests = 2400;
    m.mean_input_tokens = in;
    m.mean_output_tokens = out;
    m.makespan_s = makespan;
    m.energy_kwh = inference::predict_energy(truth, m);
    return m;
  };
  const auto fit = inference::fit_energy_model({synth(std::nullopt, 240, 200, 90), synth(8.0, 230, 215, 310),
                                                synth(1.0, 250, 190, 2410), synth(4.0, 225, 230, 620)});
  auto rel = [](double x, double y) { return std::abs(x - y) / y; };
  const double err = std::max({rel(fit.coefficients.per_input_token_kwh, truth.per_input_token_kwh),
                               rel(fit.coefficients.per_output_token_kwh, truth.per_output_token_kwh),
                               rel(fit.coefficients.per_active_second_kwh, truth.per_active_second_kwh)});
  o.require(err <= 1e-6, "fit relative error " + num(err));
  o.note("interarrival mean " + num(mean, 5) + ", fit error " + num(err, 2));
  return o;
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {"final-run table (Jupiter, PUE folded)", final_run_table},
      {"development groups 7B and 13B", development_groups},
      {"embodied chain (H100)", embodied_chain},
      {"campaign grand total", grand_total},
      {"inference breakeven counts", breakeven_suite},
      {"audit findings and inferred group", audit_findings},
      {"telemetry integration and dip detection", telemetry_properties},
      {"workload simulator and energy fit", simulator_properties},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i) + 1 != only) continue;
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << " - " << criteria[i].name;
    for (const auto& n : o.notes) std::cout << "; " << n;
    std::cout << '\n';
    for (const auto& f : o.failures) std::cout << "    " << f << '\n';
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
