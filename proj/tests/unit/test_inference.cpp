#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "mlfp/inference.hpp"

using namespace mlfp;
using namespace mlfp::inference;

namespace {

const std::string kData = MLFP_DATA_DIR;

const profiles::FacilityProfile& jupiter() { return profiles::builtin_profiles().facility("jupiter"); }

InferenceMeasurement measurement(std::optional<double> rate, double in_mean, double out_mean, double makespan,
                                 const EnergyCoefficients& c, std::int64_t n = 2400) {
  InferenceMeasurement m;
  m.model_name = "synthetic";
  m.request_rate = rate;
  m.n_requests = n;
  m.mean_input_tokens = in_mean;
  m.mean_output_tokens = out_mean;
  m.makespan_s = makespan;
  m.energy_kwh = predict_energy(c, m);
  return m;
}

WorkloadScenario fitted_scenario(std::optional<double> rate) {
  WorkloadScenario s;
  s.request_rate = rate;
  s.coefficients = {4.12003e-09, 4.12003e-09, 0.000146506};
  return s;
}

}  // namespace

TEST_CASE("rate labels and parsing") {
  CHECK(rate_label(std::nullopt) == "batch");
  CHECK(rate_label(8.0) == "8");
  CHECK(rate_label(0.5) == "0.5");
  CHECK_FALSE(parse_rate("batch").has_value());
  CHECK_FALSE(parse_rate("inf").has_value());
  CHECK_FALSE(parse_rate("∞").has_value());
  CHECK(parse_rate("2.5") == 2.5);
  CHECK_THROWS_AS(parse_rate("0"), ValidationError);
  CHECK_THROWS_AS(parse_rate("fast"), ValidationError);
}

TEST_CASE("measurement CSV round trip") {
  const auto ms = load_measurements(kData + "/inference/benchmarks.csv");
  CHECK(ms.size() >= 30);
  std::ostringstream out;
  write_measurements(out, ms);
  std::istringstream in(out.str());
  const auto back = read_measurements(in);
  REQUIRE(back.size() == ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    CHECK(back[i].model_name == ms[i].model_name);
    CHECK(back[i].request_rate == ms[i].request_rate);
    CHECK(back[i].energy_kwh == ms[i].energy_kwh);
    CHECK(back[i].makespan_s == ms[i].makespan_s);
  }
}

TEST_CASE("measurement CSV errors") {
  std::istringstream missing("model_name,request_rate\nx,1\n");
  CHECK_THROWS_AS(read_measurements(missing), FormatError);
  std::istringstream zero(
      "model_name,request_rate,n_requests,energy_kwh,makespan_s,mean_input_tokens,mean_output_tokens\n"
      "x,1,0,1,1,1,1\n");
  CHECK_THROWS_AS(read_measurements(zero), ValidationError);
  CHECK_THROWS_AS(load_measurements("/nonexistent.csv"), IoError);
}

TEST_CASE("per-request impact") {
  auto m = load_measurements(kData + "/inference/olmo2_7b_rate1.csv").at(0);
  const auto per = per_request_impact(m, jupiter(), impact::PueConvention::folded);
  CHECK(per.co2_g * 2400 == doctest::Approx(118.9).epsilon(0.001));
  CHECK(per.co2_g == doctest::Approx(0.04954).epsilon(0.001));
  // per request x n reconstructs the scenario totals.
  const auto total = impact::operational_impact(impact::EnergyQuantity::with(m.energy_kwh, impact::PueConvention::folded),
                                                jupiter());
  CHECK(per.co2_g * m.n_requests / 1000.0 == doctest::Approx(total.operational.co2_kg).epsilon(1e-9));
  CHECK(per.water_l * m.n_requests == doctest::Approx(total.operational.water_l).epsilon(1e-9));
  m.energy_kwh = 0.0;
  CHECK(per_request_impact(m, jupiter(), impact::PueConvention::folded).co2_g == 0.0);
  m.n_requests = 0;
  CHECK_THROWS_AS(per_request_impact(m, jupiter(), impact::PueConvention::folded), ValidationError);
}

TEST_CASE("breakeven") {
  CHECK(format_count(breakeven(52, 0.358 * 0.332 * 1000 / 2400)) == "1.05 bil.");
  CHECK(format_count(breakeven(10, 12.6 / 2400)) == "1.90 bil.");  // 1904761905
  CHECK(breakeven(1, 1.0) == 1'000'000);
  CHECK(breakeven(1, 3.0) == 333'334);  // ceiling
  CHECK_FALSE(breakeven(1, 0.0).has_value());
  CHECK_FALSE(breakeven(1, -1.0).has_value());
  CHECK(format_count(std::nullopt) == "not computable");
}

TEST_CASE("breakeven is monotone in both arguments") {
  std::int64_t prev = std::numeric_limits<std::int64_t>::max();
  for (double g = 0.01; g < 1.0; g *= 1.7) {
    const auto b = *breakeven(50, g);
    CHECK(b < prev);
    prev = b;
  }
  std::int64_t last = 0;
  for (double t = 1; t < 500; t *= 2.3) {
    const auto b = *breakeven(t, 0.05);
    CHECK(b > last);
    last = b;
  }
}

TEST_CASE("breakeven_for labels the training basis") {
  const auto m = load_measurements(kData + "/inference/olmo2_7b_rate1.csv").at(0);
  const auto r = breakeven_for(m, 52.0, jupiter(), impact::PueConvention::folded, "final run");
  CHECK(r.training_basis == "final run");
  CHECK(r.scenario == "1");
  CHECK(*r.breakeven_count == 1'050'010'097);
  const auto unknown = breakeven_for(m, std::nullopt, jupiter(), impact::PueConvention::folded);
  CHECK_FALSE(unknown.breakeven_count.has_value());
  CHECK(unknown.training_basis == "unknown");
}

TEST_CASE("fit recovers synthetic coefficients") {
  const EnergyCoefficients truth{3.1e-9, 7.4e-9, 1.2e-4};
  const std::vector<InferenceMeasurement> ms{
      measurement(std::nullopt, 240, 200, 90, truth), measurement(8.0, 230, 215, 310, truth),
      measurement(1.0, 250, 190, 2410, truth), measurement(4.0, 225, 230, 620, truth)};
  const auto fit = fit_energy_model(ms);
  CHECK_FALSE(fit.tokens_pooled);
  CHECK(fit.coefficients.per_input_token_kwh == doctest::Approx(truth.per_input_token_kwh).epsilon(1e-6));
  CHECK(fit.coefficients.per_output_token_kwh == doctest::Approx(truth.per_output_token_kwh).epsilon(1e-6));
  CHECK(fit.coefficients.per_active_second_kwh == doctest::Approx(truth.per_active_second_kwh).epsilon(1e-6));
  CHECK(fit.max_relative_residual < 1e-9);
}

TEST_CASE("fit pools token coefficients when token totals are proportional") {
  const EnergyCoefficients truth{5e-9, 5e-9, 2e-4};
  const std::vector<InferenceMeasurement> ms{measurement(std::nullopt, 237, 210, 90, truth),
                                             measurement(8.0, 237, 210, 300, truth),
                                             measurement(1.0, 237, 210, 2400, truth)};
  const auto fit = fit_energy_model(ms);
  CHECK(fit.tokens_pooled);
  CHECK(fit.coefficients.per_input_token_kwh == doctest::Approx(5e-9).epsilon(1e-6));
  CHECK(fit.coefficients.per_active_second_kwh == doctest::Approx(2e-4).epsilon(1e-6));
}

TEST_CASE("fit errors") {
  const EnergyCoefficients truth{5e-9, 5e-9, 2e-4};
  const auto m = measurement(1.0, 237, 210, 2400, truth);
  CHECK_THROWS_AS(fit_energy_model({m}), ValidationError);
  CHECK_THROWS_AS(fit_energy_model({m, m}), ValidationError);
  // Makespan proportional to the token totals: nothing separates the terms.
  auto a = measurement(1.0, 200, 200, 1000, truth);
  auto b = measurement(2.0, 400, 400, 2000, truth);
  try {
    fit_energy_model({a, b});
    FAIL("expected rank deficiency");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("makespan") != std::string::npos);
  }
}

TEST_CASE("fit coefficients are non-negative") {
  // Energy falling with makespan would need a negative per-second term.
  std::vector<InferenceMeasurement> ms{measurement(1.0, 237, 210, 2400, {1e-8, 1e-8, 0}),
                                       measurement(8.0, 237, 210, 300, {1e-8, 1e-8, 0})};
  ms[0].energy_kwh *= 0.8;
  const auto fit = fit_energy_model(ms);
  CHECK(fit.coefficients.per_input_token_kwh >= 0.0);
  CHECK(fit.coefficients.per_active_second_kwh >= 0.0);
}

TEST_CASE("fit over the OLMo 2 7B rows reproduces them within 15%") {
  std::vector<InferenceMeasurement> rows;
  for (const auto& m : load_measurements(kData + "/inference/benchmarks.csv")) {
    if (m.model_name == "OLMo 2 7B") rows.push_back(m);
  }
  REQUIRE(rows.size() == 3);
  const auto fit = fit_energy_model(rows);
  CHECK(fit.max_relative_residual < 0.15);
}

TEST_CASE("rng: uniform range and determinism") {
  Rng a(7, 1), b(7, 1), c(7, 2);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(x == b.uniform());
    differs = differs || x != c.uniform();
  }
  CHECK(differs);
}

TEST_CASE("interarrival mean within 3 standard errors of 1/rate") {
  for (double rate : {1.0, 8.0, 0.25}) {
    const auto xs = sample_interarrivals(rate, 10'000, 3);
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double se = std::sqrt(var / (xs.size() - 1) / xs.size());
    CHECK(std::abs(mean - 1.0 / rate) < 3.0 * se);
  }
}

TEST_CASE("simulation is deterministic per seed") {
  auto s = fitted_scenario(1.0);
  const auto a = simulate_requests(s);
  const auto b = simulate_requests(s);
  CHECK(a.measurement.makespan_s == b.measurement.makespan_s);
  CHECK(a.measurement.energy_kwh == b.measurement.energy_kwh);
  for (std::size_t i = 0; i < a.requests.size(); ++i) {
    CHECK(a.requests[i].arrival_s == b.requests[i].arrival_s);
    CHECK(a.requests[i].finish_s == b.requests[i].finish_s);
  }
  s.seed = 1;
  const auto c = simulate_requests(s);
  CHECK(c.requests[1].arrival_s != a.requests[1].arrival_s);
}

TEST_CASE("batch with zero per-second coefficient is exactly the token terms") {
  WorkloadScenario s;
  s.request_rate = std::nullopt;
  s.coefficients = {3e-9, 7e-9, 0.0};
  const auto r = simulate_requests(s);
  double in = 0.0, out = 0.0;
  for (const auto& q : r.requests) {
    CHECK(q.arrival_s == 0.0);
    in += static_cast<double>(q.input_tokens);
    out += static_cast<double>(q.output_tokens);
  }
  CHECK(r.measurement.energy_kwh == 3e-9 * in + 7e-9 * out);
}

TEST_CASE("requests finish after they arrive and lengths are at least one token") {
  auto s = fitted_scenario(8.0);
  s.input_len.dispersion = 2.0;
  const auto r = simulate_requests(s);
  for (const auto& q : r.requests) {
    CHECK(q.finish_s > q.arrival_s);
    CHECK(q.input_tokens >= 1);
    CHECK(q.output_tokens >= 1);
  }
}

TEST_CASE("simulated energy is non-decreasing in request count and coefficients") {
  double prev = 0.0;
  for (std::int64_t n : {100, 200, 400, 800, 1600}) {
    auto s = fitted_scenario(1.0);
    s.n_requests = n;
    const double e = simulate_workload(s).energy_kwh;
    CHECK(e >= prev);
    prev = e;
  }
  auto s = fitted_scenario(8.0);
  const double base = simulate_workload(s).energy_kwh;
  s.coefficients.per_output_token_kwh *= 2;
  CHECK(simulate_workload(s).energy_kwh >= base);
  s.coefficients.per_active_second_kwh *= 2;
  CHECK(simulate_workload(s).energy_kwh >= base);
}

TEST_CASE("energy ordering batch <= rate 8 <= rate 1 under fitted coefficients") {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    auto batch = fitted_scenario(std::nullopt), r8 = fitted_scenario(8.0), r1 = fitted_scenario(1.0);
    batch.seed = r8.seed = r1.seed = seed;
    const double eb = simulate_workload(batch).energy_kwh;
    const double e8 = simulate_workload(r8).energy_kwh;
    const double e1 = simulate_workload(r1).energy_kwh;
    CHECK(eb <= e8);
    CHECK(e8 <= e1);
  }
}

TEST_CASE("scenario config") {
  const auto set = profiles::load_profiles(kData + "/profiles/scenarios.conf");
  const auto s = scenario_from_config(set.scenario("olmo2-7b-batch"));
  CHECK_FALSE(s.request_rate.has_value());
  CHECK(s.model_name == "OLMo 2 7B");
  CHECK(s.coefficients.per_active_second_kwh == 0.000146506);
  profiles::ConfigSection bad{"scenario", "x", {{"warp_factor", "9"}}, 1};
  CHECK_THROWS_AS(scenario_from_config(bad), FormatError);
  profiles::ConfigSection neg{"scenario", "x", {{"n_requests", "0"}}, 1};
  CHECK_THROWS_AS(scenario_from_config(neg), ValidationError);
}
