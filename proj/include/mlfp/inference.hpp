#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mlfp/impact.hpp"
#include "mlfp/profiles.hpp"

namespace mlfp::inference {

// Aggregates of one benchmark: n requests served at a fixed Poisson rate, or
// all submitted at once ("batch", no rate).
struct InferenceMeasurement {
  std::string model_name;
  std::optional<double> request_rate;  // requests / s; nullopt = batch
  std::int64_t n_requests = 0;
  double energy_kwh = 0.0;
  double makespan_s = 0.0;
  double mean_input_tokens = 0.0;
  double mean_output_tokens = 0.0;

  bool batch() const { return !request_rate.has_value(); }
  double total_input_tokens() const { return mean_input_tokens * static_cast<double>(n_requests); }
  double total_output_tokens() const { return mean_output_tokens * static_cast<double>(n_requests); }
};

void validate(const InferenceMeasurement& m);

// "batch" for nullopt, otherwise the shortest decimal form of the rate.
std::string rate_label(const std::optional<double>& rate);
// Accepts a positive number, or batch / inf / ∞.
std::optional<double> parse_rate(const std::string& text);

// CSV with header model_name,request_rate,n_requests,energy_kwh,makespan_s,
// mean_input_tokens,mean_output_tokens. Columns may appear in any order;
// extra columns are ignored.
std::vector<InferenceMeasurement> read_measurements(std::istream& in, const std::string& source = "<measurements>");
std::vector<InferenceMeasurement> load_measurements(const std::string& path);
void write_measurements(std::ostream& out, const std::vector<InferenceMeasurement>& ms);

struct PerRequestImpact {
  double energy_kwh = 0.0;
  double co2_g = 0.0;
  double water_l = 0.0;
};

PerRequestImpact per_request_impact(const InferenceMeasurement& m, const profiles::FacilityProfile& facility,
                                    impact::PueConvention convention);

// Smallest request count whose cumulative CO2 reaches the training CO2;
// nullopt when the per-request figure is not positive.
std::optional<std::int64_t> breakeven(double training_co2_t, double per_request_co2_g);

struct BreakevenResult {
  std::string model_name;
  std::string scenario;        // rate label
  std::string training_basis;  // which training figure was used, e.g. "final run"
  double per_request_co2_g = 0.0;
  double per_request_water_l = 0.0;
  std::optional<std::int64_t> breakeven_count;
};

BreakevenResult breakeven_for(const InferenceMeasurement& m, std::optional<double> training_co2_t,
                              const profiles::FacilityProfile& facility, impact::PueConvention convention,
                              const std::string& training_basis = "final run");

// "1.05 bil." style, or "not computable".
std::string format_count(const std::optional<std::int64_t>& count);

// ---------------------------------------------------------------------------
// Energy model: E = a * input tokens + b * output tokens + c * active seconds.

struct EnergyCoefficients {
  double per_input_token_kwh = 0.0;
  double per_output_token_kwh = 0.0;
  double per_active_second_kwh = 0.0;
};

double predict_energy(const EnergyCoefficients& c, double total_input_tokens, double total_output_tokens,
                      double makespan_s);
double predict_energy(const EnergyCoefficients& c, const InferenceMeasurement& m);

struct FitResult {
  EnergyCoefficients coefficients;
  // Input and output token totals were proportional across the measurements,
  // so one shared per-token coefficient was fitted.
  bool tokens_pooled = false;
  std::vector<double> predicted_kwh;
  double max_relative_residual = 0.0;
};

// Non-negative least squares over the three terms. Throws ValidationError
// naming the missing variation when the data cannot identify the model.
FitResult fit_energy_model(const std::vector<InferenceMeasurement>& ms);

// ---------------------------------------------------------------------------
// Workload simulation

// Log-normal token counts: `dispersion` is the sigma of the underlying normal.
struct LengthDistribution {
  double mean = 0.0;
  double dispersion = 0.6;
};

// Processor-sharing server: each active request decodes at up to
// per_request_tokens_per_s, all active requests share peak_tokens_per_s, at
// most max_concurrency requests are active and the rest queue FIFO. Prompt
// tokens cost 1 / prefill_speedup of a generated token.
struct ServerModel {
  double per_request_tokens_per_s = 80.0;
  double peak_tokens_per_s = 6000.0;
  std::int64_t max_concurrency = 256;
  double prefill_speedup = 20.0;
};

struct WorkloadScenario {
  std::string model_name = "simulated";
  std::optional<double> request_rate = 1.0;  // nullopt = batch
  std::int64_t n_requests = 2400;
  std::uint64_t seed = 0;
  LengthDistribution input_len{237.0, 0.6};
  LengthDistribution output_len{210.0, 0.6};
  EnergyCoefficients coefficients;
  ServerModel server;
};

void validate(const WorkloadScenario& s);

// Reads a `[scenario name]` config section. Every key is optional and falls
// back to the WorkloadScenario defaults; unknown keys are rejected.
WorkloadScenario scenario_from_config(const profiles::ConfigSection& section);

// Uniform doubles in [0, 1) from the top 53 bits of a 64-bit Mersenne
// Twister. The standard distributions are implementation-defined, which would
// make simulations differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);
  double uniform();
  double exponential(double rate);
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

std::vector<double> sample_interarrivals(double rate, std::size_t n, std::uint64_t seed);

struct SimulatedRequest {
  double arrival_s = 0.0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double finish_s = 0.0;
};

struct SimulationResult {
  InferenceMeasurement measurement;
  std::vector<SimulatedRequest> requests;
};

SimulationResult simulate_requests(const WorkloadScenario& s);
InferenceMeasurement simulate_workload(const WorkloadScenario& s);

}  // namespace mlfp::inference
