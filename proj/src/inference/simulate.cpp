#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <queue>

#include "mlfp/inference.hpp"

namespace mlfp::inference {

namespace {

// Independent streams so that changing the length model never perturbs the
// arrival sequence, and vice versa.
constexpr std::uint64_t kArrivalStream = 1;
constexpr std::uint64_t kLengthStream = 2;

std::int64_t sample_length(const LengthDistribution& d, double z) {
  const double mu = std::log(d.mean) - 0.5 * d.dispersion * d.dispersion;
  return std::max<std::int64_t>(1, std::llround(std::exp(mu + d.dispersion * z)));
}

double parse_number(const profiles::ConfigSection& s, const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw FormatError("scenario '" + s.name + "': " + key + " = '" + text + "' is not a number");
  }
  return v;
}

std::int64_t parse_integer(const profiles::ConfigSection& s, const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw FormatError("scenario '" + s.name + "': " + key + " = '" + text + "' is not an integer");
  }
  return v;
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  engine_.seed(seq);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::exponential(double rate) { return -std::log1p(-uniform()) / rate; }

double Rng::normal() {
  if (spare_normal_) {
    const double z = *spare_normal_;
    spare_normal_.reset();
    return z;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

std::vector<double> sample_interarrivals(double rate, std::size_t n, std::uint64_t seed) {
  if (!(rate > 0.0)) throw ArgumentError("interarrival rate must be positive");
  Rng rng(seed, kArrivalStream);
  std::vector<double> out(n);
  for (auto& x : out) x = rng.exponential(rate);
  return out;
}

void validate(const WorkloadScenario& s) {
  const std::string who = "scenario '" + s.model_name + "'";
  if (s.n_requests <= 0) throw ValidationError(who + ": n_requests must be positive");
  if (s.request_rate && !(*s.request_rate > 0.0)) throw ValidationError(who + ": request_rate must be positive");
  for (const auto* d : {&s.input_len, &s.output_len}) {
    if (!(d->mean >= 1.0)) throw ValidationError(who + ": token length means must be at least 1");
    if (!(d->dispersion >= 0.0)) throw ValidationError(who + ": dispersion must be non-negative");
  }
  const auto& c = s.coefficients;
  if (!(c.per_input_token_kwh >= 0.0) || !(c.per_output_token_kwh >= 0.0) || !(c.per_active_second_kwh >= 0.0)) {
    throw ValidationError(who + ": energy coefficients must be non-negative");
  }
  const auto& v = s.server;
  if (!(v.per_request_tokens_per_s > 0.0) || !(v.peak_tokens_per_s > 0.0) || v.max_concurrency < 1 ||
      !(v.prefill_speedup > 0.0)) {
    throw ValidationError(who + ": server throughputs, concurrency and prefill speedup must be positive");
  }
}

WorkloadScenario scenario_from_config(const profiles::ConfigSection& section) {
  WorkloadScenario s;
  s.model_name = section.name;
  for (const auto& [key, value] : section.entries) {
    if (key == "model_name") {
      s.model_name = value;
    } else if (key == "request_rate") {
      s.request_rate = parse_rate(value);
    } else if (key == "n_requests") {
      s.n_requests = parse_integer(section, key, value);
    } else if (key == "seed") {
      s.seed = static_cast<std::uint64_t>(parse_integer(section, key, value));
    } else if (key == "input_mean") {
      s.input_len.mean = parse_number(section, key, value);
    } else if (key == "input_dispersion") {
      s.input_len.dispersion = parse_number(section, key, value);
    } else if (key == "output_mean") {
      s.output_len.mean = parse_number(section, key, value);
    } else if (key == "output_dispersion") {
      s.output_len.dispersion = parse_number(section, key, value);
    } else if (key == "per_input_token_kwh") {
      s.coefficients.per_input_token_kwh = parse_number(section, key, value);
    } else if (key == "per_output_token_kwh") {
      s.coefficients.per_output_token_kwh = parse_number(section, key, value);
    } else if (key == "per_active_second_kwh") {
      s.coefficients.per_active_second_kwh = parse_number(section, key, value);
    } else if (key == "per_request_tokens_per_s") {
      s.server.per_request_tokens_per_s = parse_number(section, key, value);
    } else if (key == "peak_tokens_per_s") {
      s.server.peak_tokens_per_s = parse_number(section, key, value);
    } else if (key == "max_concurrency") {
      s.server.max_concurrency = parse_integer(section, key, value);
    } else if (key == "prefill_speedup") {
      s.server.prefill_speedup = parse_number(section, key, value);
    } else {
      throw FormatError("scenario '" + section.name + "': unknown key '" + key + "'");
    }
  }
  validate(s);
  return s;
}

SimulationResult simulate_requests(const WorkloadScenario& s) {
  validate(s);
  const auto n = static_cast<std::size_t>(s.n_requests);
  SimulationResult out;
  out.requests.resize(n);

  Rng arrivals(s.seed, kArrivalStream);
  Rng lengths(s.seed, kLengthStream);
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = out.requests[i];
    // The first request goes out immediately; later ones after an
    // exponential gap.
    if (s.request_rate && i > 0) t += arrivals.exponential(*s.request_rate);
    r.arrival_s = s.request_rate ? t : 0.0;
    r.input_tokens = sample_length(s.input_len, lengths.normal());
    r.output_tokens = sample_length(s.output_len, lengths.normal());
  }

  // Processor sharing in virtual time: every active request receives the
  // same service rate, so a request admitted at virtual time V finishes when
  // the virtual clock reaches V + work.
  const auto& server = s.server;
  using Entry = std::pair<double, std::size_t>;  // virtual finish, request
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> active;
  std::deque<std::size_t> waiting;
  double now = 0.0, virtual_now = 0.0;
  std::size_t next_arrival = 0;
  const auto capacity = static_cast<std::size_t>(server.max_concurrency);

  auto work = [&](std::size_t i) {
    const auto& r = out.requests[i];
    return static_cast<double>(r.output_tokens) +
           static_cast<double>(r.input_tokens) / server.prefill_speedup;
  };
  auto admit = [&](std::size_t i) { active.emplace(virtual_now + work(i), i); };
  auto rate = [&]() {
    const double k = static_cast<double>(active.size());
    return std::min(server.per_request_tokens_per_s, server.peak_tokens_per_s / k);
  };

  std::size_t done = 0;
  while (done < n) {
    const double arrival = next_arrival < n ? out.requests[next_arrival].arrival_s
                                            : std::numeric_limits<double>::infinity();
    double completion = std::numeric_limits<double>::infinity();
    if (!active.empty()) completion = now + (active.top().first - virtual_now) / rate();

    if (arrival <= completion) {
      if (!active.empty()) virtual_now += (arrival - now) * rate();
      now = arrival;
      if (active.size() < capacity) {
        admit(next_arrival);
      } else {
        waiting.push_back(next_arrival);
      }
      ++next_arrival;
    } else {
      virtual_now = active.top().first;
      now = completion;
      out.requests[active.top().second].finish_s = now;
      active.pop();
      ++done;
      if (!waiting.empty()) {
        admit(waiting.front());
        waiting.pop_front();
      }
    }
  }

  double makespan = 0.0, total_in = 0.0, total_out = 0.0;
  for (const auto& r : out.requests) {
    makespan = std::max(makespan, r.finish_s);
    total_in += static_cast<double>(r.input_tokens);
    total_out += static_cast<double>(r.output_tokens);
  }
  auto& m = out.measurement;
  m.model_name = s.model_name;
  m.request_rate = s.request_rate;
  m.n_requests = s.n_requests;
  m.makespan_s = makespan;
  m.mean_input_tokens = total_in / static_cast<double>(n);
  m.mean_output_tokens = total_out / static_cast<double>(n);
  m.energy_kwh = predict_energy(s.coefficients, total_in, total_out, makespan);
  return out;
}

InferenceMeasurement simulate_workload(const WorkloadScenario& s) { return simulate_requests(s).measurement; }

}  // namespace mlfp::inference
