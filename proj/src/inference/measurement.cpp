#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

#include "mlfp/inference.hpp"
#include "mlfp/rounding.hpp"

namespace mlfp::inference {

namespace {

const char* const kColumns[] = {"model_name", "request_rate", "n_requests", "energy_kwh",
                                "makespan_s", "mean_input_tokens", "mean_output_tokens"};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw FormatError(what + ": '" + s + "' is not a number");
  }
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError(what + ": '" + s + "' is not an integer");
  return v;
}

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void validate(const InferenceMeasurement& m) {
  const std::string who = "measurement '" + m.model_name + "'";
  if (m.n_requests <= 0) throw ValidationError(who + ": n_requests must be positive");
  if (!(m.energy_kwh >= 0.0)) throw ValidationError(who + ": energy_kwh must be non-negative");
  if (!(m.makespan_s > 0.0)) throw ValidationError(who + ": makespan_s must be positive");
  if (!(m.mean_input_tokens >= 0.0) || !(m.mean_output_tokens >= 0.0)) {
    throw ValidationError(who + ": token means must be non-negative");
  }
  if (m.request_rate && !(*m.request_rate > 0.0)) throw ValidationError(who + ": request_rate must be positive");
}

std::string rate_label(const std::optional<double>& rate) { return rate ? shortest(*rate) : "batch"; }

std::optional<double> parse_rate(const std::string& text) {
  if (text == "batch" || text == "inf" || text == "infinity" || text == "∞") return std::nullopt;
  const double v = parse_double(text, "request_rate");
  if (!(v > 0.0)) throw ValidationError("request_rate must be positive or 'batch'");
  return v;
}

std::vector<InferenceMeasurement> read_measurements(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> column;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    const auto fields = split_csv(line);
    for (std::size_t i = 0; i < fields.size(); ++i) column.emplace(fields[i], i);
    break;
  }
  if (column.empty()) throw FormatError(source + ": empty measurement file");
  for (const char* c : kColumns) {
    if (!column.contains(c)) throw FormatError(source + ": missing column '" + std::string(c) + "'");
  }

  std::vector<InferenceMeasurement> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    const auto fields = split_csv(line);
    const std::string at = source + ":" + std::to_string(line_no);
    auto get = [&](const char* name) -> const std::string& {
      const std::size_t i = column.at(name);
      if (i >= fields.size()) throw FormatError(at + ": missing value for '" + std::string(name) + "'");
      return fields[i];
    };
    InferenceMeasurement m;
    try {
      m.model_name = get("model_name");
      m.request_rate = parse_rate(get("request_rate"));
      m.n_requests = parse_int(get("n_requests"), "n_requests");
      m.energy_kwh = parse_double(get("energy_kwh"), "energy_kwh");
      m.makespan_s = parse_double(get("makespan_s"), "makespan_s");
      m.mean_input_tokens = parse_double(get("mean_input_tokens"), "mean_input_tokens");
      m.mean_output_tokens = parse_double(get("mean_output_tokens"), "mean_output_tokens");
      validate(m);
    } catch (const FormatError& e) {
      throw FormatError(at + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(at + ": " + e.what());
    }
    out.push_back(std::move(m));
  }
  if (in.bad()) throw IoError("read error in " + source);
  return out;
}

std::vector<InferenceMeasurement> load_measurements(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open measurements '" + path + "'");
  return read_measurements(in, path);
}

void write_measurements(std::ostream& out, const std::vector<InferenceMeasurement>& ms) {
  out << "model_name,request_rate,n_requests,energy_kwh,makespan_s,mean_input_tokens,mean_output_tokens\n";
  for (const auto& m : ms) {
    const bool quote = m.model_name.find_first_of(",\"") != std::string::npos;
    std::string name = m.model_name;
    if (quote) {
      std::string q = "\"";
      for (char c : name) {
        if (c == '"') q += '"';
        q += c;
      }
      name = q + '"';
    }
    out << name << ',' << rate_label(m.request_rate) << ',' << m.n_requests << ',' << shortest(m.energy_kwh) << ','
        << shortest(m.makespan_s) << ',' << shortest(m.mean_input_tokens) << ',' << shortest(m.mean_output_tokens)
        << '\n';
  }
  if (!out) throw IoError("failed to write measurements");
}

PerRequestImpact per_request_impact(const InferenceMeasurement& m, const profiles::FacilityProfile& facility,
                                    impact::PueConvention convention) {
  if (m.n_requests <= 0) throw ValidationError("measurement '" + m.model_name + "': zero requests");
  const auto total = impact::operational_impact(impact::EnergyQuantity::with(m.energy_kwh, convention), facility);
  const double n = static_cast<double>(m.n_requests);
  return {m.energy_kwh / n, total.operational.co2_kg * 1000.0 / n, total.operational.water_l / n};
}

std::optional<std::int64_t> breakeven(double training_co2_t, double per_request_co2_g) {
  if (!(per_request_co2_g > 0.0) || !std::isfinite(per_request_co2_g)) return std::nullopt;
  if (!(training_co2_t >= 0.0)) throw ArgumentError("training CO2 must be non-negative");
  const double count = std::ceil(training_co2_t * 1e6 / per_request_co2_g);
  if (count >= static_cast<double>(std::numeric_limits<std::int64_t>::max())) return std::nullopt;
  return static_cast<std::int64_t>(count);
}

BreakevenResult breakeven_for(const InferenceMeasurement& m, std::optional<double> training_co2_t,
                              const profiles::FacilityProfile& facility, impact::PueConvention convention,
                              const std::string& training_basis) {
  const auto per = per_request_impact(m, facility, convention);
  BreakevenResult r;
  r.model_name = m.model_name;
  r.scenario = rate_label(m.request_rate);
  r.training_basis = training_co2_t ? training_basis : "unknown";
  r.per_request_co2_g = per.co2_g;
  r.per_request_water_l = per.water_l;
  if (training_co2_t) r.breakeven_count = breakeven(*training_co2_t, per.co2_g);
  return r;
}

std::string format_count(const std::optional<std::int64_t>& count) {
  if (!count) return "not computable";
  return rounding::short_scale(static_cast<double>(*count));
}

}  // namespace mlfp::inference
