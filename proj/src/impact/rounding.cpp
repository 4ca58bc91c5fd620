#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "mlfp/rounding.hpp"

namespace mlfp::rounding {

namespace {

std::int64_t pow10(int n) {
  std::int64_t p = 1;
  for (int i = 0; i < n; ++i) p *= 10;
  return p;
}

}  // namespace

double Decimal::value() const { return static_cast<double>(units) / static_cast<double>(pow10(decimals)); }

std::string Decimal::str() const {
  const std::int64_t scale = pow10(decimals);
  const std::int64_t whole = std::llabs(units) / scale;
  const std::int64_t frac = std::llabs(units) % scale;
  std::string out = (units < 0 ? "-" : "") + std::to_string(whole);
  if (decimals > 0) {
    std::string f = std::to_string(frac);
    out += '.' + std::string(static_cast<std::size_t>(decimals) - f.size(), '0') + f;
  }
  return out;
}

Decimal round_half_up(double v, int decimals) {
  const double scaled = v * static_cast<double>(pow10(decimals));
  const double mag = std::abs(scaled);
  const double rounded = std::floor(mag + 0.5 + 1e-9 * std::max(1.0, mag));
  return {static_cast<std::int64_t>(v < 0 ? -rounded : rounded), decimals};
}

Decimal rescale(const Decimal& d, int decimals) {
  if (decimals >= d.decimals) return {d.units * pow10(decimals - d.decimals), decimals};
  const double v = d.value();
  return round_half_up(v, decimals);
}

Decimal add(const Decimal& a, const Decimal& b) {
  const int d = std::max(a.decimals, b.decimals);
  return {rescale(a, d).units + rescale(b, d).units, d};
}

Decimal display_round(double v, double one_decimal_below) {
  const Decimal one = round_half_up(v, 1);
  if (one.units % 10 != 0 && std::abs(one.value()) < one_decimal_below) return one;
  return round_half_up(v, 0);
}

double round_significant(double v, int digits) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  const int exponent = static_cast<int>(std::floor(std::log10(std::abs(v))));
  const double scale = std::pow(10.0, exponent - digits + 1);
  return std::floor(v / scale + 0.5) * scale;
}

std::string short_scale(double count) {
  struct Unit {
    double size;
    const char* word;
  };
  static constexpr Unit kUnits[] = {{1e12, "tril."}, {1e9, "bil."}, {1e6, "mil."}, {1e3, "k"}};
  const double r = round_significant(count, 3);
  char buf[64];
  for (const auto& u : kUnits) {
    if (r >= u.size) {
      const double scaled = r / u.size;
      const int decimals = scaled >= 100 ? 0 : (scaled >= 10 ? 1 : 2);
      std::snprintf(buf, sizeof buf, "%.*f %s", decimals, scaled, u.word);
      return buf;
    }
  }
  std::snprintf(buf, sizeof buf, "%.0f", r);
  return buf;
}

}  // namespace mlfp::rounding
