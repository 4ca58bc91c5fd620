#pragma once

#include <cstdint>
#include <string>

namespace mlfp::rounding {

// A decimal number held as an integer count of 10^-decimals units, so sums of
// rounded table cells are exact.
struct Decimal {
  std::int64_t units = 0;
  int decimals = 0;

  double value() const;
  std::string str() const;
};

// Half-up rounding of a value meant as a decimal quantity. The tolerance keeps
// 6.45 (stored as 6.4500000000000002 or 6.4499999999999993) rounding to 6.5.
Decimal round_half_up(double v, int decimals);

// Exact sum; operands are rescaled to the larger number of decimals.
Decimal add(const Decimal& a, const Decimal& b);
Decimal rescale(const Decimal& d, int decimals);

// Display rule for impact tables: one decimal for magnitudes below
// `one_decimal_below`, whole numbers otherwise; a trailing .0 is dropped.
Decimal display_round(double v, double one_decimal_below);

// Three significant figures with a magnitude word, e.g. 1.05 bil., 441 mil.
std::string short_scale(double count);
double round_significant(double v, int digits);

}  // namespace mlfp::rounding
