#pragma once

#include <string>

#include "mlfp/profiles.hpp"

namespace mlfp::impact {

// Whether a reported energy figure already includes facility overhead. With
// `folded` the PUE factor is not applied a second time.
enum class PueConvention { applied, folded };

PueConvention pue_convention_from_name(const std::string& name);
const char* to_string(PueConvention c);

struct EnergyQuantity {
  double kwh = 0.0;
  bool pue_folded = false;

  static EnergyQuantity from_mwh(double mwh, bool pue_folded) { return {mwh * 1000.0, pue_folded}; }
  static EnergyQuantity with(double kwh, PueConvention c) { return {kwh, c == PueConvention::folded}; }
};

struct Component {
  double co2_kg = 0.0;
  double water_l = 0.0;

  Component& operator+=(const Component& o) {
    co2_kg += o.co2_kg;
    water_l += o.water_l;
    return *this;
  }
  bool operator==(const Component&) const = default;
};

// Totals are always derived from the breakdown, so they can never disagree.
struct ImpactResult {
  double energy_kwh = 0.0;
  Component operational;
  Component embodied;

  double co2_kg() const { return operational.co2_kg + embodied.co2_kg; }
  double water_l() const { return operational.water_l + embodied.water_l; }

  ImpactResult& operator+=(const ImpactResult& o);
  bool operator==(const ImpactResult&) const = default;
};

ImpactResult operator+(ImpactResult a, const ImpactResult& b);

// CO2e = P * PUE * CI, with PUE taken as 1 when the energy is folded.
double operational_co2(const EnergyQuantity& energy, const profiles::FacilityProfile& facility);
// Consumption = P * PUE * (WUE_onsite + WUE_offsite).
double operational_water(const EnergyQuantity& energy, const profiles::FacilityProfile& facility);
ImpactResult operational_impact(const EnergyQuantity& energy, const profiles::FacilityProfile& facility);

struct EmbodiedPerGpu {
  double co2_kg = 0.0;
  double water_l = 0.0;
};

struct AmortizedRate {
  double co2_kg_per_gpu_hour = 0.0;
  double water_l_per_gpu_hour = 0.0;
};

EmbodiedPerGpu embodied_per_gpu(const profiles::HardwareProfile& hw);
AmortizedRate amortized_rate(const profiles::HardwareProfile& hw);
ImpactResult embodied_total(double gpu_hours, const profiles::HardwareProfile& hw);

struct Equivalencies {
  double home_years = 0.0;
  double tanker_trucks = 0.0;
  double forest_acre_years = 0.0;
  double person_years = 0.0;
  std::string home_energy;   // e.g. "13 yrs, 6 mo"
  std::string person_water;  // e.g. "7 yrs, 10 mo"
};

Equivalencies equivalize(double co2_kg, double water_l, const profiles::EquivalencyTable& table);
Equivalencies equivalize(const ImpactResult& impact, const profiles::EquivalencyTable& table);

// Years rendered as "N yrs, M mo" with months rounded to nearest (ties up).
std::string format_years(double years);

}  // namespace mlfp::impact
