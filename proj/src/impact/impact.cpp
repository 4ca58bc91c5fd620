#include <cmath>

#include "mlfp/impact.hpp"
#include "mlfp/rounding.hpp"

namespace mlfp::impact {

PueConvention pue_convention_from_name(const std::string& name) {
  if (name == "applied") return PueConvention::applied;
  if (name == "folded") return PueConvention::folded;
  throw ArgumentError("unknown PUE convention '" + name + "' (expected applied or folded)");
}

const char* to_string(PueConvention c) { return c == PueConvention::folded ? "folded" : "applied"; }

ImpactResult& ImpactResult::operator+=(const ImpactResult& o) {
  energy_kwh += o.energy_kwh;
  operational += o.operational;
  embodied += o.embodied;
  return *this;
}

ImpactResult operator+(ImpactResult a, const ImpactResult& b) { return a += b; }

namespace {

double facility_energy(const EnergyQuantity& e, const profiles::FacilityProfile& f) {
  if (!(e.kwh >= 0.0)) throw ValidationError("energy must be non-negative");
  return e.pue_folded ? e.kwh : e.kwh * f.pue;
}

}  // namespace

double operational_co2(const EnergyQuantity& energy, const profiles::FacilityProfile& facility) {
  return facility_energy(energy, facility) * facility.carbon_intensity;
}

double operational_water(const EnergyQuantity& energy, const profiles::FacilityProfile& facility) {
  return facility_energy(energy, facility) * facility.wue_total();
}

ImpactResult operational_impact(const EnergyQuantity& energy, const profiles::FacilityProfile& facility) {
  ImpactResult r;
  r.energy_kwh = energy.kwh;
  r.operational = {operational_co2(energy, facility), operational_water(energy, facility)};
  return r;
}

EmbodiedPerGpu embodied_per_gpu(const profiles::HardwareProfile& hw) {
  return {hw.server_embodied_co2 / hw.gpus_per_server + hw.rare_earth_mass * hw.rare_earth_co2_rate,
          hw.per_gpu_water + hw.rare_earth_mass * hw.rare_earth_water_rate};
}

AmortizedRate amortized_rate(const profiles::HardwareProfile& hw) {
  if (!(hw.lifespan_hours > 0.0)) throw ValidationError("hardware lifespan must be positive");
  const auto per_gpu = embodied_per_gpu(hw);
  return {per_gpu.co2_kg / hw.lifespan_hours, per_gpu.water_l / hw.lifespan_hours};
}

ImpactResult embodied_total(double gpu_hours, const profiles::HardwareProfile& hw) {
  if (!(gpu_hours >= 0.0)) throw ValidationError("GPU hours must be non-negative");
  const auto rate = amortized_rate(hw);
  ImpactResult r;
  r.embodied = {rate.co2_kg_per_gpu_hour * gpu_hours, rate.water_l_per_gpu_hour * gpu_hours};
  return r;
}

Equivalencies equivalize(double co2_kg, double water_l, const profiles::EquivalencyTable& table) {
  profiles::validate(table);
  const double tonnes = co2_kg / 1000.0;
  const double kilolitres = water_l / 1000.0;
  Equivalencies e;
  e.home_years = tonnes / table.co2_per_home_year;
  e.tanker_trucks = tonnes / table.co2_per_tanker_truck;
  e.forest_acre_years = tonnes / table.co2_per_forest_acre_year;
  e.person_years = kilolitres / table.water_per_person_year;
  e.home_energy = format_years(e.home_years);
  e.person_water = format_years(e.person_years);
  return e;
}

Equivalencies equivalize(const ImpactResult& impact, const profiles::EquivalencyTable& table) {
  return equivalize(impact.co2_kg(), impact.water_l(), table);
}

std::string format_years(double years) {
  const auto months = rounding::round_half_up(years * 12.0, 0).units;
  const auto y = months / 12;
  const auto m = months % 12;
  if (y == 0) return std::to_string(m) + " mo";
  if (m == 0) return std::to_string(y) + (y == 1 ? " year" : " years");
  return std::to_string(y) + (y == 1 ? " yr, " : " yrs, ") + std::to_string(m) + " mo";
}

}  // namespace mlfp::impact
