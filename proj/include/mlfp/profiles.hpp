#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mlfp/errors.hpp"

namespace mlfp::profiles {

// Facility efficiency factors. Rates are per kWh of IT energy.
struct FacilityProfile {
  std::string name;
  double pue = 1.0;               // dimensionless, >= 1
  double carbon_intensity = 0.0;  // kg CO2eq / kWh
  double wue_onsite = 0.0;        // L / kWh
  double wue_offsite = 0.0;       // L / kWh

  double wue_total() const { return wue_onsite + wue_offsite; }
  bool operator==(const FacilityProfile&) const = default;
};

// Embodied manufacturing impacts of one accelerator model.
struct HardwareProfile {
  std::string name;
  int gpus_per_server = 8;
  double server_embodied_co2 = 0.0;     // kg CO2eq per server
  double per_gpu_water = 0.0;           // L per GPU
  double rare_earth_mass = 0.0;         // kg per GPU
  double rare_earth_co2_rate = 0.0;     // kg CO2eq per kg mined
  double rare_earth_water_rate = 0.0;   // L per kg mined
  double lifespan_hours = 0.0;

  bool operator==(const HardwareProfile&) const = default;
};

// Conversion factors for human-scale comparisons.
struct EquivalencyTable {
  std::string name;
  double co2_per_home_year = 0.0;         // t CO2eq
  double co2_per_tanker_truck = 0.0;      // t CO2eq
  double co2_per_forest_acre_year = 0.0;  // t CO2eq sequestered
  double water_per_person_year = 0.0;     // kL

  bool operator==(const EquivalencyTable&) const = default;
};

// A `[kind name]` block of the key-value config format, keys in file order.
struct ConfigSection {
  std::string kind;
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t line = 0;

  const std::string* find(const std::string& key) const;
  bool operator==(const ConfigSection& other) const {
    return kind == other.kind && name == other.name && entries == other.entries;
  }
};

struct ProfileSet {
  std::map<std::string, FacilityProfile> facilities;
  std::map<std::string, HardwareProfile> hardware;
  std::map<std::string, EquivalencyTable> equivalencies;
  // Inference scenarios are stored raw and interpreted by the inference module.
  std::map<std::string, ConfigSection> scenarios;

  // Entries of `other` replace same-named entries here.
  void merge(const ProfileSet& other);

  const FacilityProfile& facility(const std::string& name) const;
  const HardwareProfile& hardware_profile(const std::string& name) const;
  const EquivalencyTable& equivalency(const std::string& name) const;
  const ConfigSection& scenario(const std::string& name) const;

  bool operator==(const ProfileSet&) const = default;
};

// Generic reader for the config syntax: `[kind name]` headers, `key = value`
// lines, `#` comments. Knows nothing about profile semantics.
std::vector<ConfigSection> parse_config(std::istream& in, const std::string& source = "<config>");

ProfileSet parse_profiles(std::istream& in, const std::string& source = "<config>");
ProfileSet load_profiles(const std::string& path);
std::string serialize_profiles(const ProfileSet& set);

void validate(const FacilityProfile& p);
void validate(const HardwareProfile& p);
void validate(const EquivalencyTable& t);

// Shipped presets: facilities jupiter, augusta, augusta-eia, jupiter-inference
// and lumi; hardware h100; equivalency table default.
const ProfileSet& builtin_profiles();
const std::string& builtin_profiles_text();
EquivalencyTable default_equivalencies();

inline constexpr const char* kProfilePathEnv = "MLFP_PROFILE_PATH";

// Resolves a CLI argument naming a profile: a name present in `known`, a path
// to a config file holding exactly one profile of that kind, or `<arg>.conf`
// on the MLFP_PROFILE_PATH search path.
FacilityProfile select_facility(const std::string& arg, const ProfileSet& known);
HardwareProfile select_hardware(const std::string& arg, const ProfileSet& known);
EquivalencyTable select_equivalency(const std::string& arg, const ProfileSet& known);

}  // namespace mlfp::profiles
