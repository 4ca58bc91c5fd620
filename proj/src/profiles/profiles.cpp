#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string_view>

#include "mlfp/profiles.hpp"

namespace mlfp::profiles {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format_number(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string where(const ConfigSection& s) {
  return "[" + s.kind + " " + s.name + "] (line " + std::to_string(s.line) + ")";
}

template <class Profile>
struct Field {
  const char* key;
  double Profile::*member;
};

constexpr Field<FacilityProfile> kFacilityFields[] = {
    {"pue", &FacilityProfile::pue},
    {"carbon_intensity", &FacilityProfile::carbon_intensity},
    {"wue_onsite", &FacilityProfile::wue_onsite},
    {"wue_offsite", &FacilityProfile::wue_offsite},
};

constexpr Field<HardwareProfile> kHardwareFields[] = {
    {"server_embodied_co2", &HardwareProfile::server_embodied_co2},
    {"per_gpu_water", &HardwareProfile::per_gpu_water},
    {"rare_earth_mass", &HardwareProfile::rare_earth_mass},
    {"rare_earth_co2_rate", &HardwareProfile::rare_earth_co2_rate},
    {"rare_earth_water_rate", &HardwareProfile::rare_earth_water_rate},
    {"lifespan_hours", &HardwareProfile::lifespan_hours},
};

constexpr Field<EquivalencyTable> kEquivalencyFields[] = {
    {"co2_per_home_year", &EquivalencyTable::co2_per_home_year},
    {"co2_per_tanker_truck", &EquivalencyTable::co2_per_tanker_truck},
    {"co2_per_forest_acre_year", &EquivalencyTable::co2_per_forest_acre_year},
    {"water_per_person_year", &EquivalencyTable::water_per_person_year},
};

double parse_number(const ConfigSection& s, const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ValidationError(where(s) + ": key '" + key + "' is not a number: '" + text + "'");
  }
  return v;
}

void reject_unknown(const ConfigSection& s, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : s.entries) {
    if (!allowed.contains(k)) throw ValidationError(where(s) + ": unknown key '" + k + "'");
  }
}

template <class Profile, std::size_t N>
Profile read_fields(const ConfigSection& s, const Field<Profile> (&fields)[N], std::set<std::string> allowed) {
  Profile p;
  p.name = s.name;
  for (const auto& f : fields) {
    allowed.insert(f.key);
    const std::string* text = s.find(f.key);
    if (!text) throw ValidationError(where(s) + ": missing required key '" + std::string(f.key) + "'");
    p.*(f.member) = parse_number(s, f.key, *text);
  }
  reject_unknown(s, allowed);
  return p;
}

FacilityProfile facility_from(const ConfigSection& s) {
  auto p = read_fields(s, kFacilityFields, {});
  try {
    validate(p);
  } catch (const ValidationError& e) {
    throw ValidationError(where(s) + ": " + e.what());
  }
  return p;
}

HardwareProfile hardware_from(const ConfigSection& s) {
  auto p = read_fields(s, kHardwareFields, {"gpus_per_server"});
  const std::string* gpus = s.find("gpus_per_server");
  if (!gpus) throw ValidationError(where(s) + ": missing required key 'gpus_per_server'");
  int n = 0;
  const auto [ptr, ec] = std::from_chars(gpus->data(), gpus->data() + gpus->size(), n);
  if (ec != std::errc{} || ptr != gpus->data() + gpus->size()) {
    throw ValidationError(where(s) + ": key 'gpus_per_server' is not an integer: '" + *gpus + "'");
  }
  p.gpus_per_server = n;
  try {
    validate(p);
  } catch (const ValidationError& e) {
    throw ValidationError(where(s) + ": " + e.what());
  }
  return p;
}

EquivalencyTable equivalency_from(const ConfigSection& s) {
  auto t = read_fields(s, kEquivalencyFields, {});
  try {
    validate(t);
  } catch (const ValidationError& e) {
    throw ValidationError(where(s) + ": " + e.what());
  }
  return t;
}

template <class Profile, std::size_t N>
void write_fields(std::ostream& out, const Profile& p, const Field<Profile> (&fields)[N]) {
  for (const auto& f : fields) out << f.key << " = " << format_number(p.*(f.member)) << '\n';
}

template <class Map>
const typename Map::mapped_type& lookup(const Map& m, const std::string& name, const char* kind) {
  const auto it = m.find(name);
  if (it == m.end()) {
    std::string known;
    for (const auto& [k, v] : m) known += (known.empty() ? "" : ", ") + k;
    throw ValidationError(std::string("unknown ") + kind + " profile '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

std::vector<std::filesystem::path> search_path() {
  std::vector<std::filesystem::path> dirs;
  const char* env = std::getenv(kProfilePathEnv);
  if (!env) return dirs;
  std::string_view rest(env);
  while (!rest.empty()) {
    const auto colon = rest.find(':');
    const auto part = rest.substr(0, colon);
    if (!part.empty()) dirs.emplace_back(std::string(part));
    if (colon == std::string_view::npos) break;
    rest.remove_prefix(colon + 1);
  }
  return dirs;
}

template <class Profile>
Profile select(const std::string& arg, const ProfileSet& known, const std::map<std::string, Profile> ProfileSet::*member,
               const char* kind) {
  const auto& map = known.*member;
  if (const auto it = map.find(arg); it != map.end()) return it->second;

  std::vector<std::filesystem::path> candidates{arg};
  for (const auto& dir : search_path()) candidates.push_back(dir / (arg + ".conf"));
  for (const auto& path : candidates) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) continue;
    const ProfileSet loaded = load_profiles(path.string());
    const auto& found = loaded.*member;
    if (found.size() != 1) {
      throw ValidationError(path.string() + ": expected exactly one " + kind + " profile, found " +
                            std::to_string(found.size()));
    }
    return found.begin()->second;
  }
  return lookup(map, arg, kind);
}

}  // namespace

const std::string* ConfigSection::find(const std::string& key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return &v;
  }
  return nullptr;
}

void ProfileSet::merge(const ProfileSet& other) {
  for (const auto& [k, v] : other.facilities) facilities[k] = v;
  for (const auto& [k, v] : other.hardware) hardware[k] = v;
  for (const auto& [k, v] : other.equivalencies) equivalencies[k] = v;
  for (const auto& [k, v] : other.scenarios) scenarios[k] = v;
}

const FacilityProfile& ProfileSet::facility(const std::string& name) const {
  return lookup(facilities, name, "facility");
}
const HardwareProfile& ProfileSet::hardware_profile(const std::string& name) const {
  return lookup(hardware, name, "hardware");
}
const EquivalencyTable& ProfileSet::equivalency(const std::string& name) const {
  return lookup(equivalencies, name, "equivalency");
}
const ConfigSection& ProfileSet::scenario(const std::string& name) const {
  return lookup(scenarios, name, "scenario");
}

std::vector<ConfigSection> parse_config(std::istream& in, const std::string& source) {
  std::vector<ConfigSection> sections;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const std::string at = source + ":" + std::to_string(line_no);

    if (view.front() == '[') {
      if (view.back() != ']') throw FormatError(at + ": unterminated section header");
      const auto inner = trim(view.substr(1, view.size() - 2));
      const auto space = inner.find_first_of(" \t");
      if (space == std::string_view::npos) throw FormatError(at + ": section header needs '[kind name]'");
      ConfigSection s;
      s.kind = std::string(trim(inner.substr(0, space)));
      s.name = std::string(trim(inner.substr(space + 1)));
      s.line = line_no;
      if (s.name.empty() || s.name.find_first_of(" \t") != std::string::npos) {
        throw FormatError(at + ": section name must be a single word");
      }
      sections.push_back(std::move(s));
      continue;
    }

    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw FormatError(at + ": expected 'key = value'");
    if (sections.empty()) throw FormatError(at + ": key outside of any section");
    const std::string key(trim(view.substr(0, eq)));
    const std::string value(trim(view.substr(eq + 1)));
    if (key.empty() || value.empty()) throw FormatError(at + ": empty key or value");
    auto& current = sections.back();
    if (current.find(key)) throw FormatError(at + ": duplicate key '" + key + "'");
    current.entries.emplace_back(key, value);
  }
  if (in.bad()) throw IoError("read error in " + source);
  return sections;
}

ProfileSet parse_profiles(std::istream& in, const std::string& source) {
  ProfileSet set;
  for (auto& s : parse_config(in, source)) {
    auto claim = [&](auto& map) {
      if (map.contains(s.name)) throw ValidationError(where(s) + ": duplicate " + s.kind + " '" + s.name + "'");
    };
    if (s.kind == "facility") {
      claim(set.facilities);
      set.facilities.emplace(s.name, facility_from(s));
    } else if (s.kind == "hardware") {
      claim(set.hardware);
      set.hardware.emplace(s.name, hardware_from(s));
    } else if (s.kind == "equivalency") {
      claim(set.equivalencies);
      set.equivalencies.emplace(s.name, equivalency_from(s));
    } else if (s.kind == "scenario") {
      claim(set.scenarios);
      set.scenarios.emplace(s.name, std::move(s));
    } else {
      throw ValidationError(where(s) + ": unknown section kind '" + s.kind + "'");
    }
  }
  return set;
}

ProfileSet load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open profile config '" + path + "'");
  return parse_profiles(in, path);
}

std::string serialize_profiles(const ProfileSet& set) {
  std::ostringstream out;
  bool first = true;
  auto header = [&](const char* kind, const std::string& name) {
    if (!first) out << '\n';
    first = false;
    out << '[' << kind << ' ' << name << "]\n";
  };
  for (const auto& [name, p] : set.facilities) {
    header("facility", name);
    write_fields(out, p, kFacilityFields);
  }
  for (const auto& [name, p] : set.hardware) {
    header("hardware", name);
    out << "gpus_per_server = " << p.gpus_per_server << '\n';
    write_fields(out, p, kHardwareFields);
  }
  for (const auto& [name, t] : set.equivalencies) {
    header("equivalency", name);
    write_fields(out, t, kEquivalencyFields);
  }
  for (const auto& [name, s] : set.scenarios) {
    header("scenario", name);
    for (const auto& [k, v] : s.entries) out << k << " = " << v << '\n';
  }
  return out.str();
}

void validate(const FacilityProfile& p) {
  if (!(p.pue >= 1.0)) throw ValidationError("pue must be >= 1 (got " + format_number(p.pue) + ")");
  for (const auto& f : kFacilityFields) {
    const double v = p.*(f.member);
    if (!std::isfinite(v) || v < 0.0) throw ValidationError(std::string(f.key) + " must be non-negative");
  }
}

void validate(const HardwareProfile& p) {
  if (p.gpus_per_server < 1) throw ValidationError("gpus_per_server must be positive");
  for (const auto& f : kHardwareFields) {
    const double v = p.*(f.member);
    const std::string_view key(f.key);
    // Rare-earth terms may be zeroed to drop that component.
    const bool may_be_zero = key.starts_with("rare_earth");
    if (!std::isfinite(v) || v < 0.0 || (!may_be_zero && v == 0.0)) {
      throw ValidationError(std::string(f.key) + (may_be_zero ? " must be non-negative" : " must be positive"));
    }
  }
}

void validate(const EquivalencyTable& t) {
  for (const auto& f : kEquivalencyFields) {
    const double v = t.*(f.member);
    if (!std::isfinite(v) || v <= 0.0) throw ValidationError(std::string(f.key) + " must be positive");
  }
}

const std::string& builtin_profiles_text() {
  static const std::string text = R"([facility augusta]
pue = 1.12
carbon_intensity = 0.351
wue_onsite = 0
wue_offsite = 3.1

[facility augusta-eia]
pue = 1.12
carbon_intensity = 0.352
wue_onsite = 0
wue_offsite = 3.1

[facility jupiter]
pue = 1.2
carbon_intensity = 0.332
wue_onsite = 0
wue_offsite = 1.29

[facility jupiter-inference]
pue = 1.2
carbon_intensity = 0.332
wue_onsite = 0
wue_offsite = 1.49

[facility lumi]
pue = 1
carbon_intensity = 0
wue_onsite = 0
wue_offsite = 0

[hardware h100]
gpus_per_server = 8
server_embodied_co2 = 3700
per_gpu_water = 100.4
rare_earth_mass = 0.000199
rare_earth_co2_rate = 65.4
rare_earth_water_rate = 11000
lifespan_hours = 35040

[equivalency default]
co2_per_home_year = 4.81
co2_per_tanker_truck = 75.8
co2_per_forest_acre_year = 1.044
water_per_person_year = 113.5
)";
  return text;
}

const ProfileSet& builtin_profiles() {
  static const ProfileSet set = [] {
    std::istringstream in(builtin_profiles_text());
    return parse_profiles(in, "<builtin>");
  }();
  return set;
}

EquivalencyTable default_equivalencies() { return builtin_profiles().equivalency("default"); }

FacilityProfile select_facility(const std::string& arg, const ProfileSet& known) {
  return select(arg, known, &ProfileSet::facilities, "facility");
}

HardwareProfile select_hardware(const std::string& arg, const ProfileSet& known) {
  return select(arg, known, &ProfileSet::hardware, "hardware");
}

EquivalencyTable select_equivalency(const std::string& arg, const ProfileSet& known) {
  return select(arg, known, &ProfileSet::equivalencies, "equivalency");
}

}  // namespace mlfp::profiles
