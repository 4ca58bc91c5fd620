#include <algorithm>
#include <set>

#include "mlfp/ledger.hpp"

namespace mlfp::ledger {

ImpactBasis impact_basis_from_name(const std::string& name) {
  if (name == "published") return ImpactBasis::published;
  if (name == "computed") return ImpactBasis::computed;
  throw ArgumentError("unknown impact basis '" + name + "' (expected published or computed)");
}

bool AggregateOptions::recomputes(const std::string& cluster) const {
  if (basis == ImpactBasis::computed) return true;
  return std::find(recompute_clusters.begin(), recompute_clusters.end(), cluster) != recompute_clusters.end();
}

void Subtotal::add(const RowImpact& row) {
  gpu_hours += row.gpu_hours.value_or(0.0);
  energy_mwh += row.energy_mwh.value_or(0.0);
  runs += row.runs;
  if (row.co2_kg) {
    co2_kg += *row.co2_kg;
  } else {
    missing_values = true;
  }
  if (row.water_l) {
    water_l += *row.water_l;
  } else {
    missing_values = true;
  }
}

impact::ImpactResult Subtotal::as_operational() const {
  impact::ImpactResult r;
  r.energy_kwh = energy_mwh * 1000.0;
  r.operational = {co2_kg, water_l};
  return r;
}

RowImpact row_impact(const RunRecord& r, const profiles::ProfileSet& profiles, const AggregateOptions& options) {
  RowImpact row;
  row.id = r.id;
  row.label = r.model_name;
  row.cluster = r.cluster;
  row.gpu_hours = r.gpu_hours;
  row.energy_mwh = r.energy_mwh;
  row.runs = r.runs();
  row.inferred = r.inferred();

  if (r.co2_t) {
    row.co2_kg = *r.co2_t * 1000.0;
    row.co2_published = true;
  }
  if (r.water_kl) {
    row.water_l = *r.water_kl * 1000.0;
    row.water_published = true;
  }
  if (r.cluster == kExternalCluster) return row;

  // Resolve even when published values are used, so a typo in a cluster name
  // never goes unnoticed.
  const auto& facility = profiles.facility(r.cluster);
  if (!r.energy_mwh) {
    if (!r.has_published_impact()) {
      throw ValidationError("record '" + r.id + "': no energy_mwh on a non-external row");
    }
    return row;
  }

  const bool folded = options.pue_override ? *options.pue_override == impact::PueConvention::folded : r.pue_folded;
  const auto op = impact::operational_impact(impact::EnergyQuantity::from_mwh(*r.energy_mwh, folded), facility);
  const bool recompute = options.recomputes(r.cluster);
  if (recompute || !row.co2_kg) {
    row.co2_kg = op.operational.co2_kg;
    row.co2_published = false;
  }
  if (recompute || !row.water_l) {
    row.water_l = op.operational.water_l;
    row.water_published = false;
  }
  return row;
}

RowImpact aggregate(const DevGroup& group, const profiles::ProfileSet& profiles, const AggregateOptions& options) {
  RowImpact out;
  out.id = group.runs.empty() ? group.name : group.runs.front().id;
  out.label = group.name;
  out.inferred = group.inferred;
  out.runs = group.declared_run_count;

  std::vector<const RunRecord*> ordered;
  for (const auto& r : group.runs) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](const RunRecord* a, const RunRecord* b) { return a->id < b->id; });

  bool all_gpu = true, all_energy = true, all_co2 = true, all_water = true;
  double gpu = 0, energy = 0, co2 = 0, water = 0;
  bool any_published_co2 = false, any_published_water = false;
  std::set<std::string> clusters;
  for (const RunRecord* r : ordered) {
    const RowImpact row = row_impact(*r, profiles, options);
    clusters.insert(row.cluster);
    if (row.gpu_hours) gpu += *row.gpu_hours; else all_gpu = false;
    if (row.energy_mwh) energy += *row.energy_mwh; else all_energy = false;
    if (row.co2_kg) co2 += *row.co2_kg; else all_co2 = false;
    if (row.water_l) water += *row.water_l; else all_water = false;
    any_published_co2 = any_published_co2 || row.co2_published;
    any_published_water = any_published_water || row.water_published;
  }
  if (!ordered.empty()) {
    if (all_gpu) out.gpu_hours = gpu;
    if (all_energy) out.energy_mwh = energy;
    if (all_co2) out.co2_kg = co2;
    if (all_water) out.water_l = water;
  }
  out.co2_published = any_published_co2;
  out.water_published = any_published_water;
  out.cluster = clusters.size() == 1 ? *clusters.begin() : std::string("mixed");
  return out;
}

CampaignImpact aggregate(const Campaign& campaign, const profiles::ProfileSet& profiles,
                         const AggregateOptions& options) {
  CampaignImpact out;
  out.hardware = campaign.hardware.name;
  out.total_gpu_hours = campaign.total_gpu_hours;

  std::set<std::string> facilities;
  auto note_facility = [&](const RunRecord& r) {
    if (r.cluster != kExternalCluster) facilities.insert(r.cluster);
  };

  for (const auto& g : campaign.dev_groups) {
    out.groups.push_back(aggregate(g, profiles, options));
    out.development.add(out.groups.back());
    for (const auto& r : g.runs) note_facility(r);
  }

  auto by_id = [](const RunRecord* a, const RunRecord* b) { return a->id < b->id; };
  std::vector<const RunRecord*> finals, externals;
  for (const auto& r : campaign.final_runs) finals.push_back(&r);
  for (const auto& r : campaign.external_runs) externals.push_back(&r);
  std::sort(finals.begin(), finals.end(), by_id);
  std::sort(externals.begin(), externals.end(), by_id);

  for (const RunRecord* r : finals) {
    out.finals.push_back(row_impact(*r, profiles, options));
    out.final_runs.add(out.finals.back());
    note_facility(*r);
  }
  for (const RunRecord* r : externals) out.externals.push_back(row_impact(*r, profiles, options));

  out.embodied = impact::embodied_total(campaign.total_gpu_hours, campaign.hardware);
  out.grand_total = out.development.as_operational() + out.final_runs.as_operational() + out.embodied;
  out.facilities_used.assign(facilities.begin(), facilities.end());
  return out;
}

}  // namespace mlfp::ledger
