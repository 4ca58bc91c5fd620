#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlfp/impact.hpp"
#include "mlfp/profiles.hpp"

namespace mlfp::ledger {

enum class RunKind { development, final_run, external };

const char* to_string(RunKind k);
RunKind run_kind_from_name(const std::string& name);

inline constexpr const char* kExternalCluster = "external";

// One training or development run, or a published summary row standing in
// for several runs (run_count > 1). Published impacts, when present, are kept
// exactly as given.
struct RunRecord {
  std::string id;
  RunKind kind = RunKind::final_run;
  std::string model_name;
  std::string cluster;
  std::optional<double> gpu_hours;
  std::optional<double> energy_mwh;
  std::optional<double> tokens_trained;
  std::optional<double> co2_t;
  std::optional<double> water_kl;
  bool pue_folded = false;
  std::string group;                     // development rows
  std::optional<std::int64_t> run_count; // runs summarised by this record; 1 if absent
  nlohmann::json extra = nlohmann::json::object();  // unknown fields, preserved

  std::int64_t runs() const { return run_count.value_or(1); }
  bool has_published_impact() const { return co2_t.has_value() || water_kl.has_value(); }
  bool inferred() const;
};

void validate(const RunRecord& r);

struct DevGroup {
  std::string name;
  std::vector<RunRecord> runs;
  std::int64_t declared_run_count = 0;
  bool inferred = false;
};

// A published "Total" row for the development table.
struct PublishedTotals {
  std::optional<double> gpu_hours;
  std::optional<double> energy_mwh;
  std::optional<std::int64_t> runs;
  std::optional<double> co2_t;
  std::optional<double> water_kl;
};

struct Campaign {
  std::vector<DevGroup> dev_groups;
  std::vector<RunRecord> final_runs;
  std::vector<RunRecord> external_runs;
  profiles::HardwareProfile hardware;
  double total_gpu_hours = 0.0;
  std::optional<PublishedTotals> dev_totals;
};

// ---------------------------------------------------------------------------
// Persistence: an append-only JSONL file. Each line is a RunRecord object, or
// a meta record with kind "campaign" (total_gpu_hours, hardware) or
// "development_total" (the published development totals). A later line with
// the same id supersedes the earlier one; {"id": ..., "deleted": true}
// retracts it.

struct LedgerSnapshot {
  std::vector<RunRecord> records;  // latest version of each live id, in first-appearance order
  std::optional<double> total_gpu_hours;
  std::optional<std::string> hardware;
  std::optional<PublishedTotals> dev_totals;
  std::size_t superseded = 0;
};

RunRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const RunRecord& r);

LedgerSnapshot read_ledger(std::istream& in, const std::string& source = "<ledger>");
LedgerSnapshot load_ledger(const std::string& path);
// Appends one validated record as a single line.
void append_record(const std::string& path, const RunRecord& record);
void append_record(std::ostream& out, const RunRecord& record);
// Writes the snapshot back out, one line per live record, meta records first.
void write_snapshot(std::ostream& out, const LedgerSnapshot& snapshot);

struct CampaignOptions {
  std::string hardware = "h100";
  // Cluster assigned to an inferred development group.
  std::string default_cluster = "jupiter";
};

Campaign build_campaign(const LedgerSnapshot& snapshot, const profiles::ProfileSet& profiles,
                        const CampaignOptions& options = {});

// ---------------------------------------------------------------------------
// Aggregation

enum class ImpactBasis {
  published,  // published impacts verbatim where present, computed otherwise
  computed,   // recompute from energy wherever a facility resolves
};

ImpactBasis impact_basis_from_name(const std::string& name);

struct AggregateOptions {
  ImpactBasis basis = ImpactBasis::published;
  // Rows on these clusters are recomputed from energy even under the
  // published basis.
  std::vector<std::string> recompute_clusters;
  std::optional<impact::PueConvention> pue_override;

  bool recomputes(const std::string& cluster) const;
};

struct RowImpact {
  std::string id;
  std::string label;
  std::string cluster;
  std::optional<double> gpu_hours;
  std::optional<double> energy_mwh;
  std::int64_t runs = 1;
  std::optional<double> co2_kg;
  std::optional<double> water_l;
  bool co2_published = false;
  bool water_published = false;
  bool inferred = false;
};

struct Subtotal {
  double gpu_hours = 0.0;
  double energy_mwh = 0.0;
  std::int64_t runs = 0;
  double co2_kg = 0.0;
  double water_l = 0.0;
  bool missing_values = false;

  void add(const RowImpact& row);
  impact::ImpactResult as_operational() const;
};

struct CampaignImpact {
  std::vector<RowImpact> groups;  // one row per development group
  std::vector<RowImpact> finals;
  std::vector<RowImpact> externals;
  Subtotal development;
  Subtotal final_runs;
  impact::ImpactResult embodied;
  impact::ImpactResult grand_total;  // development + final + embodied
  double total_gpu_hours = 0.0;
  std::vector<std::string> facilities_used;
  std::string hardware;
};

// Impact of one row. Throws for unknown clusters and for non-external rows
// with neither energy nor published impacts.
RowImpact row_impact(const RunRecord& r, const profiles::ProfileSet& profiles, const AggregateOptions& options);
RowImpact aggregate(const DevGroup& group, const profiles::ProfileSet& profiles, const AggregateOptions& options);
CampaignImpact aggregate(const Campaign& campaign, const profiles::ProfileSet& profiles,
                         const AggregateOptions& options = {});

// ---------------------------------------------------------------------------
// Rendering

enum class ReportStyle { markdown, csv, json };

ReportStyle report_style_from_name(const std::string& name);

struct ReportContext {
  profiles::EquivalencyTable equivalencies;
  AggregateOptions options;
};

std::string render_report(const CampaignImpact& impact, const profiles::ProfileSet& profiles,
                          const ReportContext& context, ReportStyle style);

// ---------------------------------------------------------------------------
// Audit

struct Finding {
  std::string row_id;
  std::string check;  // implied_ci, implied_wue, negative_residual, inferred_group, ...
  double observed = 0.0;
  double expected = 0.0;
  double deviation = 0.0;  // relative, |observed - expected| / expected
  std::string detail;
};

struct AuditOptions {
  double tolerance = 0.02;
  // Also compare published equivalency strings ("co2_equiv" / "water_equiv"
  // extra fields) against the table factors. Off by default: the printed
  // strings round months and disagree with each other by several percent.
  bool check_equivalencies = false;
  profiles::EquivalencyTable equivalencies = profiles::default_equivalencies();
};

std::vector<Finding> audit(const Campaign& campaign, const profiles::ProfileSet& profiles,
                           const AuditOptions& options = {});

struct GroupRow {
  std::string name;
  std::optional<double> gpu_hours;
  std::optional<double> energy_mwh;
  std::optional<std::int64_t> runs;
  std::optional<double> co2_t;
  std::optional<double> water_kl;
};

GroupRow published_row(const DevGroup& group);

struct ReconcileResult {
  GroupRow residual;
  std::optional<DevGroup> inferred;  // set when the residual is positive
  std::vector<Finding> findings;     // negative residuals
};

// Residual = totals - sum of the listed groups, column by column.
ReconcileResult reconcile_groups(const PublishedTotals& totals, const std::vector<GroupRow>& listed,
                                 const std::string& cluster = "jupiter", bool pue_folded = true);

std::string render_findings(const std::vector<Finding>& findings, ReportStyle style);

}  // namespace mlfp::ledger
