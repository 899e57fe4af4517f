#pragma once

#include "pvgrid/harmonics.hpp"
#include "pvgrid/network.hpp"
#include "pvgrid/powerflow.hpp"
#include "pvgrid/stability.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pvgrid {

/// One filter of the bank inserted when harmonics fail.
struct FilterSlot {
    std::string id;
    std::string bus;
    double q_mvar = 0;  // three-phase capacitor rating
    int target_order = 5;
    double quality_factor = kDefaultFilterQualityFactor;

    bool operator==(const FilterSlot&) const = default;
};

/// Buses whose THD enters compliance. Limits apply at the metering points by default.
enum class ThdScope { MonitoredBuses, AllBuses };

struct StudyPolicy {
    double pf_threshold = 0.95;
    ThdLimitTable thd_limits = ThdLimitTable::ieee519();
    ThdScope thd_scope = ThdScope::MonitoredBuses;
    std::vector<MeterPoint> monitored;
    std::string compensation_bus;       // empty: first SVC in the case, else the first monitored bus
    std::optional<double> svc_limit_mvar;  // empty: limit of the SVC slot
    std::optional<double> q_override;    // fixed SVC setting instead of sizing
    bool filters_enabled = true;
    std::vector<FilterSlot> filter_bank;
    std::vector<int> harmonic_orders;  // empty: orders present in the sources
    double voltage_index_threshold = 95;  // percent of nominal
    double reserve_margin_threshold = 95;  // percent
    LoadingMarginOptions stability;
    SolverOptions solver;
};

/// Fields present in `j` override `base`. Accepts the case "study" section or a study.json file.
StudyPolicy parse_study_policy(const nlohmann::json& j, StudyPolicy base = {});

/// A case file: network plus metering, harmonic sources and study policy.
struct StudyCase {
    nlohmann::json raw;
    Network network;
    std::vector<HarmonicSource> sources;
    StudyPolicy policy;
};

StudyCase load_study_case(const nlohmann::json& j);
StudyCase load_study_case_file(const std::string& path);

struct MeterReading {
    MeterPoint meter;
    PowerQuantities quantities;
    bool overcompensated = false;  // leading flow with |PF| below the threshold
};

struct ComplianceRow {
    std::string parameter;
    std::string location;
    std::string requirement;
    double achieved = 0;
    std::string achieved_text;
    std::string verdict;  // "pass", "fail", "fail (overcompensated)"
    bool pass = false;
};

struct StageSnapshot {
    std::string name;  // base, after_svc, after_filters
    Network network;
    PowerFlowSolution flow;
    std::vector<MeterReading> meters;
    HarmonicReport harmonics;
    std::vector<ThdVerdict> thd;
    LoadingMarginResult stability;
    std::vector<ComplianceRow> compliance;

    bool compliant() const;
    const MeterReading& meter(const std::string& label) const;
};

struct StudyAction {
    std::string stage;  // stage the action produced
    std::string description;
};

struct StudyReport {
    std::vector<StageSnapshot> stages;
    std::vector<StudyAction> actions;
    double svc_mvar = 0;
    std::string svc_bus;
    std::vector<std::pair<FilterSlot, FilterDesign>> filters;
    double pf_threshold = 0.95;

    const StageSnapshot& final_stage() const { return stages.back(); }
    const StageSnapshot& stage(const std::string& name) const;
    bool compliant() const { return !stages.empty() && final_stage().compliant(); }
    std::vector<std::string> failed_checks() const;
};

/// Load flow, SVC when a monitored PF is low, harmonic scan, filters when THD fails,
/// stability margins, compliance. Solver failures propagate with the stage name prefixed.
StudyReport run_study(const Network& network, const std::vector<HarmonicSource>& sources, const StudyPolicy& policy);
StudyReport run_study(const StudyCase& c);

/// Readings, THD, margins and compliance of one network state.
StageSnapshot evaluate_stage(const std::string& name, const Network& network, const std::vector<HarmonicSource>& sources,
                             const StudyPolicy& policy);

/// Writes loadflow_<stage>.csv, harmonics_<stage>.csv, compliance.csv and summary.txt.
void export_report(const StudyReport& report, const std::string& directory);

std::string format_summary(const StudyReport& report);
std::string format_loadflow_csv(const StageSnapshot& s);
std::string format_harmonics_csv(const StageSnapshot& s);
std::string format_compliance_csv(const StudyReport& r);

}  // namespace pvgrid
