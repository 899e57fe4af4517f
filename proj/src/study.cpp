#include "pvgrid/study.hpp"

#include "pvgrid/compensation.hpp"
#include "pvgrid/errors.hpp"
#include "pvgrid/units.hpp"

#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

namespace pvgrid {

namespace {

constexpr double kCompareSlack = 1e-9;

FilterSlot parse_filter_slot(const nlohmann::json& j, std::size_t index) {
    FilterSlot f;
    f.bus = j.at("bus").get<std::string>();
    f.q_mvar = j.at("q_mvar").get<double>();
    f.target_order = j.at("target_order").get<int>();
    f.quality_factor = j.value("quality_factor", kDefaultFilterQualityFactor);
    f.id = j.value("id", fmt::format("F{}_{}_h{}", index + 1, f.bus, f.target_order));
    if (!(f.q_mvar > 0)) throw ValidationError(ValidationCode::InvalidValue, "filter slot " + f.id + ": q_mvar must be positive");
    return f;
}

// Re-raise a solver error with the stage name in front, keeping its type.
[[noreturn]] void rethrow_in_stage(const std::string& stage) {
    try {
        throw;
    } catch (const DivergenceError& e) {
        throw DivergenceError(e.iterations(), e.mismatch(), "stage '" + stage + "': " + e.what());
    } catch (const SingularJacobianError& e) {
        throw SingularJacobianError(e.iteration(), "stage '" + stage + "': " + e.what());
    } catch (const ResonanceError& e) {
        throw ResonanceError(e.order(), "stage '" + stage + "': " + e.what());
    }
}

std::string pf_text(const std::optional<double>& pf) { return pf ? fmt::format("{:.1f}", *pf * 100.0) : "no-flow"; }

std::vector<MeterPoint> default_meters(const Network& net) {
    // without metering, watch every bus carrying load
    std::vector<MeterPoint> m;
    std::set<std::string> seen;
    for (const auto& l : net.loads())
        if (seen.insert(l.bus).second) m.push_back({l.bus, l.bus, std::nullopt});
    return m;
}

}  // namespace

StudyPolicy parse_study_policy(const nlohmann::json& j, StudyPolicy p) {
    if (j.contains("pf_threshold")) p.pf_threshold = j.at("pf_threshold").get<double>();
    if (j.contains("thd_limits")) p.thd_limits = parse_thd_limits(j.at("thd_limits"));
    if (j.contains("metering")) p.monitored = parse_meters(j);
    if (j.contains("compensation_bus")) p.compensation_bus = j.at("compensation_bus").get<std::string>();
    if (j.contains("svc_limit_mvar")) p.svc_limit_mvar = j.at("svc_limit_mvar").get<double>();
    if (j.contains("q_override")) {
        if (j.at("q_override").is_null()) p.q_override.reset();
        else p.q_override = j.at("q_override").get<double>();
    }
    if (j.contains("filters_enabled")) p.filters_enabled = j.at("filters_enabled").get<bool>();
    if (j.contains("filter_bank")) {
        p.filter_bank.clear();
        for (std::size_t i = 0; i < j.at("filter_bank").size(); ++i) p.filter_bank.push_back(parse_filter_slot(j.at("filter_bank")[i], i));
    }
    if (j.contains("thd_scope")) {
        const auto scope = j.at("thd_scope").get<std::string>();
        if (scope == "monitored") p.thd_scope = ThdScope::MonitoredBuses;
        else if (scope == "all") p.thd_scope = ThdScope::AllBuses;
        else throw ValidationError(ValidationCode::Parse, "thd_scope must be 'monitored' or 'all'");
    }
    if (j.contains("harmonic_orders")) p.harmonic_orders = j.at("harmonic_orders").get<std::vector<int>>();
    if (j.contains("voltage_index_threshold")) p.voltage_index_threshold = j.at("voltage_index_threshold").get<double>();
    if (j.contains("reserve_margin_threshold")) p.reserve_margin_threshold = j.at("reserve_margin_threshold").get<double>();
    if (j.contains("stability")) {
        const auto& s = j.at("stability");
        p.stability.step = s.value("step", p.stability.step);
        p.stability.refine_tolerance = s.value("refine_tolerance", p.stability.refine_tolerance);
        p.stability.max_scale = s.value("max_scale", p.stability.max_scale);
        p.stability.v_stable = s.value("v_stable", p.stability.v_stable);
        p.stability.monitor_bus = s.value("monitor_bus", p.stability.monitor_bus);
    }
    if (!(p.pf_threshold > 0 && p.pf_threshold <= 1)) throw Error("pf_threshold must be in (0, 1]");
    return p;
}

StudyCase load_study_case(const nlohmann::json& j) {
    StudyCase c{j, build_network(j), parse_harmonic_sources(j), {}};
    StudyPolicy p;
    p.monitored = parse_meters(j);
    if (j.contains("study")) p = parse_study_policy(j.at("study"), p);
    c.policy = p;
    return c;
}

StudyCase load_study_case_file(const std::string& path) { return load_study_case(read_json_file(path)); }

bool StageSnapshot::compliant() const {
    for (const auto& r : compliance)
        if (!r.pass) return false;
    return true;
}

const MeterReading& StageSnapshot::meter(const std::string& label) const {
    for (const auto& m : meters)
        if (m.meter.label == label) return m;
    throw Error("no meter '" + label + "' in stage " + name);
}

const StageSnapshot& StudyReport::stage(const std::string& name) const {
    for (const auto& s : stages)
        if (s.name == name) return s;
    throw Error("study has no stage '" + name + "'");
}

std::vector<std::string> StudyReport::failed_checks() const {
    std::vector<std::string> out;
    if (stages.empty()) return out;
    for (const auto& r : final_stage().compliance)
        if (!r.pass) out.push_back(fmt::format("{} at {}: {} ({})", r.parameter, r.location, r.achieved_text, r.requirement));
    return out;
}

StageSnapshot evaluate_stage(const std::string& name, const Network& net, const std::vector<HarmonicSource>& sources,
                             const StudyPolicy& policy) {
    StageSnapshot s{name, net, {}, {}, {}, {}, {}, {}};
    try {
        s.flow = solve_load_flow(net, policy.solver);
        const auto meters = policy.monitored.empty() ? default_meters(net) : policy.monitored;
        for (const auto& m : meters) {
            MeterReading r{m, meter_quantities(net, s.flow, m), false};
            r.overcompensated = r.quantities.pf && *r.quantities.pf < 0 &&
                                std::abs(*r.quantities.pf) < policy.pf_threshold - kCompareSlack;
            s.meters.push_back(r);
        }
        const auto orders = policy.harmonic_orders.empty() ? source_orders(sources) : policy.harmonic_orders;
        s.harmonics = harmonic_scan(net, s.flow, sources, orders);
        s.thd = ieee519_check(s.harmonics, policy.thd_limits);
        auto stab = policy.stability;
        stab.solver = policy.solver;
        s.stability = loading_margin(net, stab);
    } catch (...) {
        rethrow_in_stage(name);
    }

    std::set<std::string> thd_rows;
    for (const auto& r : s.meters) {
        const auto i = s.flow.index_of(r.meter.bus);
        const auto& v = s.thd[i];
        thd_rows.insert(v.bus);
        s.compliance.push_back({"Voltage THD", r.meter.label, fmt::format("<= {:.1f}% ({:g} kV class)", v.limit_percent, v.nominal_kv),
                                v.thd_percent, fmt::format("{:.2f}%", v.thd_percent), v.pass ? "pass" : "fail", v.pass});
    }
    if (policy.thd_scope == ThdScope::AllBuses)
        for (const auto& v : s.thd)
            if (!v.pass && !thd_rows.count(v.bus))
            s.compliance.push_back({"Voltage THD", v.bus, fmt::format("<= {:.1f}% ({:g} kV class)", v.limit_percent, v.nominal_kv),
                                    v.thd_percent, fmt::format("{:.2f}%", v.thd_percent), "fail", false});
    for (const auto& r : s.meters) {
        const auto& pf = r.quantities.pf;
        const bool pass = !pf || std::abs(*pf) >= policy.pf_threshold - kCompareSlack;
        s.compliance.push_back({"Power Factor", r.meter.label, fmt::format(">= {:.2f}", policy.pf_threshold), pf.value_or(0.0),
                                pf ? fmt::format("{:.1f}%", *pf * 100.0) : "no-flow",
                                pass ? "pass" : (r.overcompensated ? "fail (overcompensated)" : "fail"), pass});
    }
    for (const auto& r : s.meters) {
        const double index = s.flow.magnitude[s.flow.index_of(r.meter.bus)] * 100.0;
        const bool pass = index >= policy.voltage_index_threshold - kCompareSlack;
        s.compliance.push_back({"Voltage Stability % Index", r.meter.label, fmt::format(">= {:g}%", policy.voltage_index_threshold),
                                index, fmt::format("{:.2f}%", index), pass ? "pass" : "fail", pass});
    }
    {
        const double m = s.stability.margin.loading_margin_percent;
        const bool pass = m >= policy.reserve_margin_threshold - kCompareSlack;
        s.compliance.push_back({"%B Reserve Margin", s.stability.margin.bus, fmt::format(">= {:g}%", policy.reserve_margin_threshold), m,
                                fmt::format("{:.2f}%", m), pass ? "pass" : "fail", pass});
    }
    return s;
}

StudyReport run_study(const StudyCase& c) { return run_study(c.network, c.sources, c.policy); }

StudyReport run_study(const Network& network, const std::vector<HarmonicSource>& sources, const StudyPolicy& policy) {
    StudyReport rep;
    rep.pf_threshold = policy.pf_threshold;
    rep.stages.push_back(evaluate_stage("base", network, sources, policy));
    const auto meter_points = policy.monitored.empty() ? default_meters(network) : policy.monitored;

    // PF stage
    std::string svc_bus = policy.compensation_bus;
    std::optional<double> slot_limit;
    for (const auto& sh : network.shunts())
        if (sh.kind == ShuntKind::SvcFixedQ && (svc_bus.empty() || sh.bus == svc_bus)) {
            if (svc_bus.empty()) svc_bus = sh.bus;
            slot_limit = sh.q_limit_mvar;
            break;
        }
    const auto& base_meters = rep.stages.back().meters;
    if (svc_bus.empty() && !base_meters.empty()) svc_bus = base_meters.front().meter.bus;
    const double limit = policy.svc_limit_mvar.value_or(slot_limit.value_or(std::numeric_limits<double>::infinity()));

    auto pf_failing = [&](const std::vector<MeterReading>& ms) {
        const MeterReading* worst = nullptr;
        for (const auto& m : ms) {
            if (!m.quantities.pf || std::abs(*m.quantities.pf) >= policy.pf_threshold - kCompareSlack) continue;
            if (m.meter.bus == svc_bus) return &m;
            if (!worst || std::abs(*m.quantities.pf) < std::abs(*worst->quantities.pf)) worst = &m;
        }
        return worst;
    };

    Network current = network;
    const double q0 = svc_setting_mvar(network, svc_bus.empty() ? network.buses()[network.slack_index()].id : svc_bus);
    if (policy.q_override || pf_failing(base_meters)) {
        if (svc_bus.empty()) throw Error("no compensation bus available for the SVC");
        double q = q0;
        if (policy.q_override) {
            q = *policy.q_override;
            if (std::abs(q) > limit * (1 + 1e-12))
                throw CompensationLimitError(fmt::format("compensation infeasible: override {:.1f} MVAR exceeds the +/-{:.1f} MVAR SVC limit", q, limit));
            current = apply_svc(network, svc_bus, q, limit);
            rep.actions.push_back({"after_svc", fmt::format("SVC set to {:.1f} MVAR at {} (fixed override)", q, svc_bus)});
        } else {
            // Size from the metered PF, then correct for the network response until the threshold holds.
            const double target = std::min(1.0, policy.pf_threshold + 1e-7);
            std::vector<MeterReading> readings = base_meters;
            for (int it = 0; it < 50; ++it) {
                const MeterReading* m = pf_failing(readings);
                if (!m) break;
                const auto plan = plan_compensation(m->quantities, m->meter.bus, target, m->meter.branch.has_value());
                q += plan.injection_mvar;
                if (std::abs(q) > limit * (1 + 1e-12))
                    throw CompensationLimitError(
                        fmt::format("compensation infeasible: {:.1f} MVAR needed at {}, SVC limit +/-{:.1f} MVAR", q, svc_bus, limit));
                current = apply_svc(network, svc_bus, q, limit);
                PowerFlowSolution sol;
                try {
                    sol = solve_load_flow(current, policy.solver);
                } catch (...) {
                    rethrow_in_stage("after_svc");
                }
                readings.clear();
                for (const auto& mp : meter_points) readings.push_back({mp, meter_quantities(current, sol, mp), false});
            }
            rep.actions.push_back({"after_svc", fmt::format("SVC sized to {:.1f} MVAR at {} for PF {:.2f}", q, svc_bus, policy.pf_threshold)});
        }
        rep.svc_mvar = q;
        rep.svc_bus = svc_bus;
        rep.stages.push_back(evaluate_stage("after_svc", current, sources, policy));
    }

    // harmonics stage
    bool thd_fail = false;
    for (const auto& r : rep.stages.back().compliance) thd_fail = thd_fail || (r.parameter == "Voltage THD" && !r.pass);
    if (thd_fail && policy.filters_enabled && !policy.filter_bank.empty()) {
        NetworkData d = current.data();
        for (const auto& slot : policy.filter_bank) {
            const auto idx = current.find_bus(slot.bus);
            if (!idx) throw ValidationError(ValidationCode::DanglingReference, "filter slot " + slot.id + " at unknown bus '" + slot.bus + "'");
            const double kv = current.buses()[*idx].nominal_kv;
            Shunt sh;
            sh.id = slot.id;
            sh.bus = slot.bus;
            sh.kind = ShuntKind::SingleTunedFilter;
            sh.filter = design_single_tuned_filter(slot.q_mvar * 1e6 / 3.0, kv * 1e3 / units::sqrt3, current.base_frequency_hz(),
                                                   slot.target_order, slot.quality_factor);
            d.shunts.push_back(sh);
            rep.filters.emplace_back(slot, *sh.filter);
            rep.actions.push_back({"after_filters", fmt::format("filter {} at {}: h={} C={:.3f} uF L={:.3f} mH", slot.id, slot.bus,
                                                                slot.target_order, sh.filter->capacitance_f * 1e6,
                                                                sh.filter->inductance_h * 1e3)});
        }
        current = Network(std::move(d));
        rep.stages.push_back(evaluate_stage("after_filters", current, sources, policy));
    }
    return rep;
}

std::string format_loadflow_csv(const StageSnapshot& s) {
    std::string out = "ID,Bus,MW,Mvar,Amp,%PF\n";
    auto row = [&](const std::string& id, const std::string& bus, const PowerQuantities& q) {
        out += fmt::format("{},{},{:.3f},{:.3f},{:.1f},{}\n", id, bus, q.p_mw, q.q_mvar, q.current_a, pf_text(q.pf));
    };
    for (const auto& m : s.meters) row(m.meter.label, m.meter.bus, m.quantities);
    if (!s.flow.bus_ids.empty())
        for (const auto& b : s.network.buses()) row(b.id, b.id, bus_power_quantities(s.network, s.flow, b.id));
    return out;
}

std::string format_harmonics_csv(const StageSnapshot& s) {
    std::string out = "bus,order,vh_percent,thd_percent\n";
    const auto& h = s.harmonics;
    for (std::size_t i = 0; i < h.bus_ids.size(); ++i)
        for (std::size_t k = 0; k < h.orders.size(); ++k)
            out += fmt::format("{},{},{:.6f},{:.6f}\n", h.bus_ids[i], h.orders[k], h.vh_percent[i][k], h.thd_percent[i]);
    return out;
}

std::string format_compliance_csv(const StudyReport& r) {
    std::string out = "parameter,location,requirement,achieved,verdict\n";
    if (r.stages.empty()) return out;
    for (const auto& c : r.final_stage().compliance)
        out += fmt::format("{},{},{},{},{}\n", c.parameter, c.location, c.requirement, c.achieved_text, c.verdict);
    return out;
}

std::string format_summary(const StudyReport& r) {
    std::string out;
    out += "Grid integration study\n";
    out += fmt::format("PF threshold: {:.2f}\n\n", r.pf_threshold);
    out += "Actions\n";
    if (r.actions.empty()) out += "  none\n";
    for (const auto& a : r.actions) out += fmt::format("  [{}] {}\n", a.stage, a.description);

    for (const auto& s : r.stages) {
        out += fmt::format("\nStage: {}\n", s.name);
        out += fmt::format("  {:<16} {:<12} {:>12} {:>12} {:>10} {:>8}\n", "ID", "Bus", "MW", "Mvar", "Amp", "%PF");
        for (const auto& m : s.meters) {
            const auto& q = m.quantities;
            out += fmt::format("  {:<16} {:<12} {:>12.3f} {:>12.3f} {:>10.1f} {:>8}{}\n", m.meter.label, m.meter.bus, q.p_mw, q.q_mvar,
                               q.current_a, pf_text(q.pf), m.overcompensated ? "  overcompensated" : "");
        }
        out += fmt::format("  {:<16} {:>8} {:>8} {:>8}\n", "THD bus", "kV", "THD %", "limit %");
        for (const auto& v : s.thd)
            out += fmt::format("  {:<16} {:>8g} {:>8.2f} {:>8.2f} {}\n", v.bus, v.nominal_kv, v.thd_percent, v.limit_percent,
                               v.pass ? "pass" : "FAIL");
        const auto& st = s.stability.margin;
        out += fmt::format("  Loading margin at {}: collapse scale {:.4f}, reserve {:.2f}%{}\n", st.bus, st.collapse_scale,
                           st.loading_margin_percent, st.reached_scale_cap ? " (scale cap reached)" : "");
        out += fmt::format("  Literal (Vs - Vop)/Vs margin: Vs {:.3f} pu, Vop {:.4f} pu, {:.2f}%\n", st.v_stable, st.v_operating,
                           st.literal_percent_b);
    }
    if (!r.stages.empty()) {
        out += fmt::format("\nCompliance ({})\n", r.final_stage().name);
        for (const auto& c : r.final_stage().compliance)
            out += fmt::format("  {:<26} {:<14} {:<26} {:>10} {}\n", c.parameter, c.location, c.requirement, c.achieved_text, c.verdict);
        out += "\nThe literal voltage margin is near 0% for a healthy bus while the reserve margin is near 100%;\n"
               "they measure different things and both are reported.\n";
        const auto failed = r.failed_checks();
        out += failed.empty() ? "\nResult: COMPLIANT\n" : "\nResult: NON-COMPLIANT\n";
        for (const auto& f : failed) out += "  failed: " + f + "\n";
    }
    return out;
}

void export_report(const StudyReport& r, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
    auto write = [&](const std::string& name, const std::string& text) {
        const auto path = fs::path(dir) / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error("cannot write '" + path.string() + "'");
        f << text;
        if (!f) throw Error("write failed for '" + path.string() + "'");
    };
    for (const auto& s : r.stages) {
        write("loadflow_" + s.name + ".csv", format_loadflow_csv(s));
        write("harmonics_" + s.name + ".csv", format_harmonics_csv(s));
    }
    write("compliance.csv", format_compliance_csv(r));
    write("summary.txt", format_summary(r));
}

}  // namespace pvgrid
