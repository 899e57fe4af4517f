#include "pvgrid/compensation.hpp"
#include "pvgrid/errors.hpp"
#include "pvgrid/harmonics.hpp"
#include "pvgrid/network.hpp"
#include "pvgrid/plant_sizing.hpp"
#include "pvgrid/powerflow.hpp"
#include "pvgrid/stability.hpp"
#include "pvgrid/study.hpp"
#include "pvgrid/svc_rl.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace pvgrid;

namespace {

constexpr int kOk = 0;
constexpr int kNonCompliant = 1;
constexpr int kSolverError = 2;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path + "'");
    f << text;
}

std::string pf_cell(const PowerQuantities& q) { return q.pf ? fmt::format("{:.1f}", *q.pf * 100.0) : "no-flow"; }

std::vector<int> parse_orders(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

// ---------------------------------------------------------------------------

struct SizingArgs {
    std::string params_file;
    std::string csv;
    std::optional<int> ns, np;
    std::optional<double> panel_w, target_mw, ilr, v_inv, pf, lv_mva, lv_v, mv_v, hv_kv, hv_mw, divisor, margin;
};

int run_sizing(const SizingArgs& a) {
    PlantParams p;
    if (!a.params_file.empty()) p = parse_plant_params(read_json_file(a.params_file));
    if (a.ns) p.panels_per_string = *a.ns;
    if (a.np) p.strings_parallel = *a.np;
    if (a.panel_w) p.panel_power_w = *a.panel_w;
    if (a.target_mw) p.plant_target_mw = *a.target_mw;
    if (a.ilr) p.inverter_loading_ratio = *a.ilr;
    if (a.v_inv) p.inverter_ac_voltage_v = *a.v_inv;
    if (a.pf) p.inverter_power_factor = *a.pf;
    if (a.lv_mva) p.lv_transformer_mva = *a.lv_mva;
    if (a.lv_v) p.lv_voltage_v = *a.lv_v;
    if (a.mv_v) p.mv_voltage_v = *a.mv_v;
    if (a.hv_kv) p.hv_voltage_kv = *a.hv_kv;
    if (a.hv_mw) p.hv_plant_power_mw = *a.hv_mw;
    if (a.divisor) p.hv_divisor = *a.divisor;
    if (a.margin) p.rating_margin = *a.margin;
    const auto r = size_plant(p);

    const std::vector<std::tuple<std::string, std::string, std::string>> rows = {
        {"Total panels", fmt::format("{}", r.total_panels), ""},
        {"Array power", fmt::format("{:.4f}", r.array_power_mw), "MW"},
        {"Arrays required", fmt::format("{} ({:.3f})", r.arrays_required, r.arrays_ratio), ""},
        {"Inverter AC power", fmt::format("{:.4f}", r.inverter_ac_power_mw), "MW"},
        {"Inverter current", fmt::format("{:.1f}", r.inverter_current_a), "A"},
        {"LV current", fmt::format("{:.1f}", r.lv_current_a), "A"},
        {"MV current", fmt::format("{:.2f}", r.mv_current_a), "A"},
        {"HV transformer S", fmt::format("{:.2f}", r.hv_apparent_power_mva), "MVA"},
        {"HV current", fmt::format("{:.1f}", r.hv_current_a), "A"},
        {"Recommended rating", fmt::format("{:.2f}", r.recommended_rating_mva), "MVA"},
    };
    for (const auto& [name, value, unit] : rows) fmt::print("{:<20} {:>16} {}\n", name, value, unit);
    if (!a.csv.empty()) {
        std::string csv = "quantity,value,unit\n";
        for (const auto& [name, value, unit] : rows) csv += fmt::format("{},{},{}\n", name, value, unit);
        write_text(a.csv, csv);
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct LoadflowArgs {
    std::string case_file;
    std::string csv = "loadflow.csv";
    bool initial_values = false;
    double tolerance = 1e-8;
    int max_iterations = 50;
};

int run_loadflow(const LoadflowArgs& a) {
    const auto c = load_study_case_file(a.case_file);
    SolverOptions opt;
    opt.flat_start = !a.initial_values;
    opt.tolerance = a.tolerance;
    opt.max_iterations = a.max_iterations;
    const auto sol = solve_load_flow(c.network, opt);
    fmt::print("Converged in {} iterations, max mismatch {:.2e} pu\n\n", sol.iterations, sol.max_mismatch);

    std::string csv = "ID,Bus,MW,Mvar,Amp,%PF,V_pu,angle_deg\n";
    fmt::print("{:<16} {:<12} {:>12} {:>12} {:>10} {:>8} {:>8} {:>9}\n", "ID", "Bus", "MW", "Mvar", "Amp", "%PF", "V pu", "deg");
    auto row = [&](const std::string& id, const std::string& bus, const PowerQuantities& q) {
        const auto i = sol.index_of(bus);
        const double deg = sol.angle[i] * 180.0 / M_PI;
        fmt::print("{:<16} {:<12} {:>12.3f} {:>12.3f} {:>10.1f} {:>8} {:>8.4f} {:>9.3f}\n", id, bus, q.p_mw, q.q_mvar, q.current_a,
                   pf_cell(q), sol.magnitude[i], deg);
        csv += fmt::format("{},{},{:.3f},{:.3f},{:.1f},{},{:.6f},{:.4f}\n", id, bus, q.p_mw, q.q_mvar, q.current_a, pf_cell(q),
                           sol.magnitude[i], deg);
    };
    for (const auto& m : c.policy.monitored) row(m.label, m.bus, meter_quantities(c.network, sol, m));
    for (const auto& b : c.network.buses()) row(b.id, b.id, bus_power_quantities(c.network, sol, b.id));
    if (!a.csv.empty()) write_text(a.csv, csv);
    return kOk;
}

// ---------------------------------------------------------------------------

struct CompensateArgs {
    std::string case_file;
    std::string bus;
    double target_pf = 0.95;
    std::string out = "compensated_case.json";
};

int run_compensate(const CompensateArgs& a) {
    auto c = load_study_case_file(a.case_file);
    const auto sol = solve_load_flow(c.network);
    MeterPoint meter{a.bus, a.bus, std::nullopt};
    for (const auto& m : c.policy.monitored)
        if (m.bus == a.bus) {
            meter = m;
            break;
        }
    const auto plan = plan_compensation(c.network, sol, meter, a.target_pf);
    const double existing = svc_setting_mvar(c.network, a.bus);
    double limit = std::numeric_limits<double>::infinity();
    for (const auto& sh : c.network.shunts())
        if (sh.kind == ShuntKind::SvcFixedQ && sh.bus == a.bus) limit = sh.q_limit_mvar;
    const double q = existing + plan.injection_mvar;

    fmt::print("Bus               {}\n", plan.bus);
    fmt::print("Metered P         {:.3f} MW\n", plan.active_power_mw);
    fmt::print("PF actual         {:.4f}\n", plan.pf_actual);
    fmt::print("PF target         {:.4f}\n", plan.pf_target);
    fmt::print("tan1 - tan2       {:.4f}\n", std::tan(plan.angle_before) - std::tan(plan.angle_after));
    fmt::print("Required Q_c      {:.1f} MVAR\n", plan.required_q_mvar);
    fmt::print("SVC setting       {:.1f} MVAR (was {:.1f})\n", q, existing);

    const auto compensated = apply_svc(c.network, a.bus, q, limit);
    const auto after = solve_load_flow(compensated);
    const auto mq = meter_quantities(compensated, after, meter);
    fmt::print("PF after          {}\n", pf_cell(mq));

    auto out = c.raw;
    bool found = false;
    if (!out.contains("shunts")) out["shunts"] = nlohmann::json::array();
    for (auto& sh : out["shunts"])
        if (sh.value("kind", std::string("svc")) == "svc" && sh.at("bus") == a.bus) {
            sh["q_mvar"] = q;
            found = true;
            break;
        }
    if (!found) {
        nlohmann::json sh{{"id", "SVC_" + a.bus}, {"bus", a.bus}, {"kind", "svc"}, {"q_mvar", q}, {"mode", "constant_q"}};
        if (std::isfinite(limit)) sh["q_limit_mvar"] = limit;
        else sh["q_limit_mvar"] = std::abs(q);
        out["shunts"].push_back(sh);
    }
    write_text(a.out, out.dump(2) + "\n");
    return kOk;
}

// ---------------------------------------------------------------------------

struct HarmonicsArgs {
    std::string case_file;
    std::string orders;
    std::string csv = "harmonics.csv";
    bool with_filters = false;
};

int run_harmonics(const HarmonicsArgs& a) {
    auto c = load_study_case_file(a.case_file);
    Network net = c.network;
    if (a.with_filters) {
        NetworkData d = net.data();
        for (const auto& slot : c.policy.filter_bank) {
            Shunt sh;
            sh.id = slot.id;
            sh.bus = slot.bus;
            sh.kind = ShuntKind::SingleTunedFilter;
            const double kv = net.buses()[net.bus_index(slot.bus)].nominal_kv;
            sh.filter = design_single_tuned_filter(slot.q_mvar * 1e6 / 3.0, kv * 1e3 / std::sqrt(3.0), net.base_frequency_hz(),
                                                   slot.target_order, slot.quality_factor);
            d.shunts.push_back(sh);
        }
        net = Network(std::move(d));
    }
    const auto orders = a.orders.empty() ? source_orders(c.sources) : parse_orders(a.orders);
    const auto sol = solve_load_flow(net);
    const auto rep = harmonic_scan(net, sol, c.sources, orders);
    const auto verdicts = ieee519_check(rep, c.policy.thd_limits);
    fmt::print("{:<12} {:>8} {:>9} {:>9}  verdict\n", "Bus", "kV", "THD %", "limit %");
    for (const auto& v : verdicts)
        fmt::print("{:<12} {:>8g} {:>9.3f} {:>9.2f}  {}\n", v.bus, v.nominal_kv, v.thd_percent, v.limit_percent, v.pass ? "pass" : "FAIL");
    if (!a.csv.empty()) {
        StageSnapshot s{"scan", net, sol, {}, rep, verdicts, {}, {}};
        write_text(a.csv, format_harmonics_csv(s));
    }
    bool ok = true;
    for (const auto& v : verdicts) ok = ok && v.pass;
    return ok ? kOk : kNonCompliant;
}

// ---------------------------------------------------------------------------

struct StabilityArgs {
    std::string case_file;
    std::string monitor;
    double step = 0.01;
    double tolerance = 1e-4;
    double v_stable = 1.0;
    std::string csv = "nose_curve.csv";
};

int run_stability(const StabilityArgs& a) {
    const auto c = load_study_case_file(a.case_file);
    LoadingMarginOptions opt = c.policy.stability;
    if (!a.monitor.empty()) opt.monitor_bus = a.monitor;
    opt.step = a.step;
    opt.refine_tolerance = a.tolerance;
    opt.v_stable = a.v_stable;
    const auto r = loading_margin(c.network, opt);
    const auto& m = r.margin;
    fmt::print("Monitored bus            {}\n", m.bus);
    fmt::print("Operating voltage        {:.4f} pu\n", m.v_operating);
    fmt::print("Collapse load scale      {:.4f}{}\n", m.collapse_scale, m.reached_scale_cap ? " (cap reached)" : "");
    fmt::print("Loading margin           {:.2f} %\n", m.loading_margin_percent);
    fmt::print("Literal (Vs-Vop)/Vs      {:.2f} % with Vs = {:.3f} pu\n", m.literal_percent_b, m.v_stable);
    fmt::print("The two margins measure different quantities; they are not reconciled.\n");
    if (!a.csv.empty()) {
        std::string csv = "scale,voltage_pu\n";
        for (const auto& p : r.nose_curve) csv += fmt::format("{:.6f},{:.6f}\n", p.scale, p.voltage_pu);
        write_text(a.csv, csv);
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> episodes;
    std::string out = "agent.json";
    std::string log;
};

int run_train(const TrainArgs& a) {
    rl::EnvConfig env;
    rl::Hyperparameters hp;
    if (!a.config.empty()) {
        const auto j = read_json_file(a.config);
        env = rl::parse_env_config(j.value("env", j));
        if (j.contains("hyperparameters")) hp = rl::parse_hyperparameters(j.at("hyperparameters"));
    }
    if (a.seed) env.seed = *a.seed;
    if (a.episodes) hp.episodes = *a.episodes;
    const auto res = rl::train_agent(env, hp);
    auto j = res.agent.to_json();
    j["env"] = rl::to_json(env);
    write_text(a.out, j.dump(2) + "\n");

    const auto& ret = res.log.episode_return;
    const std::size_t w = std::min<std::size_t>(50, ret.size());
    double first = 0, last = 0;
    for (std::size_t i = 0; i < w; ++i) {
        first += ret[i];
        last += ret[ret.size() - 1 - i];
    }
    if (w > 0) fmt::print("Mean return, first {} episodes: {:.4f}; last {}: {:.4f}\n", w, first / w, w, last / w);
    fmt::print("Policy agreement with dynamic programming: {:.1f}% of bins\n", 100.0 * rl::policy_agreement(res.agent, env));
    if (!a.log.empty()) {
        std::string csv = "episode,return,epsilon\n";
        for (std::size_t i = 0; i < ret.size(); ++i) csv += fmt::format("{},{:.6f},{:.6f}\n", i, ret[i], res.log.epsilon[i]);
        write_text(a.log, csv);
    }
    return kOk;
}

struct EvalArgs {
    std::string agent = "agent.json";
    std::string disturbance = "none";
    std::string out = "trace.csv";
    std::string plant_case;
    std::string plant_bus;
};

int run_eval(const EvalArgs& a) {
    const auto j = read_json_file(a.agent);
    const auto agent = rl::Agent::from_json(j);
    const auto env = j.contains("env") ? rl::parse_env_config(j.at("env")) : rl::EnvConfig{};
    std::unique_ptr<rl::Plant> plant;
    if (!a.plant_case.empty()) {
        if (a.plant_bus.empty()) throw Error("--plant-bus is required with --plant-case");
        plant = std::make_unique<rl::LoadFlowPlant>(load_network_file(a.plant_case), a.plant_bus, env.q_limit_mvar);
    }
    const auto trace = rl::evaluate_episode(agent, env, rl::parse_disturbance(a.disturbance), plant.get());
    std::string csv = "step,voltage_pu,action_mvar,reward\n";
    for (const auto& r : trace.rows) csv += fmt::format("{},{:.6f},{:.1f},{:.6f}\n", r.step, r.voltage_pu, r.action_mvar, r.reward);
    write_text(a.out, csv);
    int in_band = 0;
    for (const auto& r : trace.rows) in_band += rl::in_band(r.voltage_pu, env) ? 1 : 0;
    fmt::print("{} steps, {} in band, final voltage {:.4f} pu, SVC {:.1f} MVAR\n", trace.rows.size(), in_band,
               trace.rows.empty() ? env.nominal_voltage : trace.rows.back().voltage_pu,
               trace.rows.empty() ? 0.0 : trace.rows.back().svc_q_mvar);
    return kOk;
}

// ---------------------------------------------------------------------------

struct StudyArgs {
    std::string case_file;
    std::optional<double> pf_threshold;
    bool no_filters = false;
    std::optional<double> q_override;
    std::string out = "study_out";
    std::string policy;
};

int run_study_cmd(const StudyArgs& a) {
    auto c = load_study_case_file(a.case_file);
    if (!a.policy.empty()) c.policy = parse_study_policy(read_json_file(a.policy), c.policy);
    if (a.pf_threshold) c.policy.pf_threshold = *a.pf_threshold;
    if (a.no_filters) c.policy.filters_enabled = false;
    if (a.q_override) c.policy.q_override = *a.q_override;
    const auto rep = run_study(c);
    export_report(rep, a.out);
    std::cout << format_summary(rep);
    return rep.compliant() ? kOk : kNonCompliant;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pvgrid: steady-state grid integration studies for large PV plants"};
    app.require_subcommand(1);

    SizingArgs sz;
    auto* sizing = app.add_subcommand("sizing", "PV plant sizing chain");
    sizing->add_option("--params", sz.params_file, "PlantParams JSON file");
    sizing->add_option("--csv", sz.csv, "also write the report as CSV");
    sizing->add_option("--panels-per-string", sz.ns);
    sizing->add_option("--strings-parallel", sz.np);
    sizing->add_option("--panel-power-w", sz.panel_w);
    sizing->add_option("--plant-target-mw", sz.target_mw);
    sizing->add_option("--ilr", sz.ilr);
    sizing->add_option("--inverter-voltage-v", sz.v_inv);
    sizing->add_option("--inverter-pf", sz.pf);
    sizing->add_option("--lv-transformer-mva", sz.lv_mva);
    sizing->add_option("--lv-voltage-v", sz.lv_v);
    sizing->add_option("--mv-voltage-v", sz.mv_v);
    sizing->add_option("--hv-voltage-kv", sz.hv_kv);
    sizing->add_option("--hv-power-mw", sz.hv_mw);
    sizing->add_option("--hv-divisor", sz.divisor);
    sizing->add_option("--rating-margin", sz.margin);

    LoadflowArgs lf;
    auto* loadflow = app.add_subcommand("loadflow", "Newton-Raphson load flow");
    loadflow->add_option("case", lf.case_file)->required()->check(CLI::ExistingFile);
    loadflow->add_option("--csv", lf.csv, "output CSV (empty to skip)");
    loadflow->add_flag("--initial-values", lf.initial_values, "start from the case file's bus voltages");
    loadflow->add_option("--tolerance", lf.tolerance);
    loadflow->add_option("--max-iterations", lf.max_iterations);

    CompensateArgs cp;
    auto* compensate = app.add_subcommand("compensate", "size and apply an SVC at a bus");
    compensate->add_option("case", cp.case_file)->required()->check(CLI::ExistingFile);
    compensate->add_option("--bus", cp.bus)->required();
    compensate->add_option("--target-pf", cp.target_pf);
    compensate->add_option("--out", cp.out, "compensated case file");

    HarmonicsArgs hm;
    auto* harmonics = app.add_subcommand("harmonics", "harmonic scan and THD check");
    harmonics->add_option("case", hm.case_file)->required()->check(CLI::ExistingFile);
    harmonics->add_option("--orders", hm.orders, "comma separated orders, default: source orders");
    harmonics->add_option("--csv", hm.csv);
    harmonics->add_flag("--with-filters", hm.with_filters, "insert the case's filter bank first");

    StabilityArgs st;
    auto* stability = app.add_subcommand("stability", "loading margin and literal voltage margin");
    stability->add_option("case", st.case_file)->required()->check(CLI::ExistingFile);
    stability->add_option("--monitor", st.monitor);
    stability->add_option("--step", st.step);
    stability->add_option("--tolerance", st.tolerance);
    stability->add_option("--v-stable", st.v_stable);
    stability->add_option("--csv", st.csv);

    TrainArgs tr;
    auto* train = app.add_subcommand("train-svc", "train the SVC voltage controller");
    train->add_option("--config", tr.config, "environment JSON");
    train->add_option("--seed", tr.seed);
    train->add_option("--episodes", tr.episodes);
    train->add_option("--out", tr.out);
    train->add_option("--log", tr.log, "per-episode return CSV");

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval-svc", "greedy rollout of a trained controller");
    eval->add_option("--agent", ev.agent);
    eval->add_option("--disturbance", ev.disturbance, "none | step:<pu>@<step> | walk:<sigma>");
    eval->add_option("--out", ev.out);
    eval->add_option("--plant-case", ev.plant_case, "compute voltage with a load flow on this case");
    eval->add_option("--plant-bus", ev.plant_bus);

    StudyArgs sa;
    auto* study = app.add_subcommand("study", "run the full PF / harmonics / stability study");
    study->add_option("case", sa.case_file)->required()->check(CLI::ExistingFile);
    study->add_option("--pf-threshold", sa.pf_threshold);
    study->add_flag("--no-filters", sa.no_filters);
    study->add_option("--q-override", sa.q_override, "fixed SVC setting in MVAR");
    study->add_option("--out", sa.out);
    study->add_option("--policy", sa.policy, "study.json policy file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sizing) return run_sizing(sz);
        if (*loadflow) return run_loadflow(lf);
        if (*compensate) return run_compensate(cp);
        if (*harmonics) return run_harmonics(hm);
        if (*stability) return run_stability(st);
        if (*train) return run_train(tr);
        if (*eval) return run_eval(ev);
        if (*study) return run_study_cmd(sa);
    } catch (const DivergenceError& e) {
        fmt::print(stderr, "solver error: {}\n", e.what());
        return kSolverError;
    } catch (const SingularJacobianError& e) {
        fmt::print(stderr, "solver error: {}\n", e.what());
        return kSolverError;
    } catch (const ResonanceError& e) {
        fmt::print(stderr, "solver error: {}\n", e.what());
        return kSolverError;
    } catch (const CompensationLimitError& e) {
        fmt::print(stderr, "{}\n", e.what());
        return kNonCompliant;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kNonCompliant;
    }
    return kOk;
}
