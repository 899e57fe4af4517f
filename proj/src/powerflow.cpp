#include "pvgrid/powerflow.hpp"

#include "pvgrid/errors.hpp"
#include "pvgrid/units.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <complex>

namespace pvgrid {

namespace {

using cd = std::complex<double>;

enum class LimitState { None, AtMax, AtMin };

struct BusModel {
    BusKind kind = BusKind::PQ;
    double p_spec = 0;   // pu, net injection excluding Y-bus elements
    double q_fixed = 0;  // pu, load and constant-Q devices
    double q_gen = 0;    // pu, generator output when the bus behaves as PQ
    double v_set = 1.0;
    double q_min = 0, q_max = 0;  // pu
    bool has_generator = false;
    LimitState limit = LimitState::None;
    int switches = 0;
};

std::vector<BusModel> bus_models(const Network& net) {
    const double base = net.base_mva();
    std::vector<BusModel> m(net.bus_count());
    for (std::size_t i = 0; i < net.bus_count(); ++i) {
        m[i].kind = net.buses()[i].kind;
        m[i].v_set = net.buses()[i].initial_magnitude;
    }
    for (const auto& l : net.loads()) {
        auto& b = m[net.bus_index(l.bus)];
        b.p_spec -= l.active_power_mw / base;
        b.q_fixed -= l.reactive_power_mvar / base;
    }
    for (const auto& s : net.shunts())
        if (s.kind == ShuntKind::SvcFixedQ && s.svc_mode == SvcMode::ConstantQ)
            m[net.bus_index(s.bus)].q_fixed += s.q_mvar / base;

    for (const auto& g : net.generators()) {
        auto& b = m[net.bus_index(g.bus)];
        b.p_spec += g.active_power_mw / base;
        if (!b.has_generator) {
            b.v_set = g.voltage_setpoint;
            b.q_min = b.q_max = 0;
        }
        b.has_generator = true;
        b.q_min += g.q_min_mvar / base;
        b.q_max += g.q_max_mvar / base;
    }
    for (auto& b : m) {
        if (b.kind == BusKind::PV && !b.has_generator) b.kind = BusKind::PQ;
        if (b.kind == BusKind::PV && b.q_max - b.q_min <= 1e-12) {
            // fixed reactive output: behaves as PQ for good
            b.kind = BusKind::PQ;
            b.q_gen = b.q_min;
            b.switches = 1 << 20;
        } else if (b.kind == BusKind::PQ && b.has_generator) {
            b.q_gen = std::clamp(0.0, b.q_min, b.q_max);
        }
    }
    return m;
}

struct Indexing {
    std::vector<Eigen::Index> pvpq, pq;
};

Indexing make_indexing(const std::vector<BusModel>& m) {
    Indexing ix;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i].kind != BusKind::Slack) ix.pvpq.push_back(static_cast<Eigen::Index>(i));
        if (m[i].kind == BusKind::PQ) ix.pq.push_back(static_cast<Eigen::Index>(i));
    }
    return ix;
}

}  // namespace

std::size_t PowerFlowSolution::index_of(const std::string& bus) const {
    const auto it = std::find(bus_ids.begin(), bus_ids.end(), bus);
    if (it == bus_ids.end()) throw Error("unknown bus '" + bus + "' in solution");
    return static_cast<std::size_t>(it - bus_ids.begin());
}

PowerFlowSolution solve_load_flow(const Network& net, const SolverOptions& opt, const InitialState* warm) {
    if (!(opt.tolerance > 0)) throw Error("solver tolerance must be positive");
    if (opt.max_iterations < 1) throw Error("max_iterations must be >= 1");

    const auto n = static_cast<Eigen::Index>(net.bus_count());
    const Eigen::MatrixXcd y = admittance_matrix(net, 1.0);
    auto model = bus_models(net);

    Eigen::VectorXd vm(n), va(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bus = net.buses()[static_cast<std::size_t>(i)];
        const bool use_initial = !opt.flat_start;
        vm(i) = use_initial ? bus.initial_magnitude : 1.0;
        va(i) = use_initial ? bus.initial_angle : 0.0;
        if (warm) {
            vm(i) = warm->magnitude.at(static_cast<std::size_t>(i));
            va(i) = warm->angle.at(static_cast<std::size_t>(i));
        }
        const auto& bm = model[static_cast<std::size_t>(i)];
        if (bm.kind == BusKind::Slack || bm.kind == BusKind::PV) vm(i) = bm.v_set;
    }
    va(static_cast<Eigen::Index>(net.slack_index())) = 0.0;

    Indexing ix = make_indexing(model);
    Eigen::VectorXcd v(n), s(n);
    auto evaluate = [&] {
        for (Eigen::Index i = 0; i < n; ++i) v(i) = std::polar(vm(i), va(i));
        const Eigen::VectorXcd ibus = y * v;
        s = v.cwiseProduct(ibus.conjugate());
        return ibus;
    };
    auto mismatch = [&] {
        const auto npq = static_cast<Eigen::Index>(ix.pq.size());
        const auto npvpq = static_cast<Eigen::Index>(ix.pvpq.size());
        Eigen::VectorXd f(npvpq + npq);
        for (Eigen::Index k = 0; k < npvpq; ++k) {
            const auto i = ix.pvpq[static_cast<std::size_t>(k)];
            f(k) = s(i).real() - model[static_cast<std::size_t>(i)].p_spec;
        }
        for (Eigen::Index k = 0; k < npq; ++k) {
            const auto i = ix.pq[static_cast<std::size_t>(k)];
            const auto& bm = model[static_cast<std::size_t>(i)];
            f(npvpq + k) = s(i).imag() - (bm.q_fixed + bm.q_gen);
        }
        return f;
    };
    // Reactive limits: returns true if any bus changed type.
    auto enforce_limits = [&] {
        bool changed = false;
        for (std::size_t i = 0; i < model.size(); ++i) {
            auto& bm = model[i];
            if (!bm.has_generator || bm.switches > opt.max_limit_switches) continue;
            const auto ii = static_cast<Eigen::Index>(i);
            if (bm.kind == BusKind::PV) {
                const double qg = s(ii).imag() - bm.q_fixed;
                if (qg > bm.q_max + 1e-9) {
                    bm.kind = BusKind::PQ;
                    bm.q_gen = bm.q_max;
                    bm.limit = LimitState::AtMax;
                    ++bm.switches;
                    changed = true;
                } else if (qg < bm.q_min - 1e-9) {
                    bm.kind = BusKind::PQ;
                    bm.q_gen = bm.q_min;
                    bm.limit = LimitState::AtMin;
                    ++bm.switches;
                    changed = true;
                }
            } else if (bm.kind == BusKind::PQ && bm.limit != LimitState::None) {
                const bool back = (bm.limit == LimitState::AtMax && vm(ii) > bm.v_set + 1e-9) ||
                                  (bm.limit == LimitState::AtMin && vm(ii) < bm.v_set - 1e-9);
                if (back && bm.switches < opt.max_limit_switches) {
                    bm.kind = BusKind::PV;
                    bm.limit = LimitState::None;
                    vm(ii) = bm.v_set;
                    ++bm.switches;
                    changed = true;
                }
            }
        }
        if (changed) ix = make_indexing(model);
        return changed;
    };

    int iterations = 0;
    double norm = 0;
    Eigen::VectorXcd ibus = evaluate();
    for (;;) {
        Eigen::VectorXd f = mismatch();
        norm = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
        if (!std::isfinite(norm))
            throw DivergenceError(iterations, norm, fmt::format("load flow diverged: non-finite mismatch after {} iterations", iterations));
        if (norm < 1e-3 && enforce_limits()) {
            ibus = evaluate();
            f = mismatch();
            norm = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
        }
        if (norm <= opt.tolerance) break;
        if (iterations >= opt.max_iterations)
            throw DivergenceError(iterations, norm,
                                  fmt::format("load flow did not converge in {} iterations (max mismatch {:.3e} pu)", iterations, norm));

        // dS/dVa and dS/dVm in complex form
        const Eigen::VectorXcd vnorm = v.cwiseQuotient(vm.cast<cd>());
        const Eigen::MatrixXcd dva =
            cd(0, 1) * v.asDiagonal() * (Eigen::MatrixXcd(ibus.asDiagonal()) - y * v.asDiagonal()).conjugate();
        const Eigen::MatrixXcd dvm = v.asDiagonal() * (y * vnorm.asDiagonal()).conjugate() +
                                     Eigen::MatrixXcd(ibus.conjugate().asDiagonal()) * vnorm.asDiagonal();

        const auto npvpq = static_cast<Eigen::Index>(ix.pvpq.size());
        const auto npq = static_cast<Eigen::Index>(ix.pq.size());
        Eigen::MatrixXd jac(npvpq + npq, npvpq + npq);
        for (Eigen::Index r = 0; r < npvpq; ++r) {
            const auto i = ix.pvpq[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < npvpq; ++c) jac(r, c) = dva(i, ix.pvpq[static_cast<std::size_t>(c)]).real();
            for (Eigen::Index c = 0; c < npq; ++c) jac(r, npvpq + c) = dvm(i, ix.pq[static_cast<std::size_t>(c)]).real();
        }
        for (Eigen::Index r = 0; r < npq; ++r) {
            const auto i = ix.pq[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < npvpq; ++c)
                jac(npvpq + r, c) = dva(i, ix.pvpq[static_cast<std::size_t>(c)]).imag();
            for (Eigen::Index c = 0; c < npq; ++c)
                jac(npvpq + r, npvpq + c) = dvm(i, ix.pq[static_cast<std::size_t>(c)]).imag();
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        const double rcond = lu.rcond();
        if (!(rcond > 1e-14))
            throw SingularJacobianError(iterations, fmt::format("singular Jacobian at iteration {} (rcond {:.2e}): islanded bus or voltage collapse", iterations, rcond));
        const Eigen::VectorXd dx = -lu.solve(f);
        if (!dx.allFinite())
            throw DivergenceError(iterations, norm, "load flow diverged: non-finite Newton step");

        for (Eigen::Index k = 0; k < npvpq; ++k) va(ix.pvpq[static_cast<std::size_t>(k)]) += dx(k);
        for (Eigen::Index k = 0; k < npq; ++k) vm(ix.pq[static_cast<std::size_t>(k)]) += dx(npvpq + k);
        ++iterations;
        ibus = evaluate();
    }

    const double base = net.base_mva();
    PowerFlowSolution sol;
    sol.iterations = iterations;
    sol.max_mismatch = norm;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        sol.bus_ids.push_back(net.buses()[ui].id);
        sol.magnitude.push_back(vm(i));
        sol.angle.push_back(va(i));
        sol.p_injection_mw.push_back(s(i).real() * base);
        sol.q_injection_mvar.push_back(s(i).imag() * base);
        const auto& bm = model[ui];
        double qg = 0;
        if (bm.kind == BusKind::Slack || bm.kind == BusKind::PV) qg = s(i).imag() - bm.q_fixed;
        else if (bm.has_generator) qg = bm.q_gen;
        sol.generator_q_mvar.push_back(qg * base);
        sol.final_kind.push_back(bm.kind);
    }
    const auto slack = static_cast<Eigen::Index>(net.slack_index());
    {
        const auto& bm = model[net.slack_index()];
        double load_p = 0;
        for (const auto& l : net.loads())
            if (net.bus_index(l.bus) == net.slack_index()) load_p += l.active_power_mw;
        sol.slack_p_mw = s(slack).real() * base + load_p;
        sol.slack_q_mvar = (s(slack).imag() - bm.q_fixed) * base;
    }

    for (const auto& br : net.branches()) {
        BranchFlow bf;
        bf.id = br.id;
        if (br.in_service) {
            const auto f = static_cast<Eigen::Index>(net.bus_index(br.from_bus));
            const auto t = static_cast<Eigen::Index>(net.bus_index(br.to_bus));
            const cd ys = 1.0 / cd(br.resistance, br.reactance - br.series_capacitor_reactance);
            const cd ysh(0.0, br.susceptance / 2.0);
            const double tap = br.tap_ratio;
            const cd i_f = (ys + ysh) / (tap * tap) * v(f) - ys / tap * v(t);
            const cd i_t = (ys + ysh) * v(t) - ys / tap * v(f);
            const cd s_f = v(f) * std::conj(i_f) * base;
            const cd s_t = v(t) * std::conj(i_t) * base;
            bf.p_from_mw = s_f.real();
            bf.q_from_mvar = s_f.imag();
            bf.p_to_mw = s_t.real();
            bf.q_to_mvar = s_t.imag();
            bf.i_from_a = std::abs(i_f) * units::current_base_amp(net.buses()[static_cast<std::size_t>(f)].nominal_kv, base);
            bf.i_to_a = std::abs(i_t) * units::current_base_amp(net.buses()[static_cast<std::size_t>(t)].nominal_kv, base);
        }
        sol.branches.push_back(bf);
    }
    return sol;
}

PowerQuantities power_quantities(double p_mw, double q_mvar, double line_kv) {
    PowerQuantities pq;
    pq.p_mw = p_mw;
    pq.q_mvar = q_mvar;
    pq.s_mva = std::hypot(p_mw, q_mvar);
    // below a watt the direction is numerical noise
    if (pq.s_mva > 1e-6) {
        const double mag = std::abs(p_mw) / pq.s_mva;
        const bool opposed = (p_mw > 0 && q_mvar < 0) || (p_mw < 0 && q_mvar > 0);
        pq.pf = opposed ? -mag : mag;
    }
    if (!(line_kv > 0)) throw Error("line voltage must be positive");
    pq.current_a = pq.s_mva * 1e3 / (units::sqrt3 * line_kv);
    return pq;
}

PowerQuantities bus_power_quantities(const Network& net, const PowerFlowSolution& sol, const std::string& bus) {
    const auto i = sol.index_of(bus);
    return power_quantities(sol.p_injection_mw[i], sol.q_injection_mvar[i], net.buses()[net.bus_index(bus)].nominal_kv);
}

PowerQuantities branch_power_quantities(const Network& net, const PowerFlowSolution& sol, const std::string& branch,
                                        const std::string& bus) {
    const auto k = net.branch_index(branch);
    const auto& br = net.branches()[k];
    const auto& flow = sol.branches[k];
    double p = 0, q = 0;
    if (br.to_bus == bus) {
        p = -flow.p_to_mw;
        q = -flow.q_to_mvar;
    } else if (br.from_bus == bus) {
        p = -flow.p_from_mw;
        q = -flow.q_from_mvar;
    } else {
        throw Error("branch '" + branch + "' is not connected to bus '" + bus + "'");
    }
    return power_quantities(p, q, net.buses()[net.bus_index(bus)].nominal_kv);
}

std::vector<MeterPoint> parse_meters(const nlohmann::json& j) {
    std::vector<MeterPoint> out;
    if (!j.contains("metering")) return out;
    for (const auto& m : j.at("metering")) {
        MeterPoint mp;
        mp.bus = m.at("bus").get<std::string>();
        mp.label = m.value("label", mp.bus);
        if (m.contains("branch") && !m.at("branch").is_null()) mp.branch = m.at("branch").get<std::string>();
        out.push_back(std::move(mp));
    }
    return out;
}

nlohmann::json to_json(const MeterPoint& m) {
    nlohmann::json j{{"label", m.label}, {"bus", m.bus}};
    if (m.branch) j["branch"] = *m.branch;
    return j;
}

PowerQuantities meter_quantities(const Network& net, const PowerFlowSolution& sol, const MeterPoint& m) {
    return m.branch ? branch_power_quantities(net, sol, *m.branch, m.bus) : bus_power_quantities(net, sol, m.bus);
}

PowerBalance power_balance(const Network& net, const PowerFlowSolution& sol) {
    PowerBalance pb;
    pb.generation_mw = sol.slack_p_mw;
    for (const auto& g : net.generators())
        if (net.bus_index(g.bus) != net.slack_index()) pb.generation_mw += g.active_power_mw;
    for (const auto& l : net.loads()) pb.load_mw += l.active_power_mw;
    for (const auto& f : sol.branches) pb.losses_mw += f.loss_mw();
    for (const auto& sh : net.shunts()) {
        if (sh.kind != ShuntKind::SingleTunedFilter) continue;
        const auto i = net.bus_index(sh.bus);
        const auto y = filter_admittance_pu(*sh.filter, net.buses()[i].nominal_kv, net.base_mva(), 1.0);
        pb.shunt_mw += sol.magnitude[i] * sol.magnitude[i] * y.real() * net.base_mva();
    }
    return pb;
}

}  // namespace pvgrid
