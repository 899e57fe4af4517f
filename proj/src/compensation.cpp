#include "pvgrid/compensation.hpp"

#include "pvgrid/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace pvgrid {

namespace {

void check_pf(double pf, const char* name) {
    if (!(pf > 0.0 && pf <= 1.0)) throw Error(fmt::format("{} must be in (0, 1], got {}", name, pf));
}

}  // namespace

double required_compensation(double p_mw, double pf_actual, double pf_target) {
    check_pf(pf_actual, "actual power factor");
    check_pf(pf_target, "target power factor");
    if (!(p_mw > 0)) throw Error(fmt::format("active power must be positive, got {}", p_mw));
    return p_mw * (std::tan(std::acos(pf_actual)) - std::tan(std::acos(pf_target)));
}

double round_rating(double q_mvar, double step) {
    if (!(step > 0)) throw Error("rounding step must be positive");
    return std::round(q_mvar / step) * step;
}

CompensationPlan plan_compensation(const PowerQuantities& m, const std::string& bus, double pf_target,
                                   bool flow_into_bus) {
    if (!m.pf) throw Error("no power flow at '" + bus + "': power factor undefined");
    CompensationPlan plan;
    plan.bus = bus;
    plan.active_power_mw = std::abs(m.p_mw);
    plan.pf_actual = std::abs(*m.pf);
    plan.pf_target = pf_target;
    plan.angle_before = std::acos(plan.pf_actual);
    plan.angle_after = std::acos(pf_target);
    plan.required_q_mvar = required_compensation(plan.active_power_mw, plan.pf_actual, pf_target);
    // Injecting q at the bus lowers the reactive power drawn into it by roughly q.
    const double toward = m.q_mvar >= 0 ? 1.0 : -1.0;
    plan.injection_mvar = (flow_into_bus ? toward : -toward) * plan.required_q_mvar;
    return plan;
}

CompensationPlan plan_compensation(const Network& net, const PowerFlowSolution& sol, const MeterPoint& meter,
                                   double pf_target) {
    return plan_compensation(meter_quantities(net, sol, meter), meter.bus, pf_target, meter.branch.has_value());
}

Network apply_svc(const Network& net, const std::string& bus, double q, double q_limit, SvcMode mode) {
    if (!net.find_bus(bus)) throw ValidationError(ValidationCode::DanglingReference, "unknown bus '" + bus + "'");
    if (!(q_limit >= 0)) throw Error("SVC limit must be nonnegative");
    if (!std::isfinite(q) || std::abs(q) > q_limit * (1 + 1e-12))
        throw CompensationLimitError(fmt::format("SVC limit exceeded: {:.1f} MVAR requested, limit +/-{:.1f} MVAR", q, q_limit));

    NetworkData data = net.data();
    for (auto& sh : data.shunts) {
        if (sh.kind == ShuntKind::SvcFixedQ && sh.bus == bus) {
            sh.q_mvar = q;
            sh.q_limit_mvar = q_limit;
            sh.svc_mode = mode;
            return Network(std::move(data));
        }
    }
    Shunt sh;
    sh.id = "SVC_" + bus;
    sh.bus = bus;
    sh.kind = ShuntKind::SvcFixedQ;
    sh.q_mvar = q;
    sh.q_limit_mvar = q_limit;
    sh.svc_mode = mode;
    data.shunts.push_back(sh);
    return Network(std::move(data));
}

double svc_setting_mvar(const Network& net, const std::string& bus) {
    double q = 0;
    for (const auto& sh : net.shunts())
        if (sh.kind == ShuntKind::SvcFixedQ && sh.bus == bus) q += sh.q_mvar;
    return q;
}

}  // namespace pvgrid
