#pragma once

#include "pvgrid/network.hpp"
#include "pvgrid/powerflow.hpp"

#include <string>

namespace pvgrid {

struct CompensationPlan {
    std::string bus;
    double active_power_mw = 0;
    double pf_actual = 1;
    double pf_target = 1;
    double angle_before = 0;  // rad
    double angle_after = 0;   // rad
    double required_q_mvar = 0;  // magnitude from the tan difference
    double injection_mvar = 0;   // signed SVC setting, positive = capacitive
};

/// Q_c = P (tan(acos pf_actual) - tan(acos pf_target)). Positive when the target is higher.
double required_compensation(double p_mw, double pf_actual, double pf_target);

/// Rounds a computed rating to the nearest multiple of `step` (e.g. 6528.6 -> 6500 for step 500).
double round_rating(double q_mvar, double step);

/// Plan for a metered flow. Lagging flow gets a capacitive injection, leading flow an absorbing one.
/// `flow_into_bus` tells whether the quantities are power delivered into the bus (branch meter)
/// or the bus net injection into the network.
CompensationPlan plan_compensation(const PowerQuantities& measured, const std::string& bus, double pf_target,
                                   bool flow_into_bus = true);

CompensationPlan plan_compensation(const Network& network, const PowerFlowSolution& solution, const MeterPoint& meter,
                                   double pf_target);

/// Returns a copy of `network` with a constant-Q SVC of `q_injection_mvar` at `bus`.
/// An existing SVC at the bus is re-set rather than duplicated.
Network apply_svc(const Network& network, const std::string& bus, double q_injection_mvar, double q_limit_mvar,
                  SvcMode mode = SvcMode::ConstantQ);

/// Reactive setting of the SVC at `bus`, 0 when there is none.
double svc_setting_mvar(const Network& network, const std::string& bus);

}  // namespace pvgrid
