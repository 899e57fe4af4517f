#pragma once

#include "pvgrid/network.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pvgrid {

struct SolverOptions {
    double tolerance = 1e-8;  // max power mismatch, pu
    int max_iterations = 50;
    bool flat_start = true;
    int max_limit_switches = 8;  // per bus, PV<->PQ toggles before the bus is frozen as PQ
};

struct BranchFlow {
    std::string id;
    double p_from_mw = 0, q_from_mvar = 0;  // leaving the from bus into the branch
    double p_to_mw = 0, q_to_mvar = 0;      // leaving the to bus into the branch
    double i_from_a = 0, i_to_a = 0;
    double loss_mw() const { return p_from_mw + p_to_mw; }
    double loss_mvar() const { return q_from_mvar + q_to_mvar; }
};

struct PowerFlowSolution {
    std::vector<std::string> bus_ids;
    std::vector<double> magnitude;  // pu
    std::vector<double> angle;      // rad
    std::vector<double> p_injection_mw;    // net injection into the network
    std::vector<double> q_injection_mvar;
    std::vector<double> generator_q_mvar;  // total generator reactive output per bus
    std::vector<BranchFlow> branches;
    std::vector<BusKind> final_kind;       // after reactive-limit switching
    int iterations = 0;
    double max_mismatch = 0;  // pu

    std::size_t index_of(const std::string& bus) const;
    double slack_p_mw = 0, slack_q_mvar = 0;
};

/// Warm start values for a solve; used when flat_start is false.
struct InitialState {
    std::vector<double> magnitude;
    std::vector<double> angle;
};

/// Polar Newton-Raphson load flow. Throws DivergenceError or SingularJacobianError.
PowerFlowSolution solve_load_flow(const Network& network, const SolverOptions& options = {},
                                  const InitialState* warm_start = nullptr);

/// Power-factor sign convention: magnitude |P|/S, negative when Q flows against P.
struct PowerQuantities {
    double p_mw = 0;
    double q_mvar = 0;
    double s_mva = 0;
    std::optional<double> pf;  // empty means no flow (S = 0)
    double current_a = 0;
};

/// S, PF and line current for a (P, Q) pair at a line-to-line voltage.
PowerQuantities power_quantities(double p_mw, double q_mvar, double line_kv);

/// Net injection quantities at a bus; current at the bus nominal voltage.
PowerQuantities bus_power_quantities(const Network& network, const PowerFlowSolution& solution, const std::string& bus);

/// Flow delivered into `bus` through `branch` (positive = into the bus).
PowerQuantities branch_power_quantities(const Network& network, const PowerFlowSolution& solution,
                                        const std::string& branch, const std::string& bus);

/// Named metering point: a bus, optionally seen through one branch.
struct MeterPoint {
    std::string label;
    std::string bus;
    std::optional<std::string> branch;

    bool operator==(const MeterPoint&) const = default;
};

std::vector<MeterPoint> parse_meters(const nlohmann::json& case_json);
nlohmann::json to_json(const MeterPoint& m);
PowerQuantities meter_quantities(const Network& network, const PowerFlowSolution& solution, const MeterPoint& m);

struct PowerBalance {
    double generation_mw = 0;  // slack + generators
    double load_mw = 0;
    double losses_mw = 0;
    double shunt_mw = 0;  // filter resistance draw
};
PowerBalance power_balance(const Network& network, const PowerFlowSolution& solution);

}  // namespace pvgrid
