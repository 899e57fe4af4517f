#pragma once

#include "pvgrid/network.hpp"
#include "pvgrid/powerflow.hpp"

#include <string>
#include <vector>

namespace pvgrid {

struct StabilityMargin {
    std::string bus;  // bus whose voltage is reported
    double v_stable = 1.0;
    double v_operating = 1.0;
    double literal_percent_b = 0;
    double loading_margin_percent = 0;
    double collapse_scale = 1;  // lambda at the last solvable point
    bool reached_scale_cap = false;
};

/// (V_stable - V_operating) / V_stable x 100, sign kept.
double literal_percent_b(double v_stable, double v_operating);

/// Copy of `network` with every load multiplied by `scale` at constant power factor.
Network scale_loads(const Network& network, double scale);

struct LoadingMarginOptions {
    double step = 0.01;
    double refine_tolerance = 1e-4;
    double max_scale = 100;
    double v_stable = 1.0;
    std::string monitor_bus;  // empty: lowest-voltage bus of the base case
    SolverOptions solver;
};

struct NosePoint {
    double scale;
    double voltage_pu;
};

struct LoadingMarginResult {
    StabilityMargin margin;
    std::vector<NosePoint> nose_curve;  // feasible points, ascending scale
};

/// Steps the load scale up until the load flow fails, then bisects. Throws when the base case fails.
LoadingMarginResult loading_margin(const Network& network, const LoadingMarginOptions& options = {});

/// Margin from a collapse scale: (lambda - 1) / lambda x 100.
double loading_margin_percent(double collapse_scale);

}  // namespace pvgrid
