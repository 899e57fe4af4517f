#include "pvgrid/stability.hpp"

#include "pvgrid/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <optional>

namespace pvgrid {

double literal_percent_b(double v_stable, double v_operating) {
    if (!(v_stable > 0)) throw Error("V_stable must be positive");
    return (v_stable - v_operating) / v_stable * 100.0;
}

double loading_margin_percent(double lambda) { return (lambda - 1.0) / lambda * 100.0; }

Network scale_loads(const Network& net, double scale) {
    NetworkData d = net.data();
    for (auto& l : d.loads) {
        l.active_power_mw *= scale;
        l.reactive_power_mvar *= scale;
    }
    return Network(std::move(d));
}

namespace {

// Warm start first, flat start as a second chance.
std::optional<PowerFlowSolution> try_solve(const Network& net, const SolverOptions& opt, const InitialState* warm) {
    if (warm) {
        try {
            SolverOptions o = opt;
            o.flat_start = false;
            return solve_load_flow(net, o, warm);
        } catch (const DivergenceError&) {
        } catch (const SingularJacobianError&) {
        }
    }
    try {
        SolverOptions o = opt;
        o.flat_start = true;
        return solve_load_flow(net, o);
    } catch (const DivergenceError&) {
    } catch (const SingularJacobianError&) {
    }
    return std::nullopt;
}

InitialState state_of(const PowerFlowSolution& s) { return {s.magnitude, s.angle}; }

}  // namespace

LoadingMarginResult loading_margin(const Network& net, const LoadingMarginOptions& opt) {
    if (!(opt.step > 0) || !(opt.refine_tolerance > 0)) throw Error("loading margin: step and tolerance must be positive");

    const auto base = try_solve(net, opt.solver, nullptr);
    if (!base) throw Error("loading margin: base case load flow is infeasible");

    std::size_t monitor = 0;
    if (opt.monitor_bus.empty()) {
        monitor = static_cast<std::size_t>(std::min_element(base->magnitude.begin(), base->magnitude.end()) -
                                           base->magnitude.begin());
    } else {
        monitor = net.bus_index(opt.monitor_bus);
    }

    LoadingMarginResult res;
    res.margin.bus = net.buses()[monitor].id;
    res.margin.v_stable = opt.v_stable;
    res.margin.v_operating = base->magnitude[monitor];
    res.margin.literal_percent_b = literal_percent_b(opt.v_stable, res.margin.v_operating);
    res.nose_curve.push_back({1.0, base->magnitude[monitor]});

    InitialState warm = state_of(*base);
    double lo = 1.0;
    std::optional<double> hi;
    // index arithmetic keeps the sampled scales free of accumulated rounding
    for (long k = 1;; ++k) {
        const double lambda = 1.0 + static_cast<double>(k) * opt.step;
        if (lambda > opt.max_scale) {
            res.margin.reached_scale_cap = true;
            break;
        }
        const auto s = try_solve(scale_loads(net, lambda), opt.solver, &warm);
        if (!s) {
            hi = lambda;
            break;
        }
        lo = lambda;
        warm = state_of(*s);
        res.nose_curve.push_back({lambda, s->magnitude[monitor]});
    }
    if (hi) {
        double upper = *hi;
        while (upper - lo > opt.refine_tolerance) {
            const double mid = 0.5 * (lo + upper);
            const auto s = try_solve(scale_loads(net, mid), opt.solver, &warm);
            if (s) {
                lo = mid;
                warm = state_of(*s);
                res.nose_curve.push_back({mid, s->magnitude[monitor]});
            } else {
                upper = mid;
            }
        }
    }
    std::sort(res.nose_curve.begin(), res.nose_curve.end(), [](const auto& a, const auto& b) { return a.scale < b.scale; });
    res.margin.collapse_scale = lo;
    res.margin.loading_margin_percent = loading_margin_percent(lo);
    return res;
}

}  // namespace pvgrid
