#pragma once

#include "pvgrid/network.hpp"

#include <cmath>
#include <random>
#include <string>

namespace testing {

inline std::string data_file(const std::string& name) { return std::string(PVGRID_DATA_DIR) + "/" + name; }

inline nlohmann::json reference_json() { return pvgrid::read_json_file(data_file("reference_case.json")); }

// Slack 1.0 pu feeding a PQ load through one line.
inline nlohmann::json two_bus_json(double x, double p_mw, double q_mvar, double r = 0.0) {
    return {{"base_mva", 100.0},
            {"buses", {{{"id", "S"}, {"kind", "slack"}, {"nominal_kv", 132.0}}, {{"id", "L"}, {"kind", "pq"}, {"nominal_kv", 132.0}}}},
            {"branches", {{{"id", "B1"}, {"from_bus", "S"}, {"to_bus", "L"}, {"r_pu", r}, {"x_pu", x}}}},
            {"loads", {{{"id", "LD"}, {"bus", "L"}, {"p_mw", p_mw}, {"q_mvar", q_mvar}}}}};
}

// Load voltage of the lossless 2-bus case with a 1.0 pu source:
// V^4 + (2Qx - 1) V^2 + x^2 (P^2 + Q^2) = 0, upper root.
inline double two_bus_voltage(double x, double p, double q) {
    const double b = 2 * q * x - 1;
    const double c = x * x * (p * p + q * q);
    return std::sqrt((-b + std::sqrt(b * b - 4 * c)) / 2);
}

// Random connected network: a spanning tree plus a few extra branches, one slack,
// some PV generators with wide limits, loads of mixed sign.
inline nlohmann::json random_network_json(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    nlohmann::json buses = nlohmann::json::array(), branches = nlohmann::json::array(), loads = nlohmann::json::array(),
                   gens = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        const bool pv = i > 0 && u(rng) < 0.3;
        buses.push_back({{"id", "B" + std::to_string(i)}, {"kind", i == 0 ? "slack" : (pv ? "pv" : "pq")}, {"nominal_kv", 110.0}});
        if (pv) gens.push_back({{"bus", "B" + std::to_string(i)}, {"p_mw", 20 + 40 * u(rng)}, {"voltage_setpoint", 0.98 + 0.05 * u(rng)}});
        if (i > 0) {
            loads.push_back({{"bus", "B" + std::to_string(i)}, {"p_mw", 10 + 60 * u(rng)}, {"q_mvar", -10 + 40 * u(rng)}});
            const int parent = static_cast<int>(u(rng) * i);
            branches.push_back({{"id", "T" + std::to_string(i)}, {"from_bus", "B" + std::to_string(parent)}, {"to_bus", "B" + std::to_string(i)},
                                {"r_pu", 0.005 + 0.02 * u(rng)}, {"x_pu", 0.02 + 0.08 * u(rng)}, {"b_pu", 0.02 * u(rng)}});
        }
    }
    const int extra = n / 3;
    for (int k = 0; k < extra; ++k) {
        const int a = static_cast<int>(u(rng) * n), b = static_cast<int>(u(rng) * n);
        if (a == b) continue;
        branches.push_back({{"id", "X" + std::to_string(k)}, {"from_bus", "B" + std::to_string(a)}, {"to_bus", "B" + std::to_string(b)},
                            {"r_pu", 0.005 + 0.02 * u(rng)}, {"x_pu", 0.03 + 0.1 * u(rng)}, {"b_pu", 0.0},
                            {"tap_ratio", u(rng) < 0.3 ? 0.95 + 0.1 * u(rng) : 1.0}});
    }
    return {{"base_mva", 100.0}, {"buses", buses}, {"branches", branches}, {"loads", loads}, {"generators", gens}};
}

}  // namespace testing
