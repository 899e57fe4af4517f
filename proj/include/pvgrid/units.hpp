#pragma once

#include <cmath>
#include <numbers>

// Per-unit conversion on a common MVA base. Voltages are line-to-line kV.
namespace pvgrid::units {

inline constexpr double sqrt3 = std::numbers::sqrt3;

inline double impedance_base_ohm(double base_kv, double base_mva) { return base_kv * base_kv / base_mva; }

inline double current_base_amp(double base_kv, double base_mva) { return base_mva * 1e3 / (sqrt3 * base_kv); }

inline double ohm_to_pu(double ohm, double base_kv, double base_mva) {
    return ohm / impedance_base_ohm(base_kv, base_mva);
}
inline double pu_to_ohm(double pu, double base_kv, double base_mva) {
    return pu * impedance_base_ohm(base_kv, base_mva);
}

// Susceptance given in microsiemens.
inline double microsiemens_to_pu(double us, double base_kv, double base_mva) {
    return us * 1e-6 * impedance_base_ohm(base_kv, base_mva);
}
inline double pu_to_microsiemens(double pu, double base_kv, double base_mva) {
    return pu / impedance_base_ohm(base_kv, base_mva) * 1e6;
}

inline double power_to_pu(double mw_or_mvar, double base_mva) { return mw_or_mvar / base_mva; }
inline double pu_to_power(double pu, double base_mva) { return pu * base_mva; }

/// Impedance given in percent on the device's own rating, re-expressed on the system base.
inline double own_rating_to_system_pu(double percent, double rating_mva, double base_mva) {
    return percent / 100.0 * base_mva / rating_mva;
}

}  // namespace pvgrid::units
