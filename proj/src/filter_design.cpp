#include "pvgrid/filter_design.hpp"

#include "pvgrid/errors.hpp"

#include <cmath>
#include <numbers>

namespace pvgrid {

namespace {
constexpr double two_pi = 2.0 * std::numbers::pi;
}

FilterDesign design_single_tuned_filter(double q_per_phase_var, double v_ln_volts, double fundamental_hz,
                                        int target_order, double quality_factor) {
    if (!(q_per_phase_var > 0.0) || !(v_ln_volts > 0.0) || !(fundamental_hz > 0.0) || !(quality_factor > 0.0))
        throw Error("filter design: reactive power, voltage, frequency and quality factor must be positive");
    if (target_order < 2) throw Error("filter design: target order must be >= 2");

    FilterDesign f;
    f.target_order = target_order;
    f.reactive_power_per_phase_var = q_per_phase_var;
    f.line_to_neutral_voltage_v = v_ln_volts;
    f.fundamental_hz = fundamental_hz;
    f.quality_factor = quality_factor;
    f.capacitance_f = q_per_phase_var / (two_pi * fundamental_hz * v_ln_volts * v_ln_volts);
    const double tuned = target_order * fundamental_hz;
    const double w = two_pi * tuned;
    f.inductance_h = 1.0 / (w * w * f.capacitance_f);
    f.tuned_frequency_hz = resonant_frequency(f.inductance_h, f.capacitance_f);
    f.resistance_ohm = w * f.inductance_h / quality_factor;
    return f;
}

double resonant_frequency(double inductance_h, double capacitance_f) {
    if (!(inductance_h > 0.0) || !(capacitance_f > 0.0)) throw Error("resonant frequency: L and C must be positive");
    return 1.0 / (two_pi * std::sqrt(inductance_h * capacitance_f));
}

std::complex<double> filter_impedance_ohm(const FilterDesign& f, double harmonic_order) {
    const double w = two_pi * f.fundamental_hz * harmonic_order;
    return {f.resistance_ohm, w * f.inductance_h - 1.0 / (w * f.capacitance_f)};
}

double filter_fundamental_mvar(const FilterDesign& f, double line_kv) {
    const auto z = filter_impedance_ohm(f, 1.0);
    const double v = line_kv * 1e3;
    // S = V^2 / conj(Z) over three phases with V line-to-line
    const auto s = v * v / std::conj(z);
    return -s.imag() / 1e6;
}

}  // namespace pvgrid
