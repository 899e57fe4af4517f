#pragma once

#include <complex>

namespace pvgrid {

/// Series R-L-C branch tuned to one harmonic order. Per-phase values of a wye bank.
struct FilterDesign {
    int target_order = 5;
    double reactive_power_per_phase_var = 0.0;  // capacitor rating at the fundamental
    double line_to_neutral_voltage_v = 0.0;
    double fundamental_hz = 50.0;
    double capacitance_f = 0.0;
    double inductance_h = 0.0;
    double tuned_frequency_hz = 0.0;
    double quality_factor = 50.0;
    double resistance_ohm = 0.0;

    bool operator==(const FilterDesign&) const = default;
};

inline constexpr double kDefaultFilterQualityFactor = 50.0;

/// C sized from the per-phase reactive rating at the fundamental, L placed so that
/// the branch resonates at exactly target_order x fundamental, R = X_L(tuned) / Q.
FilterDesign design_single_tuned_filter(double q_per_phase_var, double v_ln_volts, double fundamental_hz,
                                        int target_order, double quality_factor = kDefaultFilterQualityFactor);

/// Series resonance frequency of an L-C pair.
double resonant_frequency(double inductance_h, double capacitance_f);

/// Per-phase branch impedance in ohms at harmonic order h (h = 1 is the fundamental).
std::complex<double> filter_impedance_ohm(const FilterDesign& f, double harmonic_order);

/// Three-phase reactive power the filter delivers at the fundamental for a given line-to-line voltage.
double filter_fundamental_mvar(const FilterDesign& f, double line_kv);

}  // namespace pvgrid
