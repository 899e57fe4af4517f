#pragma once

#include <json.hpp>

namespace pvgrid {

struct PlantParams {
    int panels_per_string = 25;
    int strings_parallel = 336;
    double panel_power_w = 500;
    double plant_target_mw = 1000;
    double inverter_loading_ratio = 1.2;
    double inverter_ac_voltage_v = 630;
    double inverter_power_factor = 1.0;
    double lv_transformer_mva = 5;
    double lv_voltage_v = 630;
    double mv_voltage_v = 33000;
    double hv_voltage_kv = 400;
    double hv_plant_power_mw = 500;  // per HV transformer
    double hv_divisor = 0.98;        // efficiency or power factor, ambiguous input
    double rating_margin = 1.3;

    bool operator==(const PlantParams&) const = default;
};

struct PlantSizingReport {
    long total_panels = 0;
    double array_power_mw = 0;
    double arrays_ratio = 0;  // plant_target / array_power before rounding
    long arrays_required = 0;
    double inverter_ac_power_mw = 0;
    double inverter_current_a = 0;
    double lv_current_a = 0;
    double mv_current_a = 0;
    double hv_apparent_power_mva = 0;
    double hv_current_a = 0;
    double recommended_rating_mva = 0;
};

void validate(const PlantParams& p);
PlantSizingReport size_plant(const PlantParams& p);

/// I = S / (sqrt(3) V), SI units.
double line_current(double apparent_power_va, double line_voltage_v);

struct TransformerRating {
    double apparent_power_mva = 0;
    double recommended_mva = 0;
};
TransformerRating transformer_rating(double active_power_mw, double divisor, double margin);

PlantParams parse_plant_params(const nlohmann::json& j);
nlohmann::json to_json(const PlantParams& p);
nlohmann::json to_json(const PlantSizingReport& r);

}  // namespace pvgrid
