#include "pvgrid/plant_sizing.hpp"

#include "pvgrid/errors.hpp"
#include "pvgrid/units.hpp"

#include <fmt/format.h>

#include <cmath>

namespace pvgrid {

namespace {

void positive(double v, const char* name) {
    if (!(v > 0) || !std::isfinite(v)) throw Error(fmt::format("{} must be positive, got {}", name, v));
}

}  // namespace

void validate(const PlantParams& p) {
    positive(p.panels_per_string, "panels_per_string");
    positive(p.strings_parallel, "strings_parallel");
    positive(p.panel_power_w, "panel_power_w");
    positive(p.plant_target_mw, "plant_target_mw");
    positive(p.inverter_ac_voltage_v, "inverter_ac_voltage_v");
    positive(p.inverter_power_factor, "inverter_power_factor");
    positive(p.lv_transformer_mva, "lv_transformer_mva");
    positive(p.lv_voltage_v, "lv_voltage_v");
    positive(p.mv_voltage_v, "mv_voltage_v");
    positive(p.hv_voltage_kv, "hv_voltage_kv");
    positive(p.hv_plant_power_mw, "hv_plant_power_mw");
    positive(p.hv_divisor, "hv_divisor");
    positive(p.rating_margin, "rating_margin");
    if (p.inverter_power_factor > 1) throw Error("inverter_power_factor must not exceed 1");
    if (p.hv_divisor > 1) throw Error("hv_divisor must not exceed 1");
    if (!(p.inverter_loading_ratio >= 1)) throw Error("inverter_loading_ratio must be >= 1");
}

double line_current(double s_va, double v) {
    if (!(v > 0)) throw Error("line voltage must be positive");
    if (!(s_va >= 0)) throw Error("apparent power must be nonnegative");
    return s_va / (units::sqrt3 * v);
}

TransformerRating transformer_rating(double p_mw, double divisor, double margin) {
    if (!(divisor > 0 && divisor <= 1)) throw Error(fmt::format("divisor must be in (0, 1], got {}", divisor));
    if (!(margin >= 1)) throw Error(fmt::format("rating margin must be >= 1, got {}", margin));
    TransformerRating r;
    r.apparent_power_mva = p_mw / divisor;
    r.recommended_mva = r.apparent_power_mva * margin;
    return r;
}

PlantSizingReport size_plant(const PlantParams& p) {
    validate(p);
    PlantSizingReport r;
    r.total_panels = static_cast<long>(p.panels_per_string) * p.strings_parallel;
    r.array_power_mw = static_cast<double>(r.total_panels) * p.panel_power_w / 1e6;
    r.arrays_ratio = p.plant_target_mw / r.array_power_mw;
    r.arrays_required = static_cast<long>(std::floor(r.arrays_ratio + 0.5));
    r.inverter_ac_power_mw = r.array_power_mw / p.inverter_loading_ratio;
    r.inverter_current_a = line_current(r.array_power_mw * 1e6 / p.inverter_power_factor, p.inverter_ac_voltage_v);
    r.lv_current_a = line_current(p.lv_transformer_mva * 1e6, p.lv_voltage_v);
    r.mv_current_a = line_current(p.lv_transformer_mva * 1e6, p.mv_voltage_v);
    const auto hv = transformer_rating(p.hv_plant_power_mw, p.hv_divisor, p.rating_margin);
    r.hv_apparent_power_mva = hv.apparent_power_mva;
    r.hv_current_a = line_current(hv.apparent_power_mva * 1e6, p.hv_voltage_kv * 1e3);
    r.recommended_rating_mva = hv.recommended_mva;
    return r;
}

PlantParams parse_plant_params(const nlohmann::json& j) {
    PlantParams p;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("panels_per_string", p.panels_per_string);
    get("strings_parallel", p.strings_parallel);
    get("panel_power_w", p.panel_power_w);
    get("plant_target_mw", p.plant_target_mw);
    get("inverter_loading_ratio", p.inverter_loading_ratio);
    get("inverter_ac_voltage_v", p.inverter_ac_voltage_v);
    get("inverter_power_factor", p.inverter_power_factor);
    get("lv_transformer_mva", p.lv_transformer_mva);
    get("lv_voltage_v", p.lv_voltage_v);
    get("mv_voltage_v", p.mv_voltage_v);
    get("hv_voltage_kv", p.hv_voltage_kv);
    get("hv_plant_power_mw", p.hv_plant_power_mw);
    get("hv_divisor", p.hv_divisor);
    get("rating_margin", p.rating_margin);
    validate(p);
    return p;
}

nlohmann::json to_json(const PlantParams& p) {
    return {{"panels_per_string", p.panels_per_string},
            {"strings_parallel", p.strings_parallel},
            {"panel_power_w", p.panel_power_w},
            {"plant_target_mw", p.plant_target_mw},
            {"inverter_loading_ratio", p.inverter_loading_ratio},
            {"inverter_ac_voltage_v", p.inverter_ac_voltage_v},
            {"inverter_power_factor", p.inverter_power_factor},
            {"lv_transformer_mva", p.lv_transformer_mva},
            {"lv_voltage_v", p.lv_voltage_v},
            {"mv_voltage_v", p.mv_voltage_v},
            {"hv_voltage_kv", p.hv_voltage_kv},
            {"hv_plant_power_mw", p.hv_plant_power_mw},
            {"hv_divisor", p.hv_divisor},
            {"rating_margin", p.rating_margin}};
}

nlohmann::json to_json(const PlantSizingReport& r) {
    return {{"total_panels", r.total_panels},
            {"array_power_mw", r.array_power_mw},
            {"arrays_ratio", r.arrays_ratio},
            {"arrays_required", r.arrays_required},
            {"inverter_ac_power_mw", r.inverter_ac_power_mw},
            {"inverter_current_a", r.inverter_current_a},
            {"lv_current_a", r.lv_current_a},
            {"mv_current_a", r.mv_current_a},
            {"hv_apparent_power_mva", r.hv_apparent_power_mva},
            {"hv_current_a", r.hv_current_a},
            {"recommended_rating_mva", r.recommended_rating_mva}};
}

}  // namespace pvgrid
