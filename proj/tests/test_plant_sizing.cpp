#include "pvgrid/errors.hpp"
#include "pvgrid/plant_sizing.hpp"

#include <doctest.h>

#include <random>

using namespace pvgrid;

namespace {

bool within(double got, double want, double rel = 1e-3) { return std::abs(got - want) <= rel * std::abs(want); }

}  // namespace

TEST_CASE("default plant reproduces the expected sizing chain") {
    const auto r = size_plant(PlantParams{});
    CHECK(r.total_panels == 8400);
    CHECK(within(r.array_power_mw, 4.2));
    CHECK(r.arrays_required == 238);
    CHECK(r.arrays_ratio == doctest::Approx(1000 / 4.2));
    CHECK(within(r.inverter_ac_power_mw, 3.5));
    CHECK(within(r.inverter_current_a, 3849.0));
    CHECK(within(r.lv_current_a, 4583.0));
    CHECK(within(r.mv_current_a, 87.5));
    CHECK(within(r.hv_apparent_power_mva, 510.2));
    CHECK(within(r.hv_current_a, 736.0));
    CHECK(within(r.recommended_rating_mva, 663.3));
}

TEST_CASE("sizing chain matches direct arithmetic") {
    const PlantParams p;
    const auto r = size_plant(p);
    const double sqrt3 = std::sqrt(3.0);
    CHECK(r.array_power_mw == doctest::Approx(25 * 336 * 500e-6).epsilon(1e-12));
    CHECK(r.inverter_current_a == doctest::Approx(4.2e6 / (sqrt3 * 630)).epsilon(1e-12));
    CHECK(r.lv_current_a == doctest::Approx(5e6 / (sqrt3 * 630)).epsilon(1e-12));
    CHECK(r.mv_current_a == doctest::Approx(5e6 / (sqrt3 * 33000)).epsilon(1e-12));
    CHECK(r.hv_apparent_power_mva == doctest::Approx(500 / 0.98).epsilon(1e-12));
    CHECK(r.hv_current_a == doctest::Approx(500e6 / 0.98 / (sqrt3 * 400e3)).epsilon(1e-12));
    CHECK(r.recommended_rating_mva == doctest::Approx(500 / 0.98 * 1.3).epsilon(1e-12));
}

TEST_CASE("line current is dimensionally consistent") {
    // sqrt(3) VA at 1 V is 1 A; scaling S and V together leaves I unchanged
    CHECK(line_current(std::sqrt(3.0), 1) == doctest::Approx(1));
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(1, 1e6);
    for (int k = 0; k < 100; ++k) {
        const double s = u(rng), v = u(rng), c = u(rng) / 1e3;
        CHECK(line_current(s * c, v * c) == doctest::Approx(line_current(s, v)).epsilon(1e-12));
        CHECK(line_current(2 * s, v) == doctest::Approx(2 * line_current(s, v)).epsilon(1e-12));
    }
}

TEST_CASE("array count and currents are monotone in their drivers") {
    PlantParams p;
    long last = 0;
    for (double target : {100.0, 500.0, 1000.0, 2000.0}) {
        p.plant_target_mw = target;
        const auto n = size_plant(p).arrays_required;
        CHECK(n >= last);
        last = n;
    }
    PlantParams q;
    double last_i = 0;
    for (int strings : {100, 200, 336, 500}) {
        q.strings_parallel = strings;
        const double i = size_plant(q).inverter_current_a;
        CHECK(i > last_i);
        last_i = i;
    }
    PlantParams pf;
    pf.inverter_power_factor = 0.9;
    CHECK(size_plant(pf).inverter_current_a > size_plant(PlantParams{}).inverter_current_a);
}

TEST_CASE("transformer rating") {
    const auto t = transformer_rating(500, 0.98, 1.3);
    CHECK(t.apparent_power_mva == doctest::Approx(510.204).epsilon(1e-5));
    CHECK(t.recommended_mva == doctest::Approx(663.265).epsilon(1e-5));
    CHECK_THROWS_AS(transformer_rating(500, 0, 1.3), Error);
    CHECK_THROWS_AS(transformer_rating(500, 1.1, 1.3), Error);
    CHECK_THROWS_AS(transformer_rating(500, 0.98, 0.9), Error);
}

TEST_CASE("invalid inputs are rejected") {
    PlantParams p;
    p.panel_power_w = 0;
    CHECK_THROWS_AS(size_plant(p), Error);
    p = {};
    p.inverter_power_factor = 1.2;
    CHECK_THROWS_AS(size_plant(p), Error);
    p = {};
    p.inverter_loading_ratio = 0.8;
    CHECK_THROWS_AS(size_plant(p), Error);
    p = {};
    p.mv_voltage_v = -33000;
    CHECK_THROWS_AS(size_plant(p), Error);
    CHECK_THROWS_AS(line_current(1, 0), Error);
}

TEST_CASE("parameter round trip") {
    PlantParams p;
    p.panels_per_string = 30;
    p.hv_divisor = 0.95;
    CHECK(parse_plant_params(to_json(p)) == p);
    CHECK(parse_plant_params(nlohmann::json::object()) == PlantParams{});
    const auto j = to_json(size_plant(PlantParams{}));
    CHECK(j["arrays_required"] == 238);
}
