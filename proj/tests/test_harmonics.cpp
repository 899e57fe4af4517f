#include "support.hpp"

#include "pvgrid/errors.hpp"
#include "pvgrid/filter_design.hpp"
#include "pvgrid/harmonics.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace pvgrid;

namespace {

constexpr double pi = std::numbers::pi;

// RMS of the waveform after subtracting the fundamental, over one period, relative to the fundamental RMS.
double time_domain_thd(double v1, const std::vector<double>& mags, const std::vector<double>& phases) {
    const int samples = 8192;  // well above twice the highest order used
    double residual = 0, fundamental = 0;
    for (int n = 0; n < samples; ++n) {
        const double t = static_cast<double>(n) / samples;
        double r = 0;
        for (std::size_t k = 0; k < mags.size(); ++k)
            r += mags[k] * std::sin(2 * pi * static_cast<double>(k + 2) * t + phases[k]);
        const double f = v1 * std::sin(2 * pi * t);
        residual += r * r;
        fundamental += f * f;
    }
    return std::sqrt(residual / fundamental) * 100;
}

nlohmann::json filter_shunt(const std::string& id, const std::string& bus, double q, int order) {
    return {{"id", id}, {"bus", bus}, {"kind", "filter"}, {"q_mvar", q}, {"target_order", order}};
}

}  // namespace

TEST_CASE("THD examples") {
    CHECK(thd(1, {0.03, 0.04}) == doctest::Approx(5));
    CHECK(thd(1, {}) == 0);
    CHECK(thd(1, {0.0040}) == doctest::Approx(0.40));
    CHECK(thd(100, {10}) == doctest::Approx(10));
    CHECK_THROWS_AS(thd(0, {0.1}), Error);
}

TEST_CASE("THD agrees with a time-domain residual") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        const double v1 = 0.5 + u(rng);
        const int n = 1 + static_cast<int>(u(rng) * 24);
        std::vector<double> mags, phases;
        for (int k = 0; k < n; ++k) {
            mags.push_back(0.2 * u(rng));
            phases.push_back(2 * pi * u(rng));
        }
        const double analytic = thd(v1, mags);
        CHECK(std::abs(analytic - time_domain_thd(v1, mags, phases)) <= 1e-9 * analytic);
    }
}

TEST_CASE("single-tuned filter from a reactive rating") {
    // 400 kV bank, per-phase rating chosen to land on 42.74 uF
    const double v_ln = 400e3 / std::sqrt(3.0);
    const double q_phase = 2 * pi * 50 * 42.74e-6 * v_ln * v_ln;
    const auto f = design_single_tuned_filter(q_phase, v_ln, 50, 5);
    CHECK(f.capacitance_f * 1e6 == doctest::Approx(42.74).epsilon(1e-9));
    CHECK(f.inductance_h * 1e3 == doctest::Approx(9.48).epsilon(1e-3));
    // back-substitution into the resonance formula
    CHECK(resonant_frequency(f.inductance_h, f.capacitance_f) == doctest::Approx(250).epsilon(1e-12));
    CHECK(f.tuned_frequency_hz == doctest::Approx(250).epsilon(1e-12));
    CHECK(f.resistance_ohm == doctest::Approx(2 * pi * 250 * f.inductance_h / 50).epsilon(1e-12));
    // reactance cancels at the tuned order
    const auto z5 = filter_impedance_ohm(f, 5);
    CHECK(std::abs(z5.imag()) < 1e-9 * std::abs(filter_impedance_ohm(f, 1)));
    CHECK(z5.real() == doctest::Approx(f.resistance_ohm));
    CHECK(filter_fundamental_mvar(f, 400) == doctest::Approx(3 * q_phase / 1e6 * 25.0 / 24.0).epsilon(1e-4));
}

TEST_CASE("unit LC resonance") {
    CHECK(resonant_frequency(1, 1) == doctest::Approx(1 / (2 * pi)).epsilon(1e-12));
    CHECK(resonant_frequency(1, 1) == doctest::Approx(0.1592).epsilon(1e-3));
    CHECK_THROWS_AS(resonant_frequency(0, 1), Error);
}

TEST_CASE("filter design round trip over random inputs") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    for (int k = 0; k < 200; ++k) {
        const double q = 1e3 + 1e8 * u(rng), v = 100 + 3e5 * u(rng), f0 = u(rng) < 0.5 ? 50 : 60;
        const int h = 2 + static_cast<int>(u(rng) * 20);
        const auto d = design_single_tuned_filter(q, v, f0, h);
        CHECK(std::abs(resonant_frequency(d.inductance_h, d.capacitance_f) - h * f0) <= 1e-9 * h * f0);
    }
    CHECK_THROWS_AS(design_single_tuned_filter(-1, 100, 50, 5), Error);
    CHECK_THROWS_AS(design_single_tuned_filter(1, 100, 50, 1), Error);
    CHECK_THROWS_AS(design_single_tuned_filter(1, 0, 50, 5), Error);
}

TEST_CASE("no sources gives a clean spectrum") {
    const auto net = build_network(testing::reference_json());
    const auto sol = solve_load_flow(net);
    const auto rep = harmonic_scan(net, sol, {}, {5, 7});
    for (std::size_t b = 0; b < rep.bus_ids.size(); ++b) {
        CHECK(rep.thd_percent[b] == 0);
        for (double v : rep.vh_percent[b]) CHECK(v == 0);
    }
}

TEST_CASE("one bus behind a known impedance") {
    // Source current at h = 5 into x = 0.1 with an ideal slack: V5 = I5 * 5 * 0.1
    auto j = testing::two_bus_json(0.1, 0, 0);
    j["buses"][1]["kind"] = "pv";
    j["generators"] = {{{"id", "G"}, {"bus", "L"}, {"p_mw", 100.0}, {"voltage_setpoint", 1.0}}};
    j["harmonic_sources"] = {{{"bus", "L"}, {"spectrum", {{{"order", 5}, {"magnitude_percent", 20.0}}}}}};
    const auto net = build_network(j);
    const auto sol = solve_load_flow(net);
    const auto rep = harmonic_scan(net, sol, parse_harmonic_sources(j), {5});
    const double s_gen = std::hypot(1.0, sol.generator_q_mvar[1] / 100);
    const double i5 = 0.2 * s_gen / sol.magnitude[1];
    CHECK(rep.vh_at("L", 5) == doctest::Approx(i5 * 0.5 / sol.magnitude[1] * 100).epsilon(1e-9));
    CHECK(rep.thd_at("L") == doctest::Approx(rep.vh_at("L", 5)).epsilon(1e-12));
}

TEST_CASE("doubling the sources doubles every harmonic voltage") {
    const auto j = testing::reference_json();
    const auto net = build_network(j);
    const auto sol = solve_load_flow(net);
    const auto src = parse_harmonic_sources(j);
    const auto one = harmonic_scan(net, sol, src, source_orders(src));
    const auto two = harmonic_scan(net, sol, scale_sources(src, 2), source_orders(src));
    for (std::size_t b = 0; b < one.bus_ids.size(); ++b) {
        CHECK(two.thd_percent[b] == doctest::Approx(2 * one.thd_percent[b]).epsilon(1e-12));
        for (std::size_t k = 0; k < one.orders.size(); ++k)
            CHECK(two.vh_percent[b][k] == doctest::Approx(2 * one.vh_percent[b][k]).epsilon(1e-12));
    }
}

TEST_CASE("uncompensated reference case reproduces the calibration targets") {
    const auto j = testing::reference_json();
    const auto net = build_network(j);
    const auto src = parse_harmonic_sources(j);
    REQUIRE(src.size() == 1);
    CHECK(src[0].fitted);
    const auto rep = harmonic_scan(net, solve_load_flow(net), src, source_orders(src));
    CHECK(std::abs(rep.thd_at("SWGR") - 19.48) <= 0.5);
    CHECK(std::abs(rep.thd_at("LOADBUS") - 9.03) <= 0.5);
}

TEST_CASE("a tuned filter strictly lowers its own order") {
    auto j = testing::reference_json();
    const auto src = parse_harmonic_sources(j);
    const auto before_net = build_network(j);
    const auto before = harmonic_scan(before_net, solve_load_flow(before_net), src, {5, 7, 11, 13});
    for (auto [bus, order] : {std::pair{std::string("SWGR"), 5}, {"SWGR", 7}, {"LOADBUS", 11}, {"LOADBUS", 13}}) {
        auto jf = j;
        jf["shunts"].push_back(filter_shunt("F", bus, 800, order));
        const auto net = build_network(jf);
        const auto after = harmonic_scan(net, solve_load_flow(net), src, {order});
        CHECK(after.vh_at(bus, order) < before.vh_at(bus, order));
    }
}

TEST_CASE("filtered reference case meets the limits at the meters") {
    auto j = testing::reference_json();
    for (const auto& slot : j["study"]["filter_bank"]) j["shunts"].push_back(filter_shunt(slot["id"], slot["bus"], slot["q_mvar"], slot["target_order"]));
    const auto net = build_network(j);
    const auto src = parse_harmonic_sources(j);
    const auto rep = harmonic_scan(net, solve_load_flow(net), src, source_orders(src));
    CHECK(rep.thd_at("SWGR") <= 1.5);
    CHECK(rep.thd_at("LOADBUS") <= 0.5);
}

TEST_CASE("voltage-class limits") {
    CHECK(ieee519_check(1.32, 400).pass);
    CHECK(ieee519_check(0.40, 400).pass);
    CHECK_FALSE(ieee519_check(19.48, 400).pass);
    CHECK(ieee519_check(1.5, 400).pass);
    CHECK(ieee519_check(19.48, 400).limit_percent == 1.5);
    const auto t = ThdLimitTable::ieee519();
    CHECK(t.limit_for(0.63) == 8);
    CHECK(t.limit_for(33) == 5);
    CHECK(t.limit_for(69) == 5);
    CHECK(t.limit_for(132) == 2.5);
    CHECK(t.limit_for(161) == 2.5);
    CHECK(t.limit_for(400) == 1.5);
    const auto custom = parse_thd_limits(nlohmann::json::array({{{"max_kv", 100.0}, {"limit_percent", 3.0}}, {{"max_kv", nullptr}, {"limit_percent", 1.0}}}));
    CHECK(custom.limit_for(400) == 1);
    CHECK(parse_thd_limits(to_json(t)).limit_for(500) == 1.5);
}

TEST_CASE("parallel resonance is reported with its order") {
    auto j = testing::two_bus_json(0.1, 0, 0);
    // 40 MVAR of susceptance at h = 5 is j2 pu, cancelling the line's -j2
    j["shunts"] = {{{"id", "C"}, {"bus", "L"}, {"kind", "svc"}, {"q_mvar", 40.0}, {"q_limit_mvar", 40.0}, {"mode", "susceptance"}}};
    j["harmonic_sources"] = {{{"bus", "L"}, {"spectrum", {{{"order", 5}, {"magnitude_percent", 10.0}}}}}};
    const auto net = build_network(j);
    const auto sol = solve_load_flow(net);
    try {
        harmonic_scan(net, sol, parse_harmonic_sources(j), {3, 5});
        FAIL("expected resonance");
    } catch (const ResonanceError& e) {
        CHECK(e.order() == 5);
    }
}

TEST_CASE("unknown source bus") {
    const auto net = build_network(testing::two_bus_json(0.1, 10, 0));
    const auto sol = solve_load_flow(net);
    HarmonicSource s;
    s.bus = "NOWHERE";
    s.spectrum[5] = {10, 0};
    CHECK_THROWS_AS(harmonic_scan(net, sol, {s}, {5}), Error);
}

TEST_CASE("source round trip") {
    const auto src = parse_harmonic_sources(testing::reference_json());
    for (const auto& s : src) CHECK(parse_harmonic_sources(nlohmann::json{{"harmonic_sources", nlohmann::json::array({to_json(s)})}})[0] == s);
    CHECK(parse_harmonic_sources(nlohmann::json::object()).empty());
    CHECK(source_orders(src) == std::vector<int>{5, 7, 11, 13});
}
