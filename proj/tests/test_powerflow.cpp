#include "support.hpp"

#include "pvgrid/errors.hpp"
#include "pvgrid/powerflow.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace pvgrid;
using cd = std::complex<double>;

TEST_CASE("zero-load network is the trivial fixed point") {
    auto j = testing::two_bus_json(0.1, 0, 0);
    j["buses"].push_back({{"id", "X"}, {"nominal_kv", 132.0}});
    j["branches"].push_back({{"id", "B2"}, {"from_bus", "L"}, {"to_bus", "X"}, {"r_pu", 0.01}, {"x_pu", 0.05}});
    const auto sol = solve_load_flow(build_network(j));
    CHECK(sol.iterations <= 1);
    for (std::size_t i = 0; i < sol.magnitude.size(); ++i) {
        CHECK(sol.magnitude[i] == 1.0);
        CHECK(sol.angle[i] == 0.0);
    }
}

TEST_CASE("2-bus case matches the closed-form voltage") {
    for (auto [p, q] : {std::pair{100.0, 0.0}, {150.0, 50.0}, {80.0, -30.0}, {300.0, 100.0}}) {
        const double x = 0.1;
        const auto sol = solve_load_flow(build_network(testing::two_bus_json(x, p, q)));
        const double v = testing::two_bus_voltage(x, p / 100, q / 100);
        CHECK(std::abs(sol.magnitude[1] - v) < 1e-8);
        // P = V sin(-delta) / x
        CHECK(std::abs(sol.angle[1] + std::asin(p / 100 * x / v)) < 1e-8);
        CHECK(sol.angle[0] == 0.0);
        CHECK(sol.max_mismatch <= 1e-8);
    }
    // the textbook numbers: P = 1 pu, x = 0.1 gives V^2 = (1 + sqrt(0.96)) / 2
    const auto sol = solve_load_flow(build_network(testing::two_bus_json(0.1, 100, 0)));
    CHECK(std::abs(sol.magnitude[1] - std::sqrt((1 + std::sqrt(0.96)) / 2)) < 1e-8);
}

TEST_CASE("PF, S and current from P and Q") {
    auto a = power_quantities(3, 4, 1);
    CHECK(a.s_mva == doctest::Approx(5));
    CHECK(*a.pf == doctest::Approx(0.6));

    auto b = power_quantities(18210.110, 2124.740, 400);
    CHECK(*b.pf == doctest::Approx(0.993).epsilon(5e-4));

    auto c = power_quantities(17542.620, -8207.332, 400);
    CHECK(*c.pf == doctest::Approx(-0.906).epsilon(5e-4));

    auto d = power_quantities(-10, -5, 400);
    CHECK(*d.pf > 0);
    auto e = power_quantities(-10, 5, 400);
    CHECK(*e.pf < 0);

    auto none = power_quantities(0, 0, 400);
    CHECK_FALSE(none.pf.has_value());

    auto i = power_quantities(std::sqrt(3.0) * 1e-3, 0, 1);  // sqrt(3) kVA at 1 kV
    CHECK(i.current_a == doctest::Approx(1.0));
    CHECK_THROWS_AS(power_quantities(1, 1, 0), Error);
}

TEST_CASE("reference case without compensation shows a low switchgear PF") {
    const auto j = testing::reference_json();
    const auto net = build_network(j);
    const auto sol = solve_load_flow(net);
    const auto meters = parse_meters(j);
    REQUIRE(meters.size() == 2);
    const auto sw = meter_quantities(net, sol, meters[0]);
    CHECK(std::abs(*sw.pf) < 0.95);
    CHECK(*sw.pf == doctest::Approx(0.9437).epsilon(1e-3));  // golden value of the bundled case
    const auto lb = meter_quantities(net, sol, meters[1]);
    CHECK(lb.p_mw == doctest::Approx(18210.11).epsilon(1e-9));
}

TEST_CASE("power balance and nonnegative losses on random networks") {
    std::mt19937_64 rng(2024);
    for (int k = 0; k < 50; ++k) {
        const int n = 3 + k % 8;
        const auto net = build_network(testing::random_network_json(rng, n));
        const auto sol = solve_load_flow(net);
        const auto pb = power_balance(net, sol);
        CHECK(std::abs(pb.generation_mw - pb.load_mw - pb.losses_mw - pb.shunt_mw) / net.base_mva() < 1e-6);
        CHECK(pb.losses_mw >= -1e-9);
        for (const auto& f : sol.branches) CHECK(f.loss_mw() >= -1e-9);
    }
}

TEST_CASE("permuting bus order gives the same per-bus results") {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 10; ++k) {
        auto j = testing::random_network_json(rng, 7);
        const auto a = solve_load_flow(build_network(j));
        std::shuffle(j["buses"].begin(), j["buses"].end(), rng);
        const auto b = solve_load_flow(build_network(j));
        for (std::size_t i = 0; i < a.bus_ids.size(); ++i) {
            const auto m = b.index_of(a.bus_ids[i]);
            CHECK(std::abs(a.magnitude[i] - b.magnitude[m]) < 1e-9);
            CHECK(std::abs(a.angle[i] - b.angle[m]) < 1e-9);
        }
    }
}

TEST_CASE("halving the tolerance moves the solution by less than the old tolerance") {
    std::mt19937_64 rng(9);
    for (int k = 0; k < 10; ++k) {
        const auto net = build_network(testing::random_network_json(rng, 8));
        SolverOptions loose;
        loose.tolerance = 1e-6;
        SolverOptions tight;
        tight.tolerance = 5e-7;
        const auto a = solve_load_flow(net, loose);
        const auto b = solve_load_flow(net, tight);
        for (std::size_t i = 0; i < a.magnitude.size(); ++i) {
            CHECK(std::abs(a.magnitude[i] - b.magnitude[i]) <= 1e-6);
            CHECK(std::abs(a.angle[i] - b.angle[i]) <= 1e-6);
        }
    }
}

TEST_CASE("branch loss equals series current squared times impedance") {
    std::mt19937_64 rng(17);
    for (int k = 0; k < 10; ++k) {
        const auto net = build_network(testing::random_network_json(rng, 6));
        const auto sol = solve_load_flow(net);
        const double base = net.base_mva();
        for (std::size_t b = 0; b < net.branches().size(); ++b) {
            const auto& br = net.branches()[b];
            const auto f = net.bus_index(br.from_bus), t = net.bus_index(br.to_bus);
            const cd vf = std::polar(sol.magnitude[f], sol.angle[f]) / br.tap_ratio;
            const cd vt = std::polar(sol.magnitude[t], sol.angle[t]);
            const cd z(br.resistance, br.reactance - br.series_capacitor_reactance);
            const cd is = (vf - vt) / z;
            const double p_loss = std::norm(is) * br.resistance;
            const double q_loss = std::norm(is) * z.imag() - (std::norm(vf) + std::norm(vt)) * br.susceptance / 2;
            CHECK(std::abs(sol.branches[b].loss_mw() / base - p_loss) < 1e-9);
            CHECK(std::abs(sol.branches[b].loss_mvar() / base - q_loss) < 1e-9);
        }
    }
}

TEST_CASE("PV bus holds its setpoint until a reactive limit binds") {
    auto j = testing::two_bus_json(0.1, 100, 60);
    j["buses"][1]["kind"] = "pv";
    j["generators"] = {{{"id", "G"}, {"bus", "L"}, {"p_mw", 0.0}, {"voltage_setpoint", 1.0}}};
    const auto free = solve_load_flow(build_network(j));
    CHECK(free.magnitude[1] == doctest::Approx(1.0).epsilon(1e-12));
    const double q_needed = free.generator_q_mvar[1];
    CHECK(q_needed > 10);

    j["generators"][0]["q_max_mvar"] = 10.0;
    j["generators"][0]["q_min_mvar"] = -10.0;
    const auto limited = solve_load_flow(build_network(j));
    CHECK(limited.final_kind[1] == BusKind::PQ);
    CHECK(limited.generator_q_mvar[1] == doctest::Approx(10.0));
    CHECK(limited.magnitude[1] < 1.0);
}

TEST_CASE("iteration cap and collapse are reported as errors") {
    const auto heavy = build_network(testing::two_bus_json(0.1, 300, 100));
    SolverOptions one;
    one.max_iterations = 1;
    try {
        solve_load_flow(heavy, one);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.iterations() == 1);
        CHECK(e.mismatch() > 1e-8);
    }
    // far beyond the 5 pu transfer limit: no solution exists
    const auto impossible = build_network(testing::two_bus_json(0.1, 900, 0));
    bool failed = false;
    try {
        solve_load_flow(impossible);
    } catch (const DivergenceError&) {
        failed = true;
    } catch (const SingularJacobianError&) {
        failed = true;
    }
    CHECK(failed);
}

TEST_CASE("singular Jacobian is a distinct error") {
    // Two parallel paths, +j0.1 and -j0.1: their admittances cancel and bus L decouples.
    auto j = testing::two_bus_json(0.1, 50, 10);
    j["branches"].push_back({{"id", "B2"}, {"from_bus", "S"}, {"to_bus", "L"}, {"x_pu", 0.1}, {"xc_pu", 0.2}});
    try {
        solve_load_flow(build_network(j));
        FAIL("expected a singular Jacobian");
    } catch (const SingularJacobianError& e) {
        CHECK(e.iteration() == 0);
    }
}

TEST_CASE("meters parse and read flows into the bus") {
    const auto j = testing::reference_json();
    const auto meters = parse_meters(j);
    CHECK(meters[0] == MeterPoint{"Switch Gear", "SWGR", std::string("TIE")});
    CHECK(parse_meters(nlohmann::json::object()).empty());
    const auto net = build_network(j);
    const auto sol = solve_load_flow(net);
    const auto into = branch_power_quantities(net, sol, "TIE", "SWGR");
    const auto out_of = branch_power_quantities(net, sol, "TIE", "GRID");
    CHECK(into.p_mw > 0);
    CHECK(out_of.p_mw < 0);
    CHECK_THROWS_AS(branch_power_quantities(net, sol, "TIE", "LOADBUS"), Error);
    CHECK(to_json(meters[0])["branch"] == "TIE");
}
