#include "support.hpp"

#include "pvgrid/errors.hpp"
#include "pvgrid/network.hpp"
#include "pvgrid/powerflow.hpp"
#include "pvgrid/units.hpp"

#include <doctest.h>

#include <random>

using namespace pvgrid;
using cd = std::complex<double>;

namespace {

ValidationCode code_of(const nlohmann::json& j) {
    try {
        build_network(j);
    } catch (const ValidationError& e) {
        return e.code();
    }
    FAIL("expected a validation error");
    return ValidationCode::Parse;
}

}  // namespace

TEST_CASE("two-bus description builds") {
    const auto net = build_network(testing::two_bus_json(0.1, 100, 0));
    CHECK(net.bus_count() == 2);
    CHECK(net.branches().size() == 1);
    CHECK(net.buses()[net.slack_index()].id == "S");
}

TEST_CASE("reference case bus counts") {
    auto j = testing::reference_json();
    const auto agg = build_network(j);
    CHECK(agg.bus_count() == 5);
    CHECK(agg.resolve_bus_reference("PV_LV{n}") == std::vector<std::string>{"PV_LV"});
    CHECK(agg.generators().size() == 2);

    j["blocks"][0]["expand"] = true;
    const auto full = build_network(j);
    CHECK(full.bus_count() == 4 + 240);
    CHECK(full.resolve_bus_reference("PV_LV{n}").size() == 240);
    CHECK(full.find_bus("PV_LV240"));
}

TEST_CASE("each validation failure has its own code") {
    auto two_slack = testing::two_bus_json(0.1, 10, 0);
    two_slack["buses"][1]["kind"] = "slack";
    CHECK(code_of(two_slack) == ValidationCode::MultipleSlack);
    try {
        build_network(two_slack);
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()) == "multiple slack buses");
    }

    auto no_slack = testing::two_bus_json(0.1, 10, 0);
    no_slack["buses"][0]["kind"] = "pq";
    CHECK(code_of(no_slack) == ValidationCode::NoSlack);

    auto dup = testing::two_bus_json(0.1, 10, 0);
    dup["buses"][1]["id"] = "S";
    CHECK(code_of(dup) == ValidationCode::DuplicateId);

    auto dangling = testing::two_bus_json(0.1, 10, 0);
    dangling["loads"][0]["bus"] = "NOWHERE";
    CHECK(code_of(dangling) == ValidationCode::DanglingReference);

    auto zero = testing::two_bus_json(0.0, 10, 0);
    CHECK(code_of(zero) == ValidationCode::ZeroImpedance);

    auto island = testing::two_bus_json(0.1, 10, 0);
    island["buses"].push_back({{"id", "ISLAND"}, {"nominal_kv", 132.0}});
    CHECK(code_of(island) == ValidationCode::Disconnected);

    auto bad_kv = testing::two_bus_json(0.1, 10, 0);
    bad_kv["buses"][1]["nominal_kv"] = -1.0;
    CHECK(code_of(bad_kv) == ValidationCode::InvalidValue);

    auto self_loop = testing::two_bus_json(0.1, 10, 0);
    self_loop["branches"][0]["to_bus"] = "S";
    CHECK_THROWS_AS(build_network(self_loop), ValidationError);
}

TEST_CASE("2x2 admittance matrix against hand construction") {
    const auto net = build_network(testing::two_bus_json(0.1, 0, 0));
    const auto y1 = admittance_matrix(net, 1);
    // y = 1/(j0.1) = -j10 on the diagonal, +j10 off it
    CHECK(std::abs(y1(0, 0) - cd(0, -10)) < 1e-12);
    CHECK(std::abs(y1(1, 1) - cd(0, -10)) < 1e-12);
    CHECK(std::abs(y1(0, 1) - cd(0, 10)) < 1e-12);
    CHECK(std::abs(y1(1, 0) - cd(0, 10)) < 1e-12);

    const auto y5 = admittance_matrix(net, 5);
    CHECK(std::abs(y5(0, 0) - cd(0, -2)) < 1e-12);
    CHECK(std::abs(y5(0, 1) - cd(0, 2)) < 1e-12);
    CHECK_THROWS_AS(admittance_matrix(net, 0.5), Error);
}

TEST_CASE("no branches leaves only shunt admittance on the diagonal") {
    NetworkData d;
    d.buses = {{"A", BusKind::Slack, 110.0}};
    Shunt sh;
    sh.id = "C";
    sh.bus = "A";
    sh.q_mvar = 50;
    sh.q_limit_mvar = 50;
    sh.svc_mode = SvcMode::Susceptance;
    d.shunts.push_back(sh);
    const Network net(d);
    const auto y = admittance_matrix(net, 3);
    CHECK(y.rows() == 1);
    CHECK(std::abs(y(0, 0) - cd(0, 0.5 * 3)) < 1e-12);
}

TEST_CASE("series capacitor scales inversely with order") {
    auto j = testing::two_bus_json(0.2, 0, 0);
    j["branches"][0]["xc_pu"] = 0.1;
    const auto net = build_network(j);
    CHECK(std::abs(admittance_matrix(net, 1)(0, 1) + 1.0 / cd(0, 0.1)) < 1e-12);
    CHECK(std::abs(admittance_matrix(net, 5)(0, 1) + 1.0 / cd(0, 1.0 - 0.02)) < 1e-12);
}

TEST_CASE("admittance symmetry and row sums on random networks") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        auto j = testing::random_network_json(rng, 3 + trial % 8);
        for (auto& br : j["branches"]) br["tap_ratio"] = 1.0;
        const auto net = build_network(j);
        for (double h : {1.0, 5.0, 13.0}) {
            const auto y = admittance_matrix(net, h);
            CHECK((y - y.transpose()).cwiseAbs().maxCoeff() < 1e-9);
            // row sum = shunt part at that bus (line charging here)
            for (Eigen::Index i = 0; i < y.rows(); ++i) {
                cd shunt = 0;
                for (const auto& br : net.branches())
                    if (net.bus_index(br.from_bus) == static_cast<std::size_t>(i) || net.bus_index(br.to_bus) == static_cast<std::size_t>(i))
                        shunt += cd(0, h * br.susceptance / 2);
                CHECK(std::abs(y.row(i).sum() - shunt) < 1e-9 * std::max(1.0, y.row(i).cwiseAbs().maxCoeff()));
            }
        }
    }
}

TEST_CASE("declarative round trip") {
    const auto spec = parse_network_spec(testing::reference_json());
    CHECK(parse_network_spec(to_json(spec)) == spec);
    CHECK(build_network(to_json(spec)) == build_network(spec));

    std::mt19937_64 rng(11);
    for (int k = 0; k < 10; ++k) {
        const auto s = parse_network_spec(testing::random_network_json(rng, 6));
        CHECK(parse_network_spec(to_json(s)) == s);
    }
}

TEST_CASE("describe rebuilds the same network") {
    const auto net = build_network(testing::reference_json());
    const auto again = build_network(describe(net));
    CHECK(again.buses() == net.buses());
    CHECK(again.branches().size() == net.branches().size());
    for (std::size_t i = 0; i < net.branches().size(); ++i) {
        CHECK(again.branches()[i].reactance == doctest::Approx(net.branches()[i].reactance).epsilon(1e-12));
        CHECK(again.branches()[i].resistance == doctest::Approx(net.branches()[i].resistance).epsilon(1e-12));
    }
    CHECK(again.loads() == net.loads());
}

TEST_CASE("per-unit conversion round trip") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(1e-3, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const double ohm = u(rng), kv = u(rng), mva = u(rng), us = u(rng);
        CHECK(units::pu_to_ohm(units::ohm_to_pu(ohm, kv, mva), kv, mva) == doctest::Approx(ohm).epsilon(1e-12));
        CHECK(units::pu_to_microsiemens(units::microsiemens_to_pu(us, kv, mva), kv, mva) == doctest::Approx(us).epsilon(1e-12));
        CHECK(units::pu_to_power(units::power_to_pu(ohm, mva), mva) == doctest::Approx(ohm).epsilon(1e-12));
    }
}

TEST_CASE("ohmic branch data converts on the from-bus voltage") {
    auto j = testing::two_bus_json(0.1, 0, 0);
    j["branches"][0] = {{"id", "B1"}, {"from_bus", "S"}, {"to_bus", "L"}, {"r_ohm", 1.7424}, {"x_ohm", 17.424}};
    const auto net = build_network(j);
    // Zbase = 132^2 / 100 = 174.24 ohm
    CHECK(net.branches()[0].reactance == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(net.branches()[0].resistance == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("transformer impedance from rating, parallel units divide it") {
    auto j = testing::two_bus_json(0.1, 0, 0);
    j["branches"][0] = {{"id", "T"}, {"from_bus", "S"}, {"to_bus", "L"}, {"kind", "transformer"}, {"rating_mva", 750.0}, {"parallel_units", 2}};
    const auto net = build_network(j);
    const auto& br = net.branches()[0];
    CHECK(std::hypot(br.resistance, br.reactance) == doctest::Approx(0.1 * 100 / 750 / 2).epsilon(1e-12));
}

TEST_CASE("aggregated and expanded PV blocks give the same grid-side load flow") {
    auto j = testing::reference_json();
    const auto agg = build_network(j);
    j["blocks"][0]["expand"] = true;
    const auto full = build_network(j);
    const auto sa = solve_load_flow(agg);
    const auto sf = solve_load_flow(full);
    for (const std::string b : {"SWGR", "LOADBUS", "MV33"}) {
        CHECK(sa.magnitude[sa.index_of(b)] == doctest::Approx(sf.magnitude[sf.index_of(b)]).epsilon(1e-9));
        CHECK(sa.angle[sa.index_of(b)] == doctest::Approx(sf.angle[sf.index_of(b)]).epsilon(1e-9));
    }
    CHECK(sa.magnitude[sa.index_of("PV_LV")] == doctest::Approx(sf.magnitude[sf.index_of("PV_LV17")]).epsilon(1e-9));
}
