#include "pvgrid/harmonics.hpp"

#include "pvgrid/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <set>

namespace pvgrid {

using cd = std::complex<double>;

std::vector<HarmonicSource> parse_harmonic_sources(const nlohmann::json& j) {
    std::vector<HarmonicSource> out;
    if (!j.contains("harmonic_sources")) return out;
    for (const auto& js : j.at("harmonic_sources")) {
        HarmonicSource s;
        s.bus = js.at("bus").get<std::string>();
        s.fitted = js.value("fitted", false);
        for (const auto& c : js.at("spectrum")) {
            const int h = c.at("order").get<int>();
            HarmonicComponent hc{c.at("magnitude_percent").get<double>(), c.value("phase_rad", 0.0)};
            if (h < 2) throw ValidationError(ValidationCode::InvalidValue, fmt::format("harmonic order {} at '{}' must be >= 2", h, s.bus));
            if (!(hc.magnitude_percent >= 0))
                throw ValidationError(ValidationCode::InvalidValue, fmt::format("negative harmonic magnitude at '{}'", s.bus));
            if (!s.spectrum.emplace(h, hc).second)
                throw ValidationError(ValidationCode::DuplicateId, fmt::format("order {} listed twice for '{}'", h, s.bus));
        }
        out.push_back(std::move(s));
    }
    return out;
}

nlohmann::json to_json(const HarmonicSource& s) {
    nlohmann::json spec = nlohmann::json::array();
    for (const auto& [h, c] : s.spectrum)
        spec.push_back({{"order", h}, {"magnitude_percent", c.magnitude_percent}, {"phase_rad", c.phase_rad}});
    nlohmann::json j{{"bus", s.bus}, {"spectrum", spec}};
    if (s.fitted) j["fitted"] = true;
    return j;
}

std::vector<HarmonicSource> scale_sources(std::vector<HarmonicSource> sources, double factor) {
    for (auto& s : sources)
        for (auto& [h, c] : s.spectrum) c.magnitude_percent *= factor;
    return sources;
}

std::vector<int> source_orders(const std::vector<HarmonicSource>& sources) {
    std::set<int> orders;
    for (const auto& s : sources)
        for (const auto& [h, c] : s.spectrum) orders.insert(h);
    return {orders.begin(), orders.end()};
}

std::size_t HarmonicReport::index_of(const std::string& bus) const {
    const auto it = std::find(bus_ids.begin(), bus_ids.end(), bus);
    if (it == bus_ids.end()) throw Error("unknown bus '" + bus + "' in harmonic report");
    return static_cast<std::size_t>(it - bus_ids.begin());
}

double HarmonicReport::thd_at(const std::string& bus) const { return thd_percent[index_of(bus)]; }

double HarmonicReport::vh_at(const std::string& bus, int order) const {
    const auto it = std::find(orders.begin(), orders.end(), order);
    if (it == orders.end()) return 0.0;
    return vh_percent[index_of(bus)][static_cast<std::size_t>(it - orders.begin())];
}

double thd(double fundamental, const std::vector<double>& components) {
    if (!(fundamental > 0)) throw Error("THD: fundamental must be positive");
    double sum = 0;
    for (double v : components) sum += v * v;
    return std::sqrt(sum) / fundamental * 100.0;
}

HarmonicReport harmonic_scan(const Network& net, const PowerFlowSolution& sol, const std::vector<HarmonicSource>& sources,
                             const std::vector<int>& orders, const HarmonicScanOptions& opt) {
    const std::size_t n = net.bus_count();
    const double base = net.base_mva();
    if (sol.bus_ids.size() != n) throw Error("harmonic scan: load-flow solution does not match the network");

    // Fundamental current drawn from each source bus, pu.
    std::vector<double> gen_p(n, 0.0);
    std::vector<bool> has_gen(n, false);
    for (const auto& g : net.generators()) {
        const auto i = net.bus_index(g.bus);
        gen_p[i] += g.active_power_mw / base;
        has_gen[i] = true;
    }
    struct Injection {
        std::size_t bus;
        const HarmonicSource* src;
        double i1;
    };
    std::vector<Injection> injections;
    for (const auto& s : sources) {
        const auto ids = net.resolve_bus_reference(s.bus);
        for (const auto& id : ids) {
            const auto idx = net.find_bus(id);
            if (!idx) throw ValidationError(ValidationCode::DanglingReference, "harmonic source at unknown bus '" + id + "'");
            const auto i = *idx;
            cd s1 = has_gen[i] ? cd(gen_p[i], sol.generator_q_mvar[i] / base)
                               : cd(sol.p_injection_mw[i], sol.q_injection_mvar[i]) / base;
            injections.push_back({i, &s, std::abs(s1) / sol.magnitude[i]});
        }
    }

    HarmonicReport rep;
    rep.orders = orders;
    for (const auto& b : net.buses()) {
        rep.bus_ids.push_back(b.id);
        rep.nominal_kv.push_back(b.nominal_kv);
    }
    rep.vh_percent.assign(n, std::vector<double>(orders.size(), 0.0));

    const std::size_t slack = net.slack_index();
    const auto& slack_bus = net.buses()[slack];
    const bool ideal_slack = !slack_bus.short_circuit_mva.has_value();
    // Kept buses: all, or all but an ideal slack (V_h = 0 there).
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < n; ++i)
        if (!(ideal_slack && i == slack)) keep.push_back(static_cast<Eigen::Index>(i));
    const auto m = static_cast<Eigen::Index>(keep.size());

    for (std::size_t k = 0; k < orders.size(); ++k) {
        const int h = orders[k];
        if (h < 2) throw Error(fmt::format("harmonic order {} must be >= 2", h));
        Eigen::MatrixXcd y = admittance_matrix(net, h);
        if (opt.include_loads) {
            for (const auto& l : net.loads()) {
                const auto i = net.bus_index(l.bus);
                const double v2 = sol.magnitude[i] * sol.magnitude[i];
                const double p = std::max(l.active_power_mw, 0.0) / base;
                const double q = l.reactive_power_mvar / base;
                const double b = q >= 0 ? -q / h : -q * h;
                y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += cd(p, b) / v2;
            }
        }
        if (!ideal_slack) {
            const double z = base / *slack_bus.short_circuit_mva;
            const double xr = slack_bus.short_circuit_x_over_r;
            const double r = z / std::sqrt(1 + xr * xr);
            const auto s = static_cast<Eigen::Index>(slack);
            y(s, s) += 1.0 / cd(r, h * r * xr);
        }

        Eigen::VectorXcd current = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
        for (const auto& inj : injections) {
            const auto it = inj.src->spectrum.find(h);
            if (it == inj.src->spectrum.end()) continue;
            current(static_cast<Eigen::Index>(inj.bus)) +=
                std::polar(it->second.magnitude_percent / 100.0 * inj.i1, it->second.phase_rad);
        }

        Eigen::MatrixXcd yr(m, m);
        Eigen::VectorXcd ir(m);
        for (Eigen::Index a = 0; a < m; ++a) {
            ir(a) = current(keep[static_cast<std::size_t>(a)]);
            for (Eigen::Index c = 0; c < m; ++c) yr(a, c) = y(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(c)]);
        }
        if (m == 0) continue;
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(yr);
        const double rcond = lu.rcond();
        if (!(rcond > 1e-14)) throw ResonanceError(h, fmt::format("network admittance singular at harmonic order {} (parallel resonance)", h));
        const Eigen::VectorXcd vh = lu.solve(ir);
        if (!vh.allFinite()) throw ResonanceError(h, fmt::format("non-finite harmonic voltage at order {}", h));
        for (Eigen::Index a = 0; a < m; ++a) {
            const auto i = static_cast<std::size_t>(keep[static_cast<std::size_t>(a)]);
            rep.vh_percent[i][k] = std::abs(vh(a)) / sol.magnitude[i] * 100.0;
        }
    }
    for (std::size_t i = 0; i < n; ++i) rep.thd_percent.push_back(thd(100.0, rep.vh_percent[i]));
    return rep;
}

ThdLimitTable ThdLimitTable::ieee519() {
    return {{{1.0, 8.0}, {69.0, 5.0}, {161.0, 2.5}, {std::numeric_limits<double>::infinity(), 1.5}}};
}

double ThdLimitTable::limit_for(double kv) const {
    if (rows.empty()) throw Error("empty THD limit table");
    for (const auto& r : rows)
        if (kv <= r.max_kv) return r.limit_percent;
    return rows.back().limit_percent;
}

ThdLimitTable parse_thd_limits(const nlohmann::json& j) {
    ThdLimitTable t;
    for (const auto& r : j) {
        const double max_kv = r.contains("max_kv") && !r.at("max_kv").is_null() ? r.at("max_kv").get<double>()
                                                                                 : std::numeric_limits<double>::infinity();
        t.rows.push_back({max_kv, r.at("limit_percent").get<double>()});
    }
    std::sort(t.rows.begin(), t.rows.end(), [](const auto& a, const auto& b) { return a.max_kv < b.max_kv; });
    if (t.rows.empty()) throw ValidationError(ValidationCode::InvalidValue, "THD limit table is empty");
    return t;
}

nlohmann::json to_json(const ThdLimitTable& t) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : t.rows) {
        nlohmann::json row{{"limit_percent", r.limit_percent}};
        row["max_kv"] = std::isinf(r.max_kv) ? nlohmann::json(nullptr) : nlohmann::json(r.max_kv);
        j.push_back(row);
    }
    return j;
}

ThdVerdict ieee519_check(double thd_percent, double kv, const ThdLimitTable& limits) {
    ThdVerdict v;
    v.nominal_kv = kv;
    v.thd_percent = thd_percent;
    v.limit_percent = limits.limit_for(kv);
    v.pass = thd_percent <= v.limit_percent + 1e-9;
    return v;
}

std::vector<ThdVerdict> ieee519_check(const HarmonicReport& rep, const ThdLimitTable& limits) {
    std::vector<ThdVerdict> out;
    for (std::size_t i = 0; i < rep.bus_ids.size(); ++i) {
        auto v = ieee519_check(rep.thd_percent[i], rep.nominal_kv[i], limits);
        v.bus = rep.bus_ids[i];
        out.push_back(v);
    }
    return out;
}

}  // namespace pvgrid
