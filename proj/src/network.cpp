#include "pvgrid/network.hpp"

#include "pvgrid/errors.hpp"
#include "pvgrid/units.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>

namespace pvgrid {

using nlohmann::json;

std::string to_string(BusKind k) {
    switch (k) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        case BusKind::PQ: return "pq";
    }
    return "pq";
}

std::string to_string(BranchKind k) { return k == BranchKind::Line ? "line" : "transformer"; }

std::string to_string(ShuntKind k) { return k == ShuntKind::SvcFixedQ ? "svc" : "filter"; }

namespace {

[[noreturn]] void fail(ValidationCode code, const std::string& msg) { throw ValidationError(code, msg); }

BusKind parse_bus_kind(const std::string& s) {
    if (s == "slack" || s == "Slack" || s == "swing") return BusKind::Slack;
    if (s == "pv" || s == "PV") return BusKind::PV;
    if (s == "pq" || s == "PQ") return BusKind::PQ;
    fail(ValidationCode::Parse, "unknown bus kind '" + s + "'");
}

BranchKind parse_branch_kind(const std::string& s) {
    if (s == "line" || s == "Line") return BranchKind::Line;
    if (s == "transformer" || s == "Transformer") return BranchKind::Transformer;
    fail(ValidationCode::Parse, "unknown branch kind '" + s + "'");
}

ShuntKind parse_shunt_kind(const std::string& s) {
    if (s == "svc" || s == "SvcFixedQ" || s == "statcom") return ShuntKind::SvcFixedQ;
    if (s == "filter" || s == "SingleTunedFilter") return ShuntKind::SingleTunedFilter;
    fail(ValidationCode::Parse, "unknown shunt kind '" + s + "'");
}

SvcMode parse_svc_mode(const std::string& s) {
    if (s == "constant_q") return SvcMode::ConstantQ;
    if (s == "susceptance") return SvcMode::Susceptance;
    fail(ValidationCode::Parse, "unknown svc mode '" + s + "'");
}

template <class T>
T required(const json& j, const char* key, const char* what) {
    if (!j.contains(key)) fail(ValidationCode::Parse, std::string(what) + ": missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ValidationCode::Parse, std::string(what) + ": bad '" + key + "': " + e.what());
    }
}

template <class T>
T optional_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ValidationCode::Parse, std::string("bad '") + key + "': " + e.what());
    }
}

template <class T>
std::optional<T> maybe(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ValidationCode::Parse, std::string("bad '") + key + "': " + e.what());
    }
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

BusSpec parse_bus(const json& j) {
    BusSpec b;
    b.id = required<std::string>(j, "id", "bus");
    b.kind = parse_bus_kind(optional_or<std::string>(j, "kind", "pq"));
    b.nominal_kv = required<double>(j, "nominal_kv", "bus");
    b.initial_magnitude = optional_or(j, "initial_magnitude", 1.0);
    b.initial_angle = optional_or(j, "initial_angle", 0.0);
    b.short_circuit_mva = maybe<double>(j, "short_circuit_mva");
    b.short_circuit_x_over_r = maybe<double>(j, "short_circuit_x_over_r");
    return b;
}

json bus_json(const BusSpec& b) {
    json j{{"id", b.id},
           {"kind", to_string(b.kind)},
           {"nominal_kv", b.nominal_kv},
           {"initial_magnitude", b.initial_magnitude},
           {"initial_angle", b.initial_angle}};
    put(j, "short_circuit_mva", b.short_circuit_mva);
    put(j, "short_circuit_x_over_r", b.short_circuit_x_over_r);
    return j;
}

BranchSpec parse_branch(const json& j) {
    BranchSpec b;
    b.id = required<std::string>(j, "id", "branch");
    b.from_bus = required<std::string>(j, "from_bus", "branch");
    b.to_bus = required<std::string>(j, "to_bus", "branch");
    b.kind = parse_branch_kind(optional_or<std::string>(j, "kind", "line"));
    b.r_pu = maybe<double>(j, "r_pu");
    b.x_pu = maybe<double>(j, "x_pu");
    b.b_pu = maybe<double>(j, "b_pu");
    b.xc_pu = maybe<double>(j, "xc_pu");
    b.r_ohm = maybe<double>(j, "r_ohm");
    b.x_ohm = maybe<double>(j, "x_ohm");
    b.b_us = maybe<double>(j, "b_us");
    b.xc_ohm = maybe<double>(j, "xc_ohm");
    b.rating_mva = maybe<double>(j, "rating_mva");
    b.z_percent = maybe<double>(j, "z_percent");
    b.x_over_r = maybe<double>(j, "x_over_r");
    b.parallel_units = maybe<int>(j, "parallel_units");
    b.tap_ratio = optional_or(j, "tap_ratio", 1.0);
    b.in_service = optional_or(j, "in_service", true);
    return b;
}

json branch_json(const BranchSpec& b) {
    json j{{"id", b.id}, {"from_bus", b.from_bus}, {"to_bus", b.to_bus}, {"kind", to_string(b.kind)}};
    put(j, "r_pu", b.r_pu);
    put(j, "x_pu", b.x_pu);
    put(j, "b_pu", b.b_pu);
    put(j, "xc_pu", b.xc_pu);
    put(j, "r_ohm", b.r_ohm);
    put(j, "x_ohm", b.x_ohm);
    put(j, "b_us", b.b_us);
    put(j, "xc_ohm", b.xc_ohm);
    put(j, "rating_mva", b.rating_mva);
    put(j, "z_percent", b.z_percent);
    put(j, "x_over_r", b.x_over_r);
    put(j, "parallel_units", b.parallel_units);
    j["tap_ratio"] = b.tap_ratio;
    j["in_service"] = b.in_service;
    return j;
}

Load parse_load(const json& j) {
    Load l;
    l.id = optional_or<std::string>(j, "id", "");
    l.bus = required<std::string>(j, "bus", "load");
    l.active_power_mw = required<double>(j, "p_mw", "load");
    l.reactive_power_mvar = optional_or(j, "q_mvar", 0.0);
    return l;
}

json load_json(const Load& l) {
    return json{{"id", l.id}, {"bus", l.bus}, {"p_mw", l.active_power_mw}, {"q_mvar", l.reactive_power_mvar}};
}

Generator parse_generator(const json& j) {
    Generator g;
    g.id = optional_or<std::string>(j, "id", "");
    g.bus = required<std::string>(j, "bus", "generator");
    g.active_power_mw = optional_or(j, "p_mw", 0.0);
    g.voltage_setpoint = optional_or(j, "voltage_setpoint", 1.0);
    g.q_min_mvar = optional_or(j, "q_min_mvar", -1e9);
    g.q_max_mvar = optional_or(j, "q_max_mvar", 1e9);
    return g;
}

json generator_json(const Generator& g) {
    return json{{"id", g.id},
                {"bus", g.bus},
                {"p_mw", g.active_power_mw},
                {"voltage_setpoint", g.voltage_setpoint},
                {"q_min_mvar", g.q_min_mvar},
                {"q_max_mvar", g.q_max_mvar}};
}

ShuntSpec parse_shunt(const json& j) {
    ShuntSpec s;
    s.id = optional_or<std::string>(j, "id", "");
    s.bus = required<std::string>(j, "bus", "shunt");
    s.kind = parse_shunt_kind(optional_or<std::string>(j, "kind", "svc"));
    s.q_mvar = optional_or(j, "q_mvar", 0.0);
    s.q_limit_mvar = maybe<double>(j, "q_limit_mvar");
    s.svc_mode = parse_svc_mode(optional_or<std::string>(j, "mode", "constant_q"));
    s.target_order = maybe<int>(j, "target_order");
    s.quality_factor = maybe<double>(j, "quality_factor");
    return s;
}

json shunt_json(const ShuntSpec& s) {
    json j{{"id", s.id}, {"bus", s.bus}, {"kind", to_string(s.kind)}, {"q_mvar", s.q_mvar}};
    put(j, "q_limit_mvar", s.q_limit_mvar);
    if (s.kind == ShuntKind::SvcFixedQ)
        j["mode"] = s.svc_mode == SvcMode::ConstantQ ? "constant_q" : "susceptance";
    put(j, "target_order", s.target_order);
    put(j, "quality_factor", s.quality_factor);
    return j;
}

template <class T, class F>
std::vector<T> parse_list(const json& j, const char* key, F&& f) {
    std::vector<T> out;
    if (!j.contains(key)) return out;
    if (!j.at(key).is_array()) fail(ValidationCode::Parse, std::string("'") + key + "' must be an array");
    for (const auto& item : j.at(key)) out.push_back(f(item));
    return out;
}

template <class T, class F>
json dump_list(const std::vector<T>& v, F&& f) {
    json arr = json::array();
    for (const auto& x : v) arr.push_back(f(x));
    return arr;
}

std::string substitute(const std::string& s, const std::string& n) {
    std::string out = s;
    for (std::size_t pos = out.find("{n}"); pos != std::string::npos; pos = out.find("{n}", pos + n.size()))
        out.replace(pos, 3, n);
    return out;
}

struct Impedance {
    double r = 0, x = 0, b = 0, xc = 0;
};

Impedance branch_impedance_pu(const BranchSpec& b, const std::map<std::string, double>& kv_of, double base_mva) {
    Impedance z;
    if (b.rating_mva) {
        if (!(*b.rating_mva > 0)) fail(ValidationCode::InvalidValue, "branch " + b.id + ": rating_mva must be positive");
        const double zpu = units::own_rating_to_system_pu(b.z_percent.value_or(10.0), *b.rating_mva, base_mva);
        const double xr = b.x_over_r.value_or(20.0);
        z.r = zpu / std::sqrt(1.0 + xr * xr);
        z.x = z.r * xr;
    } else if (b.x_ohm || b.r_ohm) {
        const auto it = kv_of.find(b.from_bus);
        if (it == kv_of.end()) fail(ValidationCode::DanglingReference, "branch " + b.id + ": unknown bus " + b.from_bus);
        const double kv = it->second;
        z.r = units::ohm_to_pu(b.r_ohm.value_or(0.0), kv, base_mva);
        z.x = units::ohm_to_pu(b.x_ohm.value_or(0.0), kv, base_mva);
        z.b = units::microsiemens_to_pu(b.b_us.value_or(0.0), kv, base_mva);
        z.xc = units::ohm_to_pu(b.xc_ohm.value_or(0.0), kv, base_mva);
    } else {
        z.r = b.r_pu.value_or(0.0);
        z.x = b.x_pu.value_or(0.0);
        z.b = b.b_pu.value_or(0.0);
        z.xc = b.xc_pu.value_or(0.0);
    }
    if (b.b_pu && (b.x_ohm || b.r_ohm || b.rating_mva)) z.b = *b.b_pu;
    if (b.xc_pu && (b.x_ohm || b.r_ohm || b.rating_mva)) z.xc = *b.xc_pu;
    const int n = b.parallel_units.value_or(1);
    if (n < 1) fail(ValidationCode::InvalidValue, "branch " + b.id + ": parallel_units must be >= 1");
    z.r /= n;
    z.x /= n;
    z.xc /= n;
    z.b *= n;
    return z;
}

struct Collected {
    std::vector<BusSpec> buses;
    std::vector<BranchSpec> branches;
    std::vector<Load> loads;
    std::vector<Generator> generators;
    std::vector<ShuntSpec> shunts;
    std::vector<double> branch_scale;  // aggregation divisor per branch
    std::map<std::string, std::vector<std::string>> groups;
};

Collected collect(const NetworkSpec& spec) {
    Collected c;
    c.buses = spec.buses;
    c.branches = spec.branches;
    c.branch_scale.assign(spec.branches.size(), 1.0);
    c.loads = spec.loads;
    c.generators = spec.generators;
    c.shunts = spec.shunts;

    for (const auto& blk : spec.blocks) {
        if (blk.count < 1) fail(ValidationCode::InvalidValue, "block " + blk.id + ": count must be >= 1");
        const int copies = blk.expand ? blk.count : 1;
        const double scale = blk.expand ? 1.0 : static_cast<double>(blk.count);
        for (int k = 1; k <= copies; ++k) {
            const std::string tag = blk.expand ? std::to_string(k) : "";
            for (auto b : blk.buses) {
                const std::string tmpl = b.id;
                b.id = substitute(b.id, tag);
                if (tmpl.find("{n}") != std::string::npos) c.groups[tmpl].push_back(b.id);
                c.buses.push_back(std::move(b));
            }
            for (auto br : blk.branches) {
                br.id = substitute(br.id, tag);
                br.from_bus = substitute(br.from_bus, tag);
                br.to_bus = substitute(br.to_bus, tag);
                c.branches.push_back(std::move(br));
                c.branch_scale.push_back(scale);
            }
            for (auto l : blk.loads) {
                l.id = substitute(l.id, tag);
                l.bus = substitute(l.bus, tag);
                l.active_power_mw *= scale;
                l.reactive_power_mvar *= scale;
                c.loads.push_back(std::move(l));
            }
            for (auto g : blk.generators) {
                g.id = substitute(g.id, tag);
                g.bus = substitute(g.bus, tag);
                g.active_power_mw *= scale;
                g.q_min_mvar *= scale;
                g.q_max_mvar *= scale;
                c.generators.push_back(std::move(g));
            }
            for (auto s : blk.shunts) {
                s.id = substitute(s.id, tag);
                s.bus = substitute(s.bus, tag);
                s.q_mvar *= scale;
                if (s.q_limit_mvar) *s.q_limit_mvar *= scale;
                c.shunts.push_back(std::move(s));
            }
        }
    }
    return c;
}

void check_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) fail(ValidationCode::InvalidValue, what + " must be finite");
}

}  // namespace

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Network::Network(NetworkData data) : data_(std::move(data)) {
    if (!(data_.base_mva > 0)) fail(ValidationCode::InvalidValue, "base_mva must be positive");
    if (!(data_.base_frequency_hz > 0)) fail(ValidationCode::InvalidValue, "base_frequency_hz must be positive");

    std::size_t slack_count = 0;
    for (std::size_t i = 0; i < data_.buses.size(); ++i) {
        const auto& b = data_.buses[i];
        if (!bus_lookup_.emplace(b.id, i).second) fail(ValidationCode::DuplicateId, "duplicate bus id '" + b.id + "'");
        if (!(b.nominal_kv > 0)) fail(ValidationCode::InvalidValue, "bus " + b.id + ": nominal_kv must be positive");
        if (!(b.initial_magnitude > 0))
            fail(ValidationCode::InvalidValue, "bus " + b.id + ": initial_magnitude must be positive");
        check_finite(b.initial_angle, "bus " + b.id + " initial_angle");
        if (b.short_circuit_mva && !(*b.short_circuit_mva > 0))
            fail(ValidationCode::InvalidValue, "bus " + b.id + ": short_circuit_mva must be positive");
        if (b.kind == BusKind::Slack) {
            ++slack_count;
            slack_ = i;
        }
    }
    if (data_.buses.empty() || slack_count == 0) fail(ValidationCode::NoSlack, "no slack bus");
    if (slack_count > 1) fail(ValidationCode::MultipleSlack, "multiple slack buses");

    auto require_bus = [&](const std::string& id, const std::string& owner) {
        if (!bus_lookup_.count(id))
            fail(ValidationCode::DanglingReference, owner + " references unknown bus '" + id + "'");
    };

    for (std::size_t i = 0; i < data_.branches.size(); ++i) {
        const auto& br = data_.branches[i];
        if (br.id.empty()) fail(ValidationCode::InvalidValue, "branch without id");
        if (!branch_lookup_.emplace(br.id, i).second)
            fail(ValidationCode::DuplicateId, "duplicate branch id '" + br.id + "'");
        require_bus(br.from_bus, "branch " + br.id);
        require_bus(br.to_bus, "branch " + br.id);
        if (br.from_bus == br.to_bus) fail(ValidationCode::InvalidValue, "branch " + br.id + " connects a bus to itself");
        for (double v : {br.resistance, br.reactance, br.susceptance, br.series_capacitor_reactance})
            check_finite(v, "branch " + br.id + " impedance");
        if (std::hypot(br.resistance, br.reactance - br.series_capacitor_reactance) <= 0.0)
            fail(ValidationCode::ZeroImpedance, "zero impedance branch '" + br.id + "'");
        if (!(br.tap_ratio > 0)) fail(ValidationCode::InvalidValue, "branch " + br.id + ": tap_ratio must be positive");
    }

    std::set<std::string> seen;
    auto unique_id = [&](const std::string& kind, const std::string& id) {
        if (id.empty()) return;
        if (!seen.insert(kind + ":" + id).second) fail(ValidationCode::DuplicateId, "duplicate " + kind + " id '" + id + "'");
    };
    for (const auto& l : data_.loads) {
        unique_id("load", l.id);
        require_bus(l.bus, "load " + l.id);
        check_finite(l.active_power_mw, "load P");
        check_finite(l.reactive_power_mvar, "load Q");
    }
    for (const auto& g : data_.generators) {
        unique_id("generator", g.id);
        require_bus(g.bus, "generator " + g.id);
        check_finite(g.active_power_mw, "generator P");
        if (!(g.voltage_setpoint > 0))
            fail(ValidationCode::InvalidValue, "generator " + g.id + ": voltage_setpoint must be positive");
        if (g.q_min_mvar > g.q_max_mvar) fail(ValidationCode::InvalidValue, "generator " + g.id + ": q_min > q_max");
    }
    for (const auto& s : data_.shunts) {
        unique_id("shunt", s.id);
        require_bus(s.bus, "shunt " + s.id);
        if (s.kind == ShuntKind::SvcFixedQ) {
            check_finite(s.q_mvar, "svc q");
            if (s.q_limit_mvar < 0) fail(ValidationCode::InvalidValue, "shunt " + s.id + ": negative q_limit");
            if (s.q_limit_mvar > 0 && std::abs(s.q_mvar) > s.q_limit_mvar)
                fail(ValidationCode::InvalidValue, "shunt " + s.id + ": SVC limit exceeded");
        } else {
            if (!s.filter) fail(ValidationCode::InvalidValue, "shunt " + s.id + ": filter without design");
            const auto& f = *s.filter;
            if (!(f.capacitance_f > 0 && f.inductance_h > 0 && f.resistance_ohm >= 0 && f.target_order >= 2))
                fail(ValidationCode::InvalidValue, "shunt " + s.id + ": filter fields must be positive");
        }
    }

    // Connectivity over in-service branches.
    std::vector<std::vector<std::size_t>> adj(data_.buses.size());
    for (const auto& br : data_.branches) {
        if (!br.in_service) continue;
        const auto a = bus_lookup_.at(br.from_bus), b = bus_lookup_.at(br.to_bus);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<bool> reached(data_.buses.size(), false);
    std::queue<std::size_t> q;
    q.push(slack_);
    reached[slack_] = true;
    while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        for (auto v : adj[u])
            if (!reached[v]) {
                reached[v] = true;
                q.push(v);
            }
    }
    for (std::size_t i = 0; i < reached.size(); ++i)
        if (!reached[i]) fail(ValidationCode::Disconnected, "bus '" + data_.buses[i].id + "' is not connected to the slack bus");
}

std::size_t Network::bus_index(const std::string& id) const {
    const auto it = bus_lookup_.find(id);
    if (it == bus_lookup_.end()) throw Error("unknown bus '" + id + "'");
    return it->second;
}

std::optional<std::size_t> Network::find_bus(const std::string& id) const {
    const auto it = bus_lookup_.find(id);
    if (it == bus_lookup_.end()) return std::nullopt;
    return it->second;
}

std::size_t Network::branch_index(const std::string& id) const {
    const auto it = branch_lookup_.find(id);
    if (it == branch_lookup_.end()) throw Error("unknown branch '" + id + "'");
    return it->second;
}

std::vector<std::string> Network::resolve_bus_reference(const std::string& id) const {
    if (const auto it = data_.bus_groups.find(id); it != data_.bus_groups.end()) return it->second;
    return {id};
}

// ---------------------------------------------------------------------------
// Declarative form
// ---------------------------------------------------------------------------

NetworkSpec parse_network_spec(const json& j) {
    if (!j.is_object()) fail(ValidationCode::Parse, "network description must be a JSON object");
    NetworkSpec s;
    s.base_mva = optional_or(j, "base_mva", 100.0);
    s.base_frequency_hz = optional_or(j, "base_frequency_hz", 50.0);
    s.buses = parse_list<BusSpec>(j, "buses", parse_bus);
    s.branches = parse_list<BranchSpec>(j, "branches", parse_branch);
    s.loads = parse_list<Load>(j, "loads", parse_load);
    s.generators = parse_list<Generator>(j, "generators", parse_generator);
    s.shunts = parse_list<ShuntSpec>(j, "shunts", parse_shunt);
    s.blocks = parse_list<BlockSpec>(j, "blocks", [](const json& b) {
        BlockSpec blk;
        blk.id = required<std::string>(b, "id", "block");
        blk.count = required<int>(b, "count", "block");
        blk.expand = optional_or(b, "expand", false);
        blk.buses = parse_list<BusSpec>(b, "buses", parse_bus);
        blk.branches = parse_list<BranchSpec>(b, "branches", parse_branch);
        blk.loads = parse_list<Load>(b, "loads", parse_load);
        blk.generators = parse_list<Generator>(b, "generators", parse_generator);
        blk.shunts = parse_list<ShuntSpec>(b, "shunts", parse_shunt);
        return blk;
    });
    return s;
}

json to_json(const NetworkSpec& s) {
    json j;
    j["base_mva"] = s.base_mva;
    j["base_frequency_hz"] = s.base_frequency_hz;
    j["buses"] = dump_list(s.buses, bus_json);
    j["branches"] = dump_list(s.branches, branch_json);
    j["loads"] = dump_list(s.loads, load_json);
    j["generators"] = dump_list(s.generators, generator_json);
    j["shunts"] = dump_list(s.shunts, shunt_json);
    if (!s.blocks.empty()) {
        j["blocks"] = dump_list(s.blocks, [](const BlockSpec& b) {
            return json{{"id", b.id},
                        {"count", b.count},
                        {"expand", b.expand},
                        {"buses", dump_list(b.buses, bus_json)},
                        {"branches", dump_list(b.branches, branch_json)},
                        {"loads", dump_list(b.loads, load_json)},
                        {"generators", dump_list(b.generators, generator_json)},
                        {"shunts", dump_list(b.shunts, shunt_json)}};
        });
    }
    return j;
}

Network build_network(const NetworkSpec& spec) {
    if (!(spec.base_mva > 0)) fail(ValidationCode::InvalidValue, "base_mva must be positive");
    if (!(spec.base_frequency_hz > 0)) fail(ValidationCode::InvalidValue, "base_frequency_hz must be positive");
    const Collected c = collect(spec);

    NetworkData d;
    d.base_mva = spec.base_mva;
    d.base_frequency_hz = spec.base_frequency_hz;
    d.bus_groups = c.groups;

    std::map<std::string, double> kv_of;
    for (const auto& b : c.buses) {
        Bus bus;
        bus.id = b.id;
        bus.kind = b.kind;
        bus.nominal_kv = b.nominal_kv;
        bus.initial_magnitude = b.initial_magnitude;
        bus.initial_angle = b.initial_angle;
        bus.short_circuit_mva = b.short_circuit_mva;
        bus.short_circuit_x_over_r = b.short_circuit_x_over_r.value_or(10.0);
        kv_of.emplace(b.id, b.nominal_kv);
        d.buses.push_back(std::move(bus));
    }

    for (std::size_t i = 0; i < c.branches.size(); ++i) {
        const auto& bs = c.branches[i];
        Impedance z = branch_impedance_pu(bs, kv_of, spec.base_mva);
        const double n = c.branch_scale[i];
        Branch br;
        br.id = bs.id;
        br.from_bus = bs.from_bus;
        br.to_bus = bs.to_bus;
        br.kind = bs.kind;
        br.resistance = z.r / n;
        br.reactance = z.x / n;
        br.series_capacitor_reactance = z.xc / n;
        br.susceptance = z.b * n;
        br.tap_ratio = bs.tap_ratio;
        br.in_service = bs.in_service;
        d.branches.push_back(std::move(br));
    }

    d.loads = c.loads;
    d.generators = c.generators;
    for (std::size_t i = 0; i < d.loads.size(); ++i)
        if (d.loads[i].id.empty()) d.loads[i].id = "load" + std::to_string(i + 1);
    for (std::size_t i = 0; i < d.generators.size(); ++i)
        if (d.generators[i].id.empty()) d.generators[i].id = "gen" + std::to_string(i + 1);

    for (std::size_t i = 0; i < c.shunts.size(); ++i) {
        const auto& ss = c.shunts[i];
        Shunt sh;
        sh.id = ss.id.empty() ? "shunt" + std::to_string(i + 1) : ss.id;
        sh.bus = ss.bus;
        sh.kind = ss.kind;
        if (ss.kind == ShuntKind::SvcFixedQ) {
            sh.q_mvar = ss.q_mvar;
            sh.q_limit_mvar = ss.q_limit_mvar.value_or(0.0);
            sh.svc_mode = ss.svc_mode;
        } else {
            const auto kv = kv_of.find(ss.bus);
            if (kv == kv_of.end()) fail(ValidationCode::DanglingReference, "shunt " + sh.id + " references unknown bus '" + ss.bus + "'");
            if (!ss.target_order) fail(ValidationCode::Parse, "filter " + sh.id + ": missing target_order");
            if (!(ss.q_mvar > 0)) fail(ValidationCode::InvalidValue, "filter " + sh.id + ": q_mvar must be positive");
            sh.filter = design_single_tuned_filter(ss.q_mvar * 1e6 / 3.0, kv->second * 1e3 / units::sqrt3,
                                                   spec.base_frequency_hz, *ss.target_order,
                                                   ss.quality_factor.value_or(kDefaultFilterQualityFactor));
        }
        d.shunts.push_back(std::move(sh));
    }
    return Network(std::move(d));
}

Network build_network(const json& j) { return build_network(parse_network_spec(j)); }

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(ValidationCode::Parse, path + ": " + e.what());
    }
}

Network load_network_file(const std::string& path) { return build_network(read_json_file(path)); }

NetworkSpec describe(const Network& net) {
    NetworkSpec s;
    s.base_mva = net.base_mva();
    s.base_frequency_hz = net.base_frequency_hz();
    for (const auto& b : net.buses()) {
        BusSpec bs;
        bs.id = b.id;
        bs.kind = b.kind;
        bs.nominal_kv = b.nominal_kv;
        bs.initial_magnitude = b.initial_magnitude;
        bs.initial_angle = b.initial_angle;
        bs.short_circuit_mva = b.short_circuit_mva;
        if (b.short_circuit_mva) bs.short_circuit_x_over_r = b.short_circuit_x_over_r;
        s.buses.push_back(bs);
    }
    for (const auto& br : net.branches()) {
        BranchSpec bs;
        bs.id = br.id;
        bs.from_bus = br.from_bus;
        bs.to_bus = br.to_bus;
        bs.kind = br.kind;
        bs.r_pu = br.resistance;
        bs.x_pu = br.reactance;
        bs.b_pu = br.susceptance;
        bs.xc_pu = br.series_capacitor_reactance;
        bs.tap_ratio = br.tap_ratio;
        bs.in_service = br.in_service;
        s.branches.push_back(bs);
    }
    s.loads = net.loads();
    s.generators = net.generators();
    for (const auto& sh : net.shunts()) {
        ShuntSpec ss;
        ss.id = sh.id;
        ss.bus = sh.bus;
        ss.kind = sh.kind;
        if (sh.kind == ShuntKind::SvcFixedQ) {
            ss.q_mvar = sh.q_mvar;
            ss.q_limit_mvar = sh.q_limit_mvar;
            ss.svc_mode = sh.svc_mode;
        } else {
            ss.q_mvar = sh.filter->reactive_power_per_phase_var * 3.0 / 1e6;
            ss.target_order = sh.filter->target_order;
            ss.quality_factor = sh.filter->quality_factor;
        }
        s.shunts.push_back(ss);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Admittance matrix
// ---------------------------------------------------------------------------

std::complex<double> filter_admittance_pu(const FilterDesign& f, double line_kv, double base_mva,
                                          double harmonic_order) {
    return units::impedance_base_ohm(line_kv, base_mva) / filter_impedance_ohm(f, harmonic_order);
}

Eigen::MatrixXcd admittance_matrix(const Network& net, double h) {
    if (!(h >= 1.0)) throw Error("admittance matrix: harmonic order must be >= 1");
    using cd = std::complex<double>;
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);

    for (const auto& br : net.branches()) {
        if (!br.in_service) continue;
        const auto f = static_cast<Eigen::Index>(net.bus_index(br.from_bus));
        const auto t = static_cast<Eigen::Index>(net.bus_index(br.to_bus));
        const cd ys = 1.0 / cd(br.resistance, h * br.reactance - br.series_capacitor_reactance / h);
        const cd ysh(0.0, h * br.susceptance / 2.0);
        const double tap = br.tap_ratio;
        y(f, f) += (ys + ysh) / (tap * tap);
        y(t, t) += ys + ysh;
        y(f, t) -= ys / tap;
        y(t, f) -= ys / tap;
    }

    for (const auto& sh : net.shunts()) {
        const auto i = static_cast<Eigen::Index>(net.bus_index(sh.bus));
        if (sh.kind == ShuntKind::SingleTunedFilter) {
            y(i, i) += filter_admittance_pu(*sh.filter, net.buses()[static_cast<std::size_t>(i)].nominal_kv,
                                            net.base_mva(), h);
        } else if (sh.svc_mode == SvcMode::Susceptance) {
            const double b = sh.q_mvar / net.base_mva();
            // capacitive susceptance grows with frequency, inductive falls
            y(i, i) += cd(0.0, b >= 0 ? b * h : b / h);
        }
    }
    return y;
}

}  // namespace pvgrid
