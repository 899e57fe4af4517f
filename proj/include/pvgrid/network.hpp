#pragma once

#include "pvgrid/filter_design.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace pvgrid {

enum class BusKind { Slack, PV, PQ };
enum class BranchKind { Line, Transformer };
enum class ShuntKind { SvcFixedQ, SingleTunedFilter };
enum class SvcMode { ConstantQ, Susceptance };

std::string to_string(BusKind k);
std::string to_string(BranchKind k);
std::string to_string(ShuntKind k);

// ---------------------------------------------------------------------------
// Validated network (per-unit impedances, MW/MVAR powers)
// ---------------------------------------------------------------------------

struct Bus {
    std::string id;
    BusKind kind = BusKind::PQ;
    double nominal_kv = 1.0;
    double initial_magnitude = 1.0;  // pu
    double initial_angle = 0.0;      // rad
    // Harmonic equivalent of an external grid behind this bus. Absent means ideal source.
    std::optional<double> short_circuit_mva;
    double short_circuit_x_over_r = 10.0;

    bool operator==(const Bus&) const = default;
};

struct Branch {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    BranchKind kind = BranchKind::Line;
    double resistance = 0.0;   // pu
    double reactance = 0.0;    // pu, inductive
    double susceptance = 0.0;  // pu, total line charging
    double tap_ratio = 1.0;    // off-nominal ratio on the from side
    double series_capacitor_reactance = 0.0;  // pu, series compensation
    bool in_service = true;

    bool operator==(const Branch&) const = default;
};

struct Load {
    std::string id;
    std::string bus;
    double active_power_mw = 0.0;
    double reactive_power_mvar = 0.0;

    bool operator==(const Load&) const = default;
};

struct Generator {
    std::string id;
    std::string bus;
    double active_power_mw = 0.0;
    double voltage_setpoint = 1.0;
    double q_min_mvar = -1e9;
    double q_max_mvar = 1e9;

    bool operator==(const Generator&) const = default;
};

struct Shunt {
    std::string id;
    std::string bus;
    ShuntKind kind = ShuntKind::SvcFixedQ;
    double q_mvar = 0.0;        // SVC setting, positive = capacitive injection
    double q_limit_mvar = 0.0;  // SVC rating magnitude
    SvcMode svc_mode = SvcMode::ConstantQ;
    std::optional<FilterDesign> filter;

    bool operator==(const Shunt&) const = default;
};

struct NetworkData {
    double base_mva = 100.0;
    double base_frequency_hz = 50.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Load> loads;
    std::vector<Generator> generators;
    std::vector<Shunt> shunts;
    // Template bus id -> instance ids, for buses created from repeated sub-blocks.
    std::map<std::string, std::vector<std::string>> bus_groups;

    bool operator==(const NetworkData&) const = default;
};

/// Immutable, validated network. Construct through build_network or from NetworkData.
class Network {
public:
    explicit Network(NetworkData data);

    const NetworkData& data() const noexcept { return data_; }
    double base_mva() const noexcept { return data_.base_mva; }
    double base_frequency_hz() const noexcept { return data_.base_frequency_hz; }
    const std::vector<Bus>& buses() const noexcept { return data_.buses; }
    const std::vector<Branch>& branches() const noexcept { return data_.branches; }
    const std::vector<Load>& loads() const noexcept { return data_.loads; }
    const std::vector<Generator>& generators() const noexcept { return data_.generators; }
    const std::vector<Shunt>& shunts() const noexcept { return data_.shunts; }

    std::size_t bus_count() const noexcept { return data_.buses.size(); }
    std::size_t bus_index(const std::string& id) const;
    std::optional<std::size_t> find_bus(const std::string& id) const;
    std::size_t branch_index(const std::string& id) const;
    std::size_t slack_index() const noexcept { return slack_; }

    /// Instance ids for a bus reference; a plain id maps to itself.
    std::vector<std::string> resolve_bus_reference(const std::string& id) const;

    bool operator==(const Network& o) const { return data_ == o.data_; }

private:
    NetworkData data_;
    std::unordered_map<std::string, std::size_t> bus_lookup_;
    std::unordered_map<std::string, std::size_t> branch_lookup_;
    std::size_t slack_ = 0;
};

// ---------------------------------------------------------------------------
// Declarative description (JSON case file)
// ---------------------------------------------------------------------------

struct BusSpec {
    std::string id;
    BusKind kind = BusKind::PQ;
    double nominal_kv = 0.0;
    double initial_magnitude = 1.0;
    double initial_angle = 0.0;
    std::optional<double> short_circuit_mva;
    std::optional<double> short_circuit_x_over_r;

    bool operator==(const BusSpec&) const = default;
};

// Exactly one impedance family is used: rating-based (transformers), ohmic, or per-unit.
struct BranchSpec {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    BranchKind kind = BranchKind::Line;
    std::optional<double> r_pu, x_pu, b_pu, xc_pu;
    std::optional<double> r_ohm, x_ohm, b_us, xc_ohm;
    std::optional<double> rating_mva, z_percent, x_over_r;
    std::optional<int> parallel_units;
    double tap_ratio = 1.0;
    bool in_service = true;

    bool operator==(const BranchSpec&) const = default;
};

struct ShuntSpec {
    std::string id;
    std::string bus;
    ShuntKind kind = ShuntKind::SvcFixedQ;
    double q_mvar = 0.0;  // SVC setting, or 3-phase capacitor rating for filters
    std::optional<double> q_limit_mvar;
    SvcMode svc_mode = SvcMode::ConstantQ;
    std::optional<int> target_order;
    std::optional<double> quality_factor;

    bool operator==(const ShuntSpec&) const = default;
};

/// Repeated sub-block. Ids containing "{n}" are instantiated per copy when expanded,
/// otherwise one equivalent copy is built with impedances divided and powers multiplied by count.
struct BlockSpec {
    std::string id;
    int count = 1;
    bool expand = false;
    std::vector<BusSpec> buses;
    std::vector<BranchSpec> branches;
    std::vector<Load> loads;
    std::vector<Generator> generators;
    std::vector<ShuntSpec> shunts;

    bool operator==(const BlockSpec&) const = default;
};

struct NetworkSpec {
    double base_mva = 100.0;
    double base_frequency_hz = 50.0;
    std::vector<BusSpec> buses;
    std::vector<BranchSpec> branches;
    std::vector<Load> loads;
    std::vector<Generator> generators;
    std::vector<ShuntSpec> shunts;
    std::vector<BlockSpec> blocks;

    bool operator==(const NetworkSpec&) const = default;
};

NetworkSpec parse_network_spec(const nlohmann::json& j);
nlohmann::json to_json(const NetworkSpec& spec);

/// Validates the description and converts impedances to per-unit on base_mva.
Network build_network(const NetworkSpec& spec);
Network build_network(const nlohmann::json& j);
Network load_network_file(const std::string& path);

/// Per-unit description that rebuilds to an identical network.
NetworkSpec describe(const Network& network);

nlohmann::json read_json_file(const std::string& path);

/// Nodal admittance matrix at harmonic order h (1 = fundamental). Includes branches,
/// line charging, filters and susceptance-mode SVCs; loads, generators and constant-Q
/// SVCs are not admittances and are left out.
Eigen::MatrixXcd admittance_matrix(const Network& network, double harmonic_order = 1.0);

/// Per-phase shunt admittance (pu) a filter presents at harmonic order h.
std::complex<double> filter_admittance_pu(const FilterDesign& f, double line_kv, double base_mva,
                                          double harmonic_order);

}  // namespace pvgrid
