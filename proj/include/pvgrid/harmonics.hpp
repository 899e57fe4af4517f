#pragma once

#include "pvgrid/network.hpp"
#include "pvgrid/powerflow.hpp"

#include <map>
#include <string>
#include <vector>

namespace pvgrid {

struct HarmonicComponent {
    double magnitude_percent = 0;  // of the fundamental current at the source bus
    double phase_rad = 0;

    bool operator==(const HarmonicComponent&) const = default;
};

struct HarmonicSource {
    std::string bus;  // may be a "{n}" template; resolved against the network
    std::map<int, HarmonicComponent> spectrum;
    bool fitted = false;

    bool operator==(const HarmonicSource&) const = default;
};

/// Reads the "harmonic_sources" array of a case file. Missing key gives no sources.
std::vector<HarmonicSource> parse_harmonic_sources(const nlohmann::json& case_json);
nlohmann::json to_json(const HarmonicSource& s);

/// Multiplies every source magnitude by `factor`.
std::vector<HarmonicSource> scale_sources(std::vector<HarmonicSource> sources, double factor);

/// Orders present in any source, ascending.
std::vector<int> source_orders(const std::vector<HarmonicSource>& sources);

struct HarmonicReport {
    std::vector<std::string> bus_ids;
    std::vector<double> nominal_kv;
    std::vector<int> orders;
    std::vector<std::vector<double>> vh_percent;  // [bus][order index]
    std::vector<double> thd_percent;

    std::size_t index_of(const std::string& bus) const;
    double thd_at(const std::string& bus) const;
    double vh_at(const std::string& bus, int order) const;
};

struct HarmonicScanOptions {
    bool include_loads = true;  // loads as shunt impedances at each order
};

/// Solves Y(h) V(h) = I(h) for every order. Throws ResonanceError on a singular Y(h).
HarmonicReport harmonic_scan(const Network& network, const PowerFlowSolution& fundamental,
                             const std::vector<HarmonicSource>& sources, const std::vector<int>& orders,
                             const HarmonicScanOptions& options = {});

/// sqrt(sum V_h^2) / V_1 x 100.
double thd(double fundamental, const std::vector<double>& components);

/// THD limit (percent) by bus voltage class, upper bound inclusive.
struct ThdLimitTable {
    struct Row {
        double max_kv;
        double limit_percent;
    };
    std::vector<Row> rows;  // ascending max_kv; the last row also covers anything above

    static ThdLimitTable ieee519();
    double limit_for(double kv) const;
};

ThdLimitTable parse_thd_limits(const nlohmann::json& j);
nlohmann::json to_json(const ThdLimitTable& t);

struct ThdVerdict {
    std::string bus;
    double nominal_kv = 0;
    double thd_percent = 0;
    double limit_percent = 0;
    bool pass = true;
};

std::vector<ThdVerdict> ieee519_check(const HarmonicReport& report, const ThdLimitTable& limits = ThdLimitTable::ieee519());

/// Single-bus form: THD at a given voltage class.
ThdVerdict ieee519_check(double thd_percent, double bus_kv, const ThdLimitTable& limits = ThdLimitTable::ieee519());

}  // namespace pvgrid
