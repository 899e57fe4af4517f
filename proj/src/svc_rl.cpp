#include "pvgrid/svc_rl.hpp"

#include "pvgrid/compensation.hpp"
#include "pvgrid/errors.hpp"
#include "pvgrid/powerflow.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace pvgrid::rl {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Box-Muller, written out so results do not depend on the standard library's distribution code.
double standard_normal(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int uniform_int(std::mt19937_64& rng, int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); }

constexpr double kBandSlack = 1e-9;

}  // namespace

DisturbanceConfig parse_disturbance(const std::string& text) {
    DisturbanceConfig d;
    if (text.empty() || text == "none") return d;
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
    try {
        if (kind == "step") {
            const auto at = rest.find('@');
            if (at == std::string::npos) throw Error("missing '@'");
            d.kind = DisturbanceKind::StepAtTime;
            d.step_pu = std::stod(rest.substr(0, at));
            d.step_time = std::stoi(rest.substr(at + 1));
            return d;
        }
        if (kind == "walk") {
            d.kind = DisturbanceKind::RandomWalk;
            if (!rest.empty()) d.walk_sigma_pu = std::stod(rest);
            return d;
        }
    } catch (const std::exception& e) {
        throw Error("bad disturbance '" + text + "': " + e.what());
    }
    throw Error("bad disturbance '" + text + "': expected none, step:<pu>@<step> or walk:<sigma>");
}

std::string to_string(const DisturbanceConfig& d) {
    switch (d.kind) {
        case DisturbanceKind::None: return "none";
        case DisturbanceKind::StepAtTime: return fmt::format("step:{}@{}", d.step_pu, d.step_time);
        case DisturbanceKind::RandomWalk: return fmt::format("walk:{}", d.walk_sigma_pu);
    }
    return "none";
}

void validate(const EnvConfig& c) {
    if (!(c.band_low < c.nominal_voltage && c.nominal_voltage < c.band_high))
        throw Error("env config: band_low < nominal < band_high required");
    if (!(c.sensitivity_pu_per_mvar > 0)) throw Error("env config: sensitivity must be positive");
    if (!(c.q_step_mvar > 0)) throw Error("env config: q_step must be positive");
    if (!(c.q_limit_mvar >= 0)) throw Error("env config: q_limit must be nonnegative");
    if (c.action_levels < 1) throw Error("env config: action_levels must be >= 1");
    if (c.episode_length < 1) throw Error("env config: episode_length must be >= 1");
}

EnvConfig parse_env_config(const nlohmann::json& j) {
    EnvConfig c;
    c.nominal_voltage = j.value("nominal_voltage", c.nominal_voltage);
    c.band_low = j.value("band_low", c.band_low);
    c.band_high = j.value("band_high", c.band_high);
    c.sensitivity_pu_per_mvar = j.value("sensitivity_pu_per_mvar", c.sensitivity_pu_per_mvar);
    c.q_step_mvar = j.value("q_step_mvar", c.q_step_mvar);
    c.q_limit_mvar = j.value("q_limit_mvar", c.q_limit_mvar);
    c.action_levels = j.value("action_levels", c.action_levels);
    if (j.contains("disturbance")) c.disturbance = parse_disturbance(j.at("disturbance").get<std::string>());
    c.disturbance.walk_limit_pu = j.value("walk_limit_pu", c.disturbance.walk_limit_pu);
    c.episode_length = j.value("episode_length", c.episode_length);
    c.seed = j.value("seed", c.seed);
    c.deviation_weight = j.value("deviation_weight", c.deviation_weight);
    c.in_band_bonus = j.value("in_band_bonus", c.in_band_bonus);
    validate(c);
    return c;
}

nlohmann::json to_json(const EnvConfig& c) {
    return {{"nominal_voltage", c.nominal_voltage},
            {"band_low", c.band_low},
            {"band_high", c.band_high},
            {"sensitivity_pu_per_mvar", c.sensitivity_pu_per_mvar},
            {"q_step_mvar", c.q_step_mvar},
            {"q_limit_mvar", c.q_limit_mvar},
            {"action_levels", c.action_levels},
            {"disturbance", to_string(c.disturbance)},
            {"walk_limit_pu", c.disturbance.walk_limit_pu},
            {"episode_length", c.episode_length},
            {"seed", c.seed},
            {"deviation_weight", c.deviation_weight},
            {"in_band_bonus", c.in_band_bonus}};
}

LoadFlowPlant::LoadFlowPlant(Network network, std::string bus, double q_limit_mvar)
    : network_(std::move(network)), bus_(std::move(bus)), q_limit_(q_limit_mvar) {
    network_.bus_index(bus_);
}

double LoadFlowPlant::voltage(double q) const {
    if (const auto it = cache_.find(q); it != cache_.end()) return it->second;
    const Network n = apply_svc(network_, bus_, q, q_limit_);
    const auto sol = solve_load_flow(n);
    const double v = sol.magnitude[sol.index_of(bus_)];
    cache_.emplace(q, v);
    return v;
}

bool in_band(double v, const EnvConfig& c) { return v >= c.band_low - kBandSlack && v <= c.band_high + kBandSlack; }

double reward(double v, const EnvConfig& c) {
    return -c.deviation_weight * std::abs(v - c.nominal_voltage) + (in_band(v, c) ? c.in_band_bonus : 0.0);
}

StepResult env_step(const EnvState& s, double action, const EnvConfig& c, double disturbance, const Plant& plant) {
    StepResult r;
    r.state.svc_q_mvar = std::clamp(s.svc_q_mvar + action, -c.q_limit_mvar, c.q_limit_mvar);
    r.state.voltage = plant.voltage(r.state.svc_q_mvar) + disturbance;
    r.state.step_index = s.step_index + 1;
    r.reward = reward(r.state.voltage, c);
    return r;
}

StepResult env_step(const EnvState& s, double action, const EnvConfig& c, double disturbance) {
    return env_step(s, action, c, disturbance, LinearPlant(c));
}

DisturbanceProcess::DisturbanceProcess(DisturbanceConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}

double DisturbanceProcess::at(int step) {
    switch (cfg_.kind) {
        case DisturbanceKind::None: return 0.0;
        case DisturbanceKind::StepAtTime: return step >= cfg_.step_time ? cfg_.step_pu : 0.0;
        case DisturbanceKind::RandomWalk:
            if (walk_.empty()) walk_.push_back(0.0);
            while (static_cast<int>(walk_.size()) <= step) {
                const double next = walk_.back() + cfg_.walk_sigma_pu * standard_normal(rng_);
                walk_.push_back(std::clamp(next, -cfg_.walk_limit_pu, cfg_.walk_limit_pu));
            }
            return walk_[static_cast<std::size_t>(step)];
    }
    return 0.0;
}

int StateBins::bin_of(double v) const {
    const double k = std::round((v - low) / width());
    return static_cast<int>(std::clamp(k, 0.0, static_cast<double>(count - 1)));
}

TabularValueFunction::TabularValueFunction(int states, int actions)
    : states_(states), actions_(actions), table_(static_cast<std::size_t>(states) * static_cast<std::size_t>(actions), 0.0) {
    if (states < 1 || actions < 1) throw Error("value table needs at least one state and one action");
}

TabularValueFunction::TabularValueFunction(const nlohmann::json& j)
    : TabularValueFunction(static_cast<int>(j.at("values").size()), static_cast<int>(j.at("values").at(0).size())) {
    for (int s = 0; s < states_; ++s) {
        const auto& row = j.at("values").at(static_cast<std::size_t>(s));
        if (static_cast<int>(row.size()) != actions_) throw Error("ragged value table");
        for (int a = 0; a < actions_; ++a) table_[index(s, a)] = row.at(static_cast<std::size_t>(a)).get<double>();
    }
}

void TabularValueFunction::update(int s, int a, double target, double lr) {
    auto& q = table_[index(s, a)];
    const double next = q + lr * (target - q);
    if (!std::isfinite(next))
        throw Error(fmt::format("non-finite value update at state {} action {} (q={}, target={}, learning rate={})", s, a, q,
                                target, lr));
    q = next;
}

nlohmann::json TabularValueFunction::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (int s = 0; s < states_; ++s) {
        nlohmann::json row = nlohmann::json::array();
        for (int a = 0; a < actions_; ++a) row.push_back(table_[index(s, a)]);
        rows.push_back(row);
    }
    return {{"kind", "tabular"}, {"values", rows}};
}

double Hyperparameters::epsilon(int episode) const {
    return std::max(epsilon_final, epsilon_initial * std::pow(epsilon_decay, episode));
}

Hyperparameters parse_hyperparameters(const nlohmann::json& j) {
    Hyperparameters h;
    h.learning_rate = j.value("learning_rate", h.learning_rate);
    h.discount = j.value("discount", h.discount);
    h.epsilon_initial = j.value("epsilon_initial", h.epsilon_initial);
    h.epsilon_final = j.value("epsilon_final", h.epsilon_final);
    h.epsilon_decay = j.value("epsilon_decay", h.epsilon_decay);
    h.episodes = j.value("episodes", h.episodes);
    if (!(h.epsilon_initial >= 0 && h.epsilon_initial <= 1 && h.epsilon_final >= 0 && h.epsilon_final <= 1))
        throw Error("exploration rates must lie in [0, 1]");
    if (!(h.discount >= 0 && h.discount < 1)) throw Error("discount must lie in [0, 1)");
    if (!(h.learning_rate > 0)) throw Error("learning rate must be positive");
    if (h.episodes < 0) throw Error("episodes must be >= 0");
    return h;
}

nlohmann::json to_json(const Hyperparameters& h) {
    return {{"learning_rate", h.learning_rate}, {"discount", h.discount},       {"epsilon_initial", h.epsilon_initial},
            {"epsilon_final", h.epsilon_final}, {"epsilon_decay", h.epsilon_decay}, {"episodes", h.episodes}};
}

Agent::Agent(StateBins bins, std::vector<double> actions, Hyperparameters hp, std::unique_ptr<ValueFunction> q)
    : bins_(bins), actions_(std::move(actions)), hp_(hp), q_(std::move(q)) {
    if (!q_) throw Error("agent needs a value function");
    if (q_->state_count() != bins_.count || q_->action_count() != static_cast<int>(actions_.size()))
        throw Error("value function shape does not match bins x actions");
}

Agent::Agent(const Agent& o) : bins_(o.bins_), actions_(o.actions_), hp_(o.hp_), q_(o.q_->clone()) {}

Agent& Agent::operator=(const Agent& o) {
    if (this != &o) {
        bins_ = o.bins_;
        actions_ = o.actions_;
        hp_ = o.hp_;
        q_ = o.q_->clone();
    }
    return *this;
}

int Agent::greedy_action(int s) const {
    int best = 0;
    for (int a = 1; a < static_cast<int>(actions_.size()); ++a) {
        const double qa = q_->value(s, a), qb = q_->value(s, best);
        if (qa > qb || (qa == qb && std::abs(actions_[static_cast<std::size_t>(a)]) < std::abs(actions_[static_cast<std::size_t>(best)])))
            best = a;
    }
    return best;
}

double Agent::greedy_action_mvar(double v) const { return actions_[static_cast<std::size_t>(greedy_action(bins_.bin_of(v)))]; }

nlohmann::json Agent::to_json() const {
    return {{"bins", {{"low", bins_.low}, {"high", bins_.high}, {"count", bins_.count}}},
            {"actions_mvar", actions_},
            {"hyperparameters", rl::to_json(hp_)},
            {"value_function", q_->to_json()}};
}

Agent Agent::from_json(const nlohmann::json& j) {
    StateBins b;
    b.low = j.at("bins").at("low").get<double>();
    b.high = j.at("bins").at("high").get<double>();
    b.count = j.at("bins").at("count").get<int>();
    const auto& vf = j.at("value_function");
    if (vf.value("kind", "tabular") != "tabular") throw Error("unsupported value function kind");
    return Agent(b, j.at("actions_mvar").get<std::vector<double>>(), parse_hyperparameters(j.at("hyperparameters")),
                 std::make_unique<TabularValueFunction>(vf));
}

std::vector<double> action_set(const EnvConfig& c) {
    std::vector<double> a;
    for (int k = -c.action_levels; k <= c.action_levels; ++k) a.push_back(k * c.q_step_mvar);
    return a;
}

Agent make_agent(const EnvConfig& c, const Hyperparameters& hp, const StateBins& bins) {
    const auto actions = action_set(c);
    return Agent(bins, actions, hp, std::make_unique<TabularValueFunction>(bins.count, static_cast<int>(actions.size())));
}

TrainingResult train_agent(const EnvConfig& c, const Hyperparameters& hp, const StateBins& bins) {
    validate(c);
    Agent agent = make_agent(c, hp, bins);
    TrainingLog log;
    std::mt19937_64 rng(c.seed);
    const LinearPlant plant(c);
    const int n_actions = static_cast<int>(agent.actions_mvar().size());

    for (int e = 0; e < hp.episodes; ++e) {
        const double eps = hp.epsilon(e);
        const int start = uniform_int(rng, bins.count);
        const double offset = bins.center(start) - c.nominal_voltage;
        DisturbanceProcess dist(c.disturbance, rng());
        EnvState s{plant.voltage(0.0) + offset + dist.at(0), 0.0, 0};
        double total = 0;
        for (int t = 0; t < c.episode_length; ++t) {
            const int sb = bins.bin_of(s.voltage);
            const int a = uniform01(rng) < eps ? uniform_int(rng, n_actions) : agent.greedy_action(sb);
            const auto r = env_step(s, agent.actions_mvar()[static_cast<std::size_t>(a)], c, offset + dist.at(t + 1), plant);
            const int nb = bins.bin_of(r.state.voltage);
            double best_next = agent.values().value(nb, 0);
            for (int k = 1; k < n_actions; ++k) best_next = std::max(best_next, agent.values().value(nb, k));
            agent.values().update(sb, a, r.reward + hp.discount * best_next, hp.learning_rate);
            total += r.reward;
            s = r.state;
        }
        log.episode_return.push_back(total);
        log.epsilon.push_back(eps);
    }
    return {std::move(agent), std::move(log)};
}

EpisodeTrace evaluate_episode(const Agent& agent, const EnvConfig& c, const std::vector<double>& d, const Plant* plant) {
    const LinearPlant linear(c);
    const Plant& p = plant ? *plant : static_cast<const Plant&>(linear);
    auto dist = [&](int t) { return t < static_cast<int>(d.size()) ? d[static_cast<std::size_t>(t)] : (d.empty() ? 0.0 : d.back()); };
    EpisodeTrace trace;
    EnvState s{p.voltage(0.0) + dist(0), 0.0, 0};
    for (int t = 0; t < c.episode_length; ++t) {
        const double a = agent.greedy_action_mvar(s.voltage);
        const auto r = env_step(s, a, c, dist(t + 1), p);
        trace.rows.push_back({r.state.step_index, r.state.voltage, a, r.reward, r.state.svc_q_mvar});
        s = r.state;
    }
    return trace;
}

EpisodeTrace evaluate_episode(const Agent& agent, const EnvConfig& c, const DisturbanceConfig& d, const Plant* plant) {
    DisturbanceProcess proc(d, c.seed);
    std::vector<double> seq;
    for (int t = 0; t <= c.episode_length; ++t) seq.push_back(proc.at(t));
    return evaluate_episode(agent, c, seq, plant);
}

std::vector<std::vector<double>> dp_action_values(const EnvConfig& c, const StateBins& bins, double discount, double tol) {
    const auto actions = action_set(c);
    const auto na = actions.size();
    const auto ns = static_cast<std::size_t>(bins.count);
    std::vector<int> next(ns * na);
    std::vector<double> rew(ns * na);
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a) {
            const double v = bins.center(static_cast<int>(s)) + c.sensitivity_pu_per_mvar * actions[a];
            next[s * na + a] = bins.bin_of(v);
            rew[s * na + a] = reward(v, c);
        }
    std::vector<double> value(ns, 0.0);
    std::vector<std::vector<double>> q(ns, std::vector<double>(na, 0.0));
    for (int it = 0; it < 100000; ++it) {
        double delta = 0;
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a)
                q[s][a] = rew[s * na + a] + discount * value[static_cast<std::size_t>(next[s * na + a])];
        for (std::size_t s = 0; s < ns; ++s) {
            const double best = *std::max_element(q[s].begin(), q[s].end());
            delta = std::max(delta, std::abs(best - value[s]));
            value[s] = best;
        }
        if (delta < tol) break;
    }
    return q;
}

double policy_agreement(const Agent& agent, const EnvConfig& c, double tie_tolerance) {
    const auto q = dp_action_values(c, agent.bins(), agent.hyperparameters().discount);
    int match = 0;
    for (int s = 0; s < agent.bins().count; ++s) {
        const auto& row = q[static_cast<std::size_t>(s)];
        const double best = *std::max_element(row.begin(), row.end());
        if (row[static_cast<std::size_t>(agent.greedy_action(s))] >= best - tie_tolerance) ++match;
    }
    return static_cast<double>(match) / agent.bins().count;
}

}  // namespace pvgrid::rl
