#pragma once

#include "pvgrid/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace pvgrid::rl {

enum class DisturbanceKind { None, StepAtTime, RandomWalk };

struct DisturbanceConfig {
    DisturbanceKind kind = DisturbanceKind::None;
    double step_pu = -0.07;  // StepAtTime magnitude
    int step_time = 10;
    double walk_sigma_pu = 0.005;  // RandomWalk increment standard deviation
    double walk_limit_pu = 0.1;

    bool operator==(const DisturbanceConfig&) const = default;
};

/// "none", "step:-0.07@10", "walk:0.005".
DisturbanceConfig parse_disturbance(const std::string& text);
std::string to_string(const DisturbanceConfig& d);

struct EnvConfig {
    double nominal_voltage = 1.0;
    double band_low = 0.95;
    double band_high = 1.05;
    double sensitivity_pu_per_mvar = 1e-4;  // k_v
    double q_step_mvar = 500;
    double q_limit_mvar = 6500;
    int action_levels = 1;  // actions are -levels..levels times q_step
    DisturbanceConfig disturbance;
    int episode_length = 30;
    std::uint64_t seed = 42;
    double deviation_weight = 1.0;
    double in_band_bonus = 0.5;

    bool operator==(const EnvConfig&) const = default;
};

void validate(const EnvConfig& c);
EnvConfig parse_env_config(const nlohmann::json& j);
nlohmann::json to_json(const EnvConfig& c);

struct EnvState {
    double voltage = 1.0;
    double svc_q_mvar = 0;
    int step_index = 0;
};

struct StepResult {
    EnvState state;
    double reward = 0;
};

/// Voltage seen by the controller for a given SVC output, before disturbances.
class Plant {
public:
    virtual ~Plant() = default;
    virtual double voltage(double svc_q_mvar) const = 0;
};

/// v = nominal + k_v q.
class LinearPlant : public Plant {
public:
    explicit LinearPlant(const EnvConfig& c) : nominal_(c.nominal_voltage), k_v_(c.sensitivity_pu_per_mvar) {}
    double voltage(double q) const override { return nominal_ + k_v_ * q; }

private:
    double nominal_, k_v_;
};

/// Voltage at `bus` from a full load flow with the SVC set to q (constant-Q at that bus).
class LoadFlowPlant : public Plant {
public:
    LoadFlowPlant(Network network, std::string bus, double q_limit_mvar);
    double voltage(double q) const override;

private:
    Network network_;
    std::string bus_;
    double q_limit_;
    mutable std::map<double, double> cache_;
};

double reward(double voltage, const EnvConfig& c);
bool in_band(double voltage, const EnvConfig& c);

/// One control step: q' = clamp(q + action), v' = plant(q') + disturbance.
StepResult env_step(const EnvState& s, double action_mvar, const EnvConfig& c, double disturbance_pu,
                    const Plant& plant);
/// Linear plant.
StepResult env_step(const EnvState& s, double action_mvar, const EnvConfig& c, double disturbance_pu = 0.0);

/// Disturbance offset per step, deterministic for a given seed.
class DisturbanceProcess {
public:
    DisturbanceProcess(DisturbanceConfig cfg, std::uint64_t seed);
    double at(int step);

private:
    DisturbanceConfig cfg_;
    std::mt19937_64 rng_;
    std::vector<double> walk_;
};

/// Uniform voltage bins; bin k is centred at low + k (high - low) / (count - 1).
struct StateBins {
    double low = 0.90;
    double high = 1.10;
    int count = 81;

    double width() const { return (high - low) / (count - 1); }
    double center(int k) const { return low + k * width(); }
    int bin_of(double voltage) const;

    bool operator==(const StateBins&) const = default;
};

/// Value-function seam: tabular today, any approximator with this contract later.
class ValueFunction {
public:
    virtual ~ValueFunction() = default;
    virtual double value(int state, int action) const = 0;
    virtual void update(int state, int action, double target, double learning_rate) = 0;
    virtual int state_count() const = 0;
    virtual int action_count() const = 0;
    virtual std::unique_ptr<ValueFunction> clone() const = 0;
    virtual nlohmann::json to_json() const = 0;
};

class TabularValueFunction : public ValueFunction {
public:
    TabularValueFunction(int states, int actions);
    explicit TabularValueFunction(const nlohmann::json& j);

    double value(int s, int a) const override { return table_[index(s, a)]; }
    void update(int s, int a, double target, double lr) override;
    int state_count() const override { return states_; }
    int action_count() const override { return actions_; }
    std::unique_ptr<ValueFunction> clone() const override { return std::make_unique<TabularValueFunction>(*this); }
    nlohmann::json to_json() const override;

    const std::vector<double>& table() const { return table_; }

private:
    std::size_t index(int s, int a) const { return static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a); }
    int states_, actions_;
    std::vector<double> table_;
};

struct Hyperparameters {
    double learning_rate = 1.0;  // full replacement: transitions between bins are deterministic
    double discount = 0.9;
    double epsilon_initial = 1.0;
    double epsilon_final = 0.05;
    double epsilon_decay = 0.99;  // per episode
    int episodes = 500;

    bool operator==(const Hyperparameters&) const = default;
    double epsilon(int episode) const;
};

Hyperparameters parse_hyperparameters(const nlohmann::json& j);
nlohmann::json to_json(const Hyperparameters& h);

class Agent {
public:
    Agent(StateBins bins, std::vector<double> actions_mvar, Hyperparameters hp, std::unique_ptr<ValueFunction> q);
    Agent(const Agent& o);
    Agent& operator=(const Agent& o);
    Agent(Agent&&) = default;
    Agent& operator=(Agent&&) = default;

    const StateBins& bins() const { return bins_; }
    const std::vector<double>& actions_mvar() const { return actions_; }
    const Hyperparameters& hyperparameters() const { return hp_; }
    const ValueFunction& values() const { return *q_; }
    ValueFunction& values() { return *q_; }

    /// Greedy action index; ties go to the smallest |action|.
    int greedy_action(int state) const;
    double greedy_action_mvar(double voltage) const;

    nlohmann::json to_json() const;
    static Agent from_json(const nlohmann::json& j);

private:
    StateBins bins_;
    std::vector<double> actions_;
    Hyperparameters hp_;
    std::unique_ptr<ValueFunction> q_;
};

/// Action set {-levels..levels} x q_step, ascending.
std::vector<double> action_set(const EnvConfig& c);

Agent make_agent(const EnvConfig& c, const Hyperparameters& hp, const StateBins& bins = {});

struct TrainingLog {
    std::vector<double> episode_return;
    std::vector<double> epsilon;
};

struct TrainingResult {
    Agent agent;
    TrainingLog log;
};

/// One-step Q-learning with epsilon-greedy exploration. Each episode starts at a random bin
/// centre with the SVC at zero. Throws on a non-finite update.
TrainingResult train_agent(const EnvConfig& c, const Hyperparameters& hp, const StateBins& bins = {});

struct TraceRow {
    int step;
    double voltage_pu;
    double action_mvar;
    double reward;
    double svc_q_mvar;
};

struct EpisodeTrace {
    std::vector<TraceRow> rows;
};

/// Greedy rollout from nominal voltage. `disturbance` gives the offset at each step.
EpisodeTrace evaluate_episode(const Agent& agent, const EnvConfig& c, const std::vector<double>& disturbance,
                              const Plant* plant = nullptr);
EpisodeTrace evaluate_episode(const Agent& agent, const EnvConfig& c, const DisturbanceConfig& disturbance,
                              const Plant* plant = nullptr);

/// Exact action values of the binned environment by value iteration, [state][action].
std::vector<std::vector<double>> dp_action_values(const EnvConfig& c, const StateBins& bins, double discount,
                                                  double tolerance = 1e-12);

/// Fraction of bins where the agent's greedy action is DP-optimal (ties within `tie_tolerance` count).
double policy_agreement(const Agent& agent, const EnvConfig& c, double tie_tolerance = 1e-6);

}  // namespace pvgrid::rl
