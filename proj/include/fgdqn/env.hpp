#pragma once

#include "fgdqn/rng.hpp"
#include "fgdqn/tabular_model.hpp"

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fgdqn {

using StateId = int;
using ActionId = int;

inline constexpr ActionId kPassive = 0;
inline constexpr ActionId kActive = 1;

struct Transition {
    StateId state = 0;
    ActionId action = 0;
    double reward = 0.0;
    StateId next_state = 0;

    friend bool operator==(const Transition&, const Transition&) = default;
};

struct StepResult {
    StateId next_state;
    double reward;
};

enum class EncodingMode { OneHot, NormalizedScalar, TupleNormalized };

/// Maps state ids to bounded feature vectors. Features are precomputed, one
/// row per state.
class FeatureEncoding {
public:
    FeatureEncoding() = default;
    FeatureEncoding(EncodingMode mode, Eigen::MatrixXd table) : mode_(mode), table_(std::move(table)) {}

    static FeatureEncoding one_hot(int num_states);
    static FeatureEncoding normalized_scalar(int num_states);
    /// `tuples` holds one row of raw components per state; each column is
    /// divided by its maximum.
    static FeatureEncoding tuple_normalized(const Eigen::MatrixXd& tuples);

    EncodingMode mode() const { return mode_; }
    int dimension() const { return static_cast<int>(table_.cols()); }
    int num_states() const { return static_cast<int>(table_.rows()); }
    auto row(StateId s) const { return table_.row(s); }
    const Eigen::MatrixXd& table() const { return table_; }

private:
    EncodingMode mode_ = EncodingMode::OneHot;
    Eigen::MatrixXd table_;
};

/// A finite controlled Markov chain with a sampling interface. Immutable after
/// construction; all randomness comes from the caller's generator.
class Environment {
public:
    virtual ~Environment() = default;

    virtual const std::string& key() const = 0;
    virtual int num_states() const = 0;
    virtual int num_actions() const = 0;
    virtual StepResult step(StateId state, ActionId action, Rng& rng) const = 0;
    /// Exact model, or nullptr for environments only available as simulators.
    virtual const TabularModeld* tabular_model() const = 0;
    virtual const FeatureEncoding& encoding() const = 0;

    Eigen::VectorXd encode(StateId s) const;
    void check(StateId s, ActionId u) const;
};

class TabularEnvironment final : public Environment {
public:
    TabularEnvironment(std::string key, TabularModeld model, FeatureEncoding encoding);

    const std::string& key() const override { return key_; }
    int num_states() const override { return model_.num_states(); }
    int num_actions() const override { return model_.num_actions(); }
    StepResult step(StateId state, ActionId action, Rng& rng) const override;
    const TabularModeld* tabular_model() const override { return &model_; }
    const FeatureEncoding& encoding() const override { return encoding_; }

private:
    std::string key_;
    TabularModeld model_;
    FeatureEncoding encoding_;
};

using EnvOverrides = std::map<std::string, double>;

struct DeadlineParams {
    int max_deadline = 12;
    int max_load = 9;
    double cost = 0.5;
    double penalty = 0.2;  // penalty * residual^2 charged when the deadline passes
    double arrival = 0.3;

    int num_states() const { return (max_deadline + 1) * (max_load + 1); }
    StateId id(int deadline, int load) const { return deadline * (max_load + 1) + load; }
};

struct AccessControlParams {
    int servers = 10;
    double free_prob = 0.06;
    std::vector<double> priorities{1.0, 2.0, 4.0, 8.0};

    int num_states() const { return (servers + 1) * static_cast<int>(priorities.size()); }
    StateId id(int free, int priority_index) const {
        return free * static_cast<int>(priorities.size()) + priority_index;
    }
};

struct ForestParams {
    int ages = 7;
    double fire = 0.1;
    double wait_reward = 4.0;
    double cut_reward = 2.0;
};

std::unique_ptr<Environment> make_circulant();
std::unique_ptr<Environment> make_restart();
std::unique_ptr<Environment> make_deadline(const DeadlineParams& params, std::string key = "deadline");
std::unique_ptr<Environment> make_access_control(const AccessControlParams& params);
std::unique_ptr<Environment> make_forest(const ForestParams& params);

/// Registry lookup: circulant, restart, deadline-small, deadline-large,
/// access-control, forest. Unknown keys or override names throw
/// std::invalid_argument.
std::unique_ptr<Environment> make_environment(const std::string& key, const EnvOverrides& overrides = {});
const std::vector<std::string>& environment_keys();

}  // namespace fgdqn
