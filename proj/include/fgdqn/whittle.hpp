#pragma once

#include "fgdqn/env.hpp"
#include "fgdqn/learners.hpp"
#include "fgdqn/mlp.hpp"
#include "fgdqn/qnetwork.hpp"
#include "fgdqn/replay.hpp"

#include <functional>
#include <unordered_map>
#include <vector>

namespace fgdqn {

/// Shared networks for statistically identical arms: a Q-network fed with
/// encode(x) followed by the subsidy lambda, two outputs (passive, active), and
/// an index network encode(k) -> lambda(k; sigma).
class WhittleNetworks {
public:
    using Trace = Mlp<double>::Trace;

    WhittleNetworks(const FeatureEncoding& encoding, std::vector<int> q_hidden, std::vector<int> index_hidden);

    const Mlp<double>& qnet() const { return qnet_; }
    const Mlp<double>& index_net() const { return index_net_; }
    int num_states() const { return static_cast<int>(features_.rows()); }

    Eigen::VectorXd q_input(StateId x, double lambda) const;
    Eigen::VectorXd q_values(const Paramd& theta, StateId x, double lambda) const {
        return qnet_.forward(theta, q_input(x, lambda));
    }
    double lambda(const Paramd& sigma, StateId k) const;
    /// lambda(k; sigma) for every state.
    Eigen::VectorXd lambda_table(const Paramd& sigma) const;

    Eigen::VectorXd features(StateId s) const { return features_.row(s).transpose(); }

private:
    Eigen::MatrixXd features_;
    Mlp<double> qnet_;
    Mlp<double> index_net_;
};

/// Activation vector with exactly `budget` ones. With probability epsilon a
/// uniformly random budget-respecting set; otherwise the arms with the largest
/// indices, ties to the smallest arm number.
std::vector<int> index_policy(const std::vector<StateId>& states, const Eigen::VectorXd& index_of_state, int budget,
                              double epsilon, Rng& rng);

/// (1 - u) (r_b(x) + lambda) + u r_a(x)
double modified_reward(const TabularModeld& arm, StateId x, ActionId u, double lambda);

struct WhittleLearnerState {
    Paramd theta;
    Paramd target;  // semi-gradient variant only
    Paramd sigma;
    OffsetFn offset;
    StepSchedule q_schedule;
    StepSchedule sigma_schedule;
    long n_q = 0;
    long n_sigma = 0;
    long target_sync_period = 100;
};

/// Fast-timescale FGDQN update with subsidy-modified rewards. Each batch
/// element gets its own reference state drawn from the buffer's visited
/// states; lambda enters the Q-network as a constant input.
StepReport whittle_q_step(WhittleLearnerState& st, const WhittleNetworks& nets, const ReplayBuffer& buffer,
                          std::size_t batch, Rng& rng);

/// Semi-gradient counterpart of whittle_q_step using the frozen copy.
StepReport whittle_dqn_q_step(WhittleLearnerState& st, const WhittleNetworks& nets, const ReplayBuffer& buffer,
                              std::size_t batch, Rng& rng);

/// Slow-timescale descent on the mean squared active/passive gap at the
/// reference states, differentiating through the lambda input. Returns the
/// gap loss before the update.
double sigma_step(WhittleLearnerState& st, const WhittleNetworks& nets, const std::vector<StateId>& refs);

/// Mean over refs of (Q(k,1,lambda(k)) - Q(k,0,lambda(k)))^2.
double gap_loss(const WhittleNetworks& nets, const Paramd& theta, const Paramd& sigma,
                const std::vector<StateId>& refs);
/// Gradient of gap_loss with respect to sigma.
Gradd gap_loss_grad(const WhittleNetworks& nets, const Paramd& theta, const Paramd& sigma,
                    const std::vector<StateId>& refs);

/// Time-averaged total reward of the index policy over `horizon` steps from
/// uniformly drawn initial arm states.
double evaluate_index_policy(const Environment& arm, const Eigen::VectorXd& index_of_state, int arms, int budget,
                             long horizon, Rng& rng);

struct RmabConfig {
    int arms = 100;
    int budget = 20;
    bool shared = true;
    bool full_gradient = true;  // false selects the semi-gradient Q update
    std::vector<int> q_hidden{64};
    std::vector<int> index_hidden{32};
    StepSchedule q_schedule = StepSchedule::power_law(0.05, 5000.0, 0.6);
    StepSchedule sigma_schedule = StepSchedule::power_law(0.01, 5000.0, 0.9);
    std::size_t batch = 32;
    std::size_t capacity = 100'000;
    std::size_t per_key_cap = 256;
    std::size_t warmup_transitions = 1000;
    double epsilon_start = 0.1;
    double epsilon_end = 0.01;
    long sigma_period = 1;
    long target_sync_period = 100;
    OffsetFn::Kind offset_kind = OffsetFn::Kind::FixedStateAction;

    void validate() const;
};

struct RmabProgress {
    long step;
    double q_loss;
    double q_proxy;   // mean offset f at lambda(k) over the batch's reference states
    double gap_loss;  // NaN on steps without a sigma update
    double epsilon;
    const WhittleLearnerState& state;
};

struct RmabResult {
    WhittleLearnerState state;
    bool diverged = false;
    long steps_done = 0;
};

/// Two-timescale training loop for statistically identical arms. `observer`
/// is called after every step.
RmabResult rmab_train(const RmabConfig& cfg, const Environment& arm, long total_steps, Rng& init_rng,
                      Rng& env_rng, Rng& explore_rng, Rng& replay_rng,
                      const std::function<void(const RmabProgress&)>& observer = {});

}  // namespace fgdqn
