#pragma once

#include "fgdqn/env.hpp"
#include "fgdqn/qnetwork.hpp"
#include "fgdqn/replay.hpp"

#include <string>

namespace fgdqn {

/// The offset f(Q) standing in for the optimal average reward.
struct OffsetFn {
    enum class Kind { FixedStateAction, MaxAtState, GlobalMax, Mean };

    Kind kind = Kind::FixedStateAction;
    StateId state = 0;
    ActionId action = 0;

    static OffsetFn fixed(StateId s, ActionId u) { return {Kind::FixedStateAction, s, u}; }
    static OffsetFn max_at(StateId s) { return {Kind::MaxAtState, s, 0}; }
    static OffsetFn global_max() { return {Kind::GlobalMax, 0, 0}; }
    static OffsetFn mean() { return {Kind::Mean, 0, 0}; }
};

OffsetFn::Kind parse_offset_kind(const std::string& name);
std::string to_string(OffsetFn::Kind kind);

double offset_value(const OffsetFn& f, const QNetwork& q, const Paramd& theta);
Gradd offset_grad(const OffsetFn& f, const QNetwork& q, const Paramd& theta);

/// Step sizes a(n) = a0 / (1 + n / tau)^kappa, or a constant a0.
struct StepSchedule {
    enum class Kind { PowerLaw, Constant };

    Kind kind = Kind::PowerLaw;
    double a0 = 0.05;
    double tau = 1000.0;
    double kappa = 0.75;

    static StepSchedule power_law(double a0, double tau, double kappa) { return {Kind::PowerLaw, a0, tau, kappa}; }
    static StepSchedule constant(double a0) { return {Kind::Constant, a0, 1.0, 0.0}; }

    double operator()(long n) const;
    /// Sum a(n) diverges and sum a(n)^2 converges.
    bool robbins_monro() const { return kind == Kind::PowerLaw && kappa > 0.5 && kappa <= 1.0; }
};

struct StepReport {
    double loss = 0.0;
    double proxy = 0.0;
    double step_size = 0.0;
};

struct RviLearnerState {
    Paramd theta;
    Paramd target;  // semi-gradient variant only
    OffsetFn offset;
    StepSchedule schedule;
    long n = 0;
    long target_sync_period = 100;
};

/// Full-gradient step: conditional-averaged TD error times the full
/// Bellman-error gradient of the sampled triplet.
StepReport fgdqn_rvi_step(RviLearnerState& st, const QNetwork& q, const ReplayBuffer& buffer, std::size_t batch,
                          Rng& rng);

/// Semi-gradient step chasing a target computed with the frozen copy.
StepReport dqn_rvi_step(RviLearnerState& st, const QNetwork& q, const ReplayBuffer& buffer, std::size_t batch,
                        Rng& rng);

enum class RbarMode { GenerativeSweep, ReplayBatch };

RbarMode parse_rbar_mode(const std::string& name);
std::string to_string(RbarMode mode);

struct DiffQLearnerState {
    Paramd theta;
    Paramd target;  // used by the semi-gradient variant when target_sync_period > 0
    double rbar = 0.0;
    Gradd Y;  // gradient proxy of rbar; stays zero in the semi-gradient variant
    double eta = 1.0;
    StepSchedule schedule;
    long n = 0;
    RbarMode mode = RbarMode::GenerativeSweep;
    long target_sync_period = 0;
};

StepReport diffq_fgdqn_step(DiffQLearnerState& st, const QNetwork& q, const ReplayBuffer& buffer,
                            const Environment& env, std::size_t batch, Rng& rng);
StepReport diffq_dqn_step(DiffQLearnerState& st, const QNetwork& q, const ReplayBuffer& buffer,
                          const Environment& env, std::size_t batch, Rng& rng);

}  // namespace fgdqn
