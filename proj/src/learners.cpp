#include "fgdqn/learners.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fgdqn {

OffsetFn::Kind parse_offset_kind(const std::string& name) {
    if (name == "fixed-sa") return OffsetFn::Kind::FixedStateAction;
    if (name == "max-at-state") return OffsetFn::Kind::MaxAtState;
    if (name == "global-max") return OffsetFn::Kind::GlobalMax;
    if (name == "mean") return OffsetFn::Kind::Mean;
    throw std::invalid_argument("unknown offset kind '" + name + "'");
}

std::string to_string(OffsetFn::Kind kind) {
    switch (kind) {
        case OffsetFn::Kind::FixedStateAction: return "fixed-sa";
        case OffsetFn::Kind::MaxAtState: return "max-at-state";
        case OffsetFn::Kind::GlobalMax: return "global-max";
        case OffsetFn::Kind::Mean: return "mean";
    }
    return "?";
}

RbarMode parse_rbar_mode(const std::string& name) {
    if (name == "generative-sweep") return RbarMode::GenerativeSweep;
    if (name == "replay-batch") return RbarMode::ReplayBatch;
    throw std::invalid_argument("unknown rbar mode '" + name + "'");
}

std::string to_string(RbarMode mode) {
    return mode == RbarMode::GenerativeSweep ? "generative-sweep" : "replay-batch";
}

namespace {

void check_anchor(const OffsetFn& f, const QNetwork& q) {
    if (f.state < 0 || f.state >= q.num_states() || f.action < 0 || f.action >= q.num_actions())
        throw std::invalid_argument("offset anchor out of range");
}

std::pair<StateId, ActionId> global_argmax(const QNetwork& q, const Paramd& theta) {
    StateId bs = 0;
    ActionId bu = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (StateId s = 0; s < q.num_states(); ++s) {
        const auto v = q.values(theta, s);
        for (ActionId u = 0; u < q.num_actions(); ++u)
            if (v(u) > best) {
                best = v(u);
                bs = s;
                bu = u;
            }
    }
    return {bs, bu};
}

void require_batch(const ReplayBuffer& buffer, std::size_t batch) {
    if (buffer.empty()) throw EmptyBuffer("learner: replay buffer is empty");
    if (batch == 0) throw std::invalid_argument("learner: batch size must be positive");
}

}  // namespace

double offset_value(const OffsetFn& f, const QNetwork& q, const Paramd& theta) {
    switch (f.kind) {
        case OffsetFn::Kind::FixedStateAction:
            check_anchor(f, q);
            return q.value(theta, f.state, f.action);
        case OffsetFn::Kind::MaxAtState:
            check_anchor(f, q);
            return q.values(theta, f.state).maxCoeff();
        case OffsetFn::Kind::GlobalMax: {
            const auto [s, u] = global_argmax(q, theta);
            return q.value(theta, s, u);
        }
        case OffsetFn::Kind::Mean: {
            double sum = 0.0;
            for (StateId s = 0; s < q.num_states(); ++s) sum += q.values(theta, s).sum();
            return sum / double(q.num_states() * q.num_actions());
        }
    }
    throw UnsupportedOffset("unsupported offset kind");
}

Gradd offset_grad(const OffsetFn& f, const QNetwork& q, const Paramd& theta) {
    switch (f.kind) {
        case OffsetFn::Kind::FixedStateAction:
            check_anchor(f, q);
            return q.grad(theta, f.state, f.action);
        case OffsetFn::Kind::MaxAtState:
            check_anchor(f, q);
            return q.grad_max(theta, f.state).second;
        case OffsetFn::Kind::GlobalMax: {
            const auto [s, u] = global_argmax(q, theta);
            return q.grad(theta, s, u);
        }
        case OffsetFn::Kind::Mean: {
            Gradd g = Gradd::Zero(q.num_params());
            ForwardCache cache(q, theta);
            const double w = 1.0 / double(q.num_states() * q.num_actions());
            for (StateId s = 0; s < q.num_states(); ++s)
                for (ActionId u = 0; u < q.num_actions(); ++u) cache.add_grad(s, u, w, g);
            return g;
        }
    }
    throw UnsupportedOffset("unsupported offset kind");
}

double StepSchedule::operator()(long n) const {
    if (kind == Kind::Constant) return a0;
    return a0 / std::pow(1.0 + double(n) / tau, kappa);
}

StepReport fgdqn_rvi_step(RviLearnerState& st, const QNetwork& q, const ReplayBuffer& buffer, std::size_t batch,
                          Rng& rng) {
    require_batch(buffer, batch);
    const auto sampled = buffer.sample_uniform(batch, rng);
    ForwardCache cache(q, st.theta);
    const double f = offset_value(st.offset, q, st.theta);
    auto bootstrap = [&](StateId s) { return cache.max_value(s); };

    Gradd g = Gradd::Zero(q.num_params());
    double sum_e = 0.0, loss = 0.0;
    for (const Transition& t : sampled) {
        const double q_xu = cache.value(t.state, t.action);
        double e;
        try {
            e = buffer.conditional_td_average(t.state, t.action, q_xu, f, bootstrap);
        } catch (const MissingKey&) {
            e = t.reward + bootstrap(t.next_state) - f - q_xu;
        }
        cache.add_grad_max(t.next_state, e, g);
        cache.add_grad(t.state, t.action, -e, g);
        sum_e += e;
        loss += e * e;
    }
    g -= sum_e * offset_grad(st.offset, q, st.theta);

    const double a = st.schedule(st.n);
    st.theta = axpy_update(st.theta, -a / double(batch), g);
    ++st.n;
    return {loss / double(batch), f, a};
}

StepReport dqn_rvi_step(RviLearnerState& st, const QNetwork& q, const ReplayBuffer& buffer, std::size_t batch,
                        Rng& rng) {
    require_batch(buffer, batch);
    if (st.target.size() != st.theta.size()) st.target = st.theta;
    if (st.target_sync_period <= 0) throw std::invalid_argument("dqn: target sync period must be positive");
    const auto sampled = buffer.sample_uniform(batch, rng);
    ForwardCache frozen(q, st.target);
    ForwardCache live(q, st.theta);
    const double f = offset_value(st.offset, q, st.target);

    Gradd g = Gradd::Zero(q.num_params());
    double loss = 0.0;
    for (const Transition& t : sampled) {
        const double z = t.reward + frozen.max_value(t.next_state) - f;
        const double delta = z - live.value(t.state, t.action);
        live.add_grad(t.state, t.action, delta, g);
        loss += delta * delta;
    }
    const double a = st.schedule(st.n);
    st.theta = axpy_update(st.theta, a / double(batch), g);
    ++st.n;
    if (st.n % st.target_sync_period == 0) st.target = st.theta;
    return {loss / double(batch), f, a};
}

namespace {

struct AuxAverages {
    double td = 0.0;
    Gradd grad;  // mean of grad max Q(s') - grad Q(s, a)
};

/// Mean TD error (and, if requested, the mean gradient of the TD target
/// difference) used by the rbar / Y updates.
AuxAverages aux_averages(const DiffQLearnerState& st, ForwardCache& cache, const QNetwork& q,
                         const std::vector<Transition>& sampled, const Environment& env, Rng& rng,
                         bool with_grad) {
    AuxAverages out;
    if (with_grad) out.grad = Gradd::Zero(q.num_params());
    std::size_t count = 0;
    auto accumulate = [&](StateId s, ActionId u, double r, StateId next) {
        out.td += r + cache.max_value(next) - st.rbar - cache.value(s, u);
        if (with_grad) {
            cache.add_grad_max(next, 1.0, out.grad);
            cache.add_grad(s, u, -1.0, out.grad);
        }
        ++count;
    };
    if (st.mode == RbarMode::GenerativeSweep) {
        const TabularModeld* model = env.tabular_model();
        if (model == nullptr)
            throw UnsupportedMode("generative-sweep rbar updates need an environment with a tabular model");
        for (StateId s = 0; s < env.num_states(); ++s)
            for (ActionId u = 0; u < env.num_actions(); ++u) {
                const auto step = env.step(s, u, rng);
                accumulate(s, u, model->r(s, u), step.next_state);
            }
    } else {
        for (const Transition& t : sampled) accumulate(t.state, t.action, t.reward, t.next_state);
    }
    out.td /= double(count);
    if (with_grad) out.grad /= double(count);
    return out;
}

}  // namespace

StepReport diffq_fgdqn_step(DiffQLearnerState& st, const QNetwork& q, const ReplayBuffer& buffer,
                            const Environment& env, std::size_t batch, Rng& rng) {
    require_batch(buffer, batch);
    if (st.Y.size() != q.num_params()) st.Y = Gradd::Zero(q.num_params());
    const auto sampled = buffer.sample_uniform(batch, rng);
    ForwardCache cache(q, st.theta);
    auto bootstrap = [&](StateId s) { return cache.max_value(s); };

    Gradd g = Gradd::Zero(q.num_params());
    double sum_e = 0.0, loss = 0.0;
    for (const Transition& t : sampled) {
        const double q_xu = cache.value(t.state, t.action);
        double e;
        try {
            e = buffer.conditional_td_average(t.state, t.action, q_xu, st.rbar, bootstrap);
        } catch (const MissingKey&) {
            e = t.reward + bootstrap(t.next_state) - st.rbar - q_xu;
        }
        cache.add_grad_max(t.next_state, e, g);
        cache.add_grad(t.state, t.action, -e, g);
        sum_e += e;
        loss += e * e;
    }
    g -= sum_e * st.Y;

    const AuxAverages aux = aux_averages(st, cache, q, sampled, env, rng, true);
    const double a = st.schedule(st.n);
    st.theta = axpy_update(st.theta, -a / double(batch), g);
    st.rbar += st.eta * a * aux.td;
    st.Y = axpy_update(st.Y, st.eta * a, Gradd(aux.grad - st.Y));
    if (!std::isfinite(st.rbar)) throw NumericOverflow("rbar became non-finite");
    ++st.n;
    return {loss / double(batch), st.rbar, a};
}

StepReport diffq_dqn_step(DiffQLearnerState& st, const QNetwork& q, const ReplayBuffer& buffer,
                          const Environment& env, std::size_t batch, Rng& rng) {
    require_batch(buffer, batch);
    if (st.Y.size() != q.num_params()) st.Y = Gradd::Zero(q.num_params());
    const bool use_target = st.target_sync_period > 0;
    if (use_target && st.target.size() != st.theta.size()) st.target = st.theta;
    const auto sampled = buffer.sample_uniform(batch, rng);
    ForwardCache live(q, st.theta);
    ForwardCache frozen(q, use_target ? st.target : st.theta);

    Gradd g = Gradd::Zero(q.num_params());
    double loss = 0.0;
    for (const Transition& t : sampled) {
        const double delta = t.reward + frozen.max_value(t.next_state) - st.rbar - live.value(t.state, t.action);
        live.add_grad(t.state, t.action, delta, g);
        loss += delta * delta;
    }
    const AuxAverages aux = aux_averages(st, live, q, sampled, env, rng, false);
    const double a = st.schedule(st.n);
    st.theta = axpy_update(st.theta, a / double(batch), g);
    st.rbar += st.eta * a * aux.td;
    if (!std::isfinite(st.rbar)) throw NumericOverflow("rbar became non-finite");
    ++st.n;
    if (use_target && st.n % st.target_sync_period == 0) st.target = st.theta;
    return {loss / double(batch), st.rbar, a};
}

}  // namespace fgdqn
