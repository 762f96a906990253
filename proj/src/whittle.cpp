#include "fgdqn/whittle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fgdqn {

WhittleNetworks::WhittleNetworks(const FeatureEncoding& encoding, std::vector<int> q_hidden,
                                 std::vector<int> index_hidden)
    : features_(encoding.table()),
      qnet_(MlpSpec{encoding.dimension() + 1, std::move(q_hidden), 2}),
      index_net_(MlpSpec{encoding.dimension(), std::move(index_hidden), 1}) {}

Eigen::VectorXd WhittleNetworks::q_input(StateId x, double lambda) const {
    Eigen::VectorXd in(features_.cols() + 1);
    in.head(features_.cols()) = features_.row(x).transpose();
    in(features_.cols()) = lambda;
    return in;
}

double WhittleNetworks::lambda(const Paramd& sigma, StateId k) const {
    return index_net_.forward(sigma, features(k))(0);
}

Eigen::VectorXd WhittleNetworks::lambda_table(const Paramd& sigma) const {
    Eigen::VectorXd out(num_states());
    for (StateId k = 0; k < num_states(); ++k) out(k) = lambda(sigma, k);
    return out;
}

std::vector<int> index_policy(const std::vector<StateId>& states, const Eigen::VectorXd& index_of_state, int budget,
                              double epsilon, Rng& rng) {
    const int n = static_cast<int>(states.size());
    if (budget < 0 || budget >= n) throw std::invalid_argument("index policy: budget must satisfy 0 <= M < N");
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("index policy: epsilon outside [0, 1]");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (uniform01(rng) < epsilon) {
        for (int i = 0; i < budget; ++i) std::swap(order[i], order[uniform_int(rng, i, n - 1)]);
    } else {
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return index_of_state(states[a]) > index_of_state(states[b]);
        });
    }
    std::vector<int> active(n, 0);
    for (int i = 0; i < budget; ++i) active[order[i]] = 1;
    return active;
}

double modified_reward(const TabularModeld& arm, StateId x, ActionId u, double lambda) {
    return (1 - u) * (arm.r(x, kPassive) + lambda) + u * arm.r(x, kActive);
}

namespace {

/// Forward passes of the Q-network at (x, lambda(k)) for one fixed theta.
class SubsidyCache {
public:
    SubsidyCache(const WhittleNetworks& nets, const Paramd& theta, const Eigen::VectorXd& lambdas)
        : nets_(nets), theta_(theta), lambdas_(lambdas) {}

    const WhittleNetworks::Trace& trace(StateId x, StateId k) {
        const long long key = static_cast<long long>(x) * nets_.num_states() + k;
        auto it = traces_.find(key);
        if (it == traces_.end()) {
            it = traces_.emplace(key, WhittleNetworks::Trace{}).first;
            nets_.qnet().forward(theta_, nets_.q_input(x, lambdas_(k)), it->second);
        }
        return it->second;
    }
    double value(StateId x, StateId k, ActionId u) { return trace(x, k).output()(u); }
    double max_value(StateId x, StateId k) { return trace(x, k).output().maxCoeff(); }
    void add_grad(StateId x, StateId k, ActionId u, double scale, Gradd& g) {
        nets_.qnet().backward(theta_, trace(x, k), nets_.qnet().unit(u), scale, g);
    }
    void add_grad_max(StateId x, StateId k, double scale, Gradd& g) {
        add_grad(x, k, argmax(trace(x, k).output()), scale, g);
    }

    double offset(const OffsetFn& f, StateId k) {
        switch (f.kind) {
            case OffsetFn::Kind::FixedStateAction: return value(f.state, k, f.action);
            case OffsetFn::Kind::MaxAtState: return max_value(f.state, k);
            default: throw UnsupportedOffset("whittle: offset must be fixed-sa or max-at-state");
        }
    }
    void add_offset_grad(const OffsetFn& f, StateId k, double scale, Gradd& g) {
        switch (f.kind) {
            case OffsetFn::Kind::FixedStateAction: add_grad(f.state, k, f.action, scale, g); return;
            case OffsetFn::Kind::MaxAtState: add_grad_max(f.state, k, scale, g); return;
            default: throw UnsupportedOffset("whittle: offset must be fixed-sa or max-at-state");
        }
    }

private:
    const WhittleNetworks& nets_;
    const Paramd& theta_;
    const Eigen::VectorXd& lambdas_;
    std::unordered_map<long long, WhittleNetworks::Trace> traces_;
};

void check_offset(const OffsetFn& f, const WhittleNetworks& nets) {
    if (f.kind != OffsetFn::Kind::FixedStateAction && f.kind != OffsetFn::Kind::MaxAtState)
        throw UnsupportedOffset("whittle: offset must be fixed-sa or max-at-state");
    if (f.state < 0 || f.state >= nets.num_states() || f.action < 0 || f.action > 1)
        throw std::invalid_argument("whittle: offset anchor out of range");
}

std::vector<StateId> sample_references(const ReplayBuffer& buffer, std::size_t count, Rng& rng) {
    const auto visited = buffer.visited_states();
    std::vector<StateId> refs(count);
    for (auto& k : refs) k = visited[uniform_int(rng, 0, static_cast<int>(visited.size()) - 1)];
    return refs;
}

void require_batch(const ReplayBuffer& buffer, std::size_t batch) {
    if (buffer.empty()) throw EmptyBuffer("whittle: replay buffer is empty");
    if (batch == 0) throw std::invalid_argument("whittle: batch size must be positive");
}

}  // namespace

StepReport whittle_q_step(WhittleLearnerState& st, const WhittleNetworks& nets, const ReplayBuffer& buffer,
                          std::size_t batch, Rng& rng) {
    require_batch(buffer, batch);
    check_offset(st.offset, nets);
    const auto sampled = buffer.sample_uniform(batch, rng);
    const auto refs = sample_references(buffer, batch, rng);
    const Eigen::VectorXd lambdas = nets.lambda_table(st.sigma);
    SubsidyCache cache(nets, st.theta, lambdas);

    Gradd g = Gradd::Zero(nets.qnet().num_params());
    double loss = 0.0, proxy = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const Transition& t = sampled[b];
        const StateId k = refs[b];
        const double f = cache.offset(st.offset, k);
        const double subsidy = (1 - t.action) * lambdas(k);
        const double q_xu = cache.value(t.state, k, t.action);
        auto bootstrap = [&](StateId next) { return cache.max_value(next, k); };
        double e;
        try {
            e = buffer.conditional_td_average(t.state, t.action, q_xu, f - subsidy, bootstrap);
        } catch (const MissingKey&) {
            e = t.reward + subsidy + bootstrap(t.next_state) - f - q_xu;
        }
        cache.add_grad_max(t.next_state, k, e, g);
        cache.add_offset_grad(st.offset, k, -e, g);
        cache.add_grad(t.state, k, t.action, -e, g);
        loss += e * e;
        proxy += f;
    }
    const double a = st.q_schedule(st.n_q);
    st.theta = axpy_update(st.theta, -a / double(batch), g);
    ++st.n_q;
    return {loss / double(batch), proxy / double(batch), a};
}

StepReport whittle_dqn_q_step(WhittleLearnerState& st, const WhittleNetworks& nets, const ReplayBuffer& buffer,
                              std::size_t batch, Rng& rng) {
    require_batch(buffer, batch);
    check_offset(st.offset, nets);
    if (st.target.size() != st.theta.size()) st.target = st.theta;
    if (st.target_sync_period <= 0) throw std::invalid_argument("whittle dqn: target sync period must be positive");
    const auto sampled = buffer.sample_uniform(batch, rng);
    const auto refs = sample_references(buffer, batch, rng);
    const Eigen::VectorXd lambdas = nets.lambda_table(st.sigma);
    SubsidyCache live(nets, st.theta, lambdas);
    SubsidyCache frozen(nets, st.target, lambdas);

    Gradd g = Gradd::Zero(nets.qnet().num_params());
    double loss = 0.0, proxy = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const Transition& t = sampled[b];
        const StateId k = refs[b];
        const double f = frozen.offset(st.offset, k);
        const double z = t.reward + (1 - t.action) * lambdas(k) + frozen.max_value(t.next_state, k) - f;
        const double delta = z - live.value(t.state, k, t.action);
        live.add_grad(t.state, k, t.action, delta, g);
        loss += delta * delta;
        proxy += f;
    }
    const double a = st.q_schedule(st.n_q);
    st.theta = axpy_update(st.theta, a / double(batch), g);
    ++st.n_q;
    if (st.n_q % st.target_sync_period == 0) st.target = st.theta;
    return {loss / double(batch), proxy / double(batch), a};
}

namespace {

/// Accumulates d(mean gap^2)/d sigma into g and returns the mean gap^2.
double gap_loss_and_grad(const WhittleNetworks& nets, const Paramd& theta, const Paramd& sigma,
                         const std::vector<StateId>& refs, Gradd* g) {
    if (refs.empty()) throw std::invalid_argument("whittle: no reference states");
    const auto& qnet = nets.qnet();
    const auto& inet = nets.index_net();
    const Eigen::VectorXd gap_seed = Eigen::Vector2d(-1.0, 1.0);
    Mlp<double>::Trace index_trace, q_trace;
    Gradd scratch = Gradd::Zero(qnet.num_params());
    double loss = 0.0;
    const double w = 1.0 / double(refs.size());
    for (StateId k : refs) {
        inet.forward(sigma, nets.features(k), index_trace);
        const double lambda = index_trace.output()(0);
        qnet.forward(theta, nets.q_input(k, lambda), q_trace);
        const double gap = q_trace.output()(1) - q_trace.output()(0);
        loss += w * gap * gap;
        if (g) {
            Eigen::VectorXd d_input;
            qnet.backward(theta, q_trace, gap_seed, 0.0, scratch, &d_input);
            const double d_gap_d_lambda = d_input(d_input.size() - 1);
            inet.backward(sigma, index_trace, Eigen::VectorXd::Ones(1), w * 2.0 * gap * d_gap_d_lambda, *g);
        }
    }
    return loss;
}

}  // namespace

double gap_loss(const WhittleNetworks& nets, const Paramd& theta, const Paramd& sigma,
                const std::vector<StateId>& refs) {
    return gap_loss_and_grad(nets, theta, sigma, refs, nullptr);
}

Gradd gap_loss_grad(const WhittleNetworks& nets, const Paramd& theta, const Paramd& sigma,
                    const std::vector<StateId>& refs) {
    Gradd g = Gradd::Zero(nets.index_net().num_params());
    gap_loss_and_grad(nets, theta, sigma, refs, &g);
    return g;
}

double sigma_step(WhittleLearnerState& st, const WhittleNetworks& nets, const std::vector<StateId>& refs) {
    Gradd g = Gradd::Zero(nets.index_net().num_params());
    const double loss = gap_loss_and_grad(nets, st.theta, st.sigma, refs, &g);
    const double b = st.sigma_schedule(st.n_sigma);
    st.sigma = axpy_update(st.sigma, -b, g);
    ++st.n_sigma;
    return loss;
}

double evaluate_index_policy(const Environment& arm, const Eigen::VectorXd& index_of_state, int arms, int budget,
                             long horizon, Rng& rng) {
    if (horizon <= 0) throw std::invalid_argument("evaluate: horizon must be positive");
    if (index_of_state.size() != arm.num_states())
        throw std::invalid_argument("evaluate: index table does not match the arm's state space");
    std::vector<StateId> states(arms);
    for (auto& s : states) s = uniform_int(rng, 0, arm.num_states() - 1);
    double total = 0.0;
    for (long t = 0; t < horizon; ++t) {
        const auto active = index_policy(states, index_of_state, budget, 0.0, rng);
        for (int i = 0; i < arms; ++i) {
            const auto r = arm.step(states[i], active[i], rng);
            total += r.reward;
            states[i] = r.next_state;
        }
    }
    return total / double(horizon);
}

void RmabConfig::validate() const {
    if (arms < 2) throw std::invalid_argument("rmab: need at least two arms");
    if (budget < 1 || budget >= arms) throw std::invalid_argument("rmab: budget must satisfy 0 < M < N");
    if (!shared) throw std::invalid_argument("rmab: only shared networks are supported for identical arms");
    if (batch == 0) throw std::invalid_argument("rmab: batch size must be positive");
    if (sigma_period < 1) throw std::invalid_argument("rmab: sigma period must be positive");
    if (sigma_schedule.kind == StepSchedule::Kind::PowerLaw && q_schedule.kind == StepSchedule::Kind::PowerLaw &&
        !(sigma_schedule.kappa > q_schedule.kappa))
        throw std::invalid_argument("rmab: the index step size must decay faster than the Q step size");
}

RmabResult rmab_train(const RmabConfig& cfg, const Environment& arm, long total_steps, Rng& init_rng,
                      Rng& env_rng, Rng& explore_rng, Rng& replay_rng,
                      const std::function<void(const RmabProgress&)>& observer) {
    cfg.validate();
    if (arm.num_actions() != 2) throw std::invalid_argument("rmab: arms must have exactly two actions");
    const WhittleNetworks nets(arm.encoding(), cfg.q_hidden, cfg.index_hidden);

    RmabResult result;
    WhittleLearnerState& st = result.state;
    st.theta = nets.qnet().init(init_rng);
    st.sigma = nets.index_net().init(init_rng);
    st.target = st.theta;
    st.q_schedule = cfg.q_schedule;
    st.sigma_schedule = cfg.sigma_schedule;
    st.target_sync_period = cfg.target_sync_period;
    if (total_steps <= 0) return result;

    ReplayBuffer buffer(cfg.capacity, cfg.per_key_cap);
    std::vector<StateId> states(cfg.arms);
    for (auto& s : states) s = uniform_int(env_rng, 0, arm.num_states() - 1);
    auto advance = [&](const std::vector<int>& active) {
        for (int i = 0; i < cfg.arms; ++i) {
            const auto r = arm.step(states[i], active[i], env_rng);
            buffer.push({states[i], active[i], r.reward, r.next_state});
            states[i] = r.next_state;
        }
    };

    const Eigen::VectorXd no_index = Eigen::VectorXd::Zero(arm.num_states());
    const std::size_t warm = (cfg.warmup_transitions + cfg.arms - 1) / cfg.arms;
    for (std::size_t w = 0; w < std::max<std::size_t>(warm, 1); ++w)
        advance(index_policy(states, no_index, cfg.budget, 1.0, explore_rng));
    const auto [s0, u0] = buffer.most_frequent_state_action();
    st.offset = cfg.offset_kind == OffsetFn::Kind::MaxAtState ? OffsetFn::max_at(s0) : OffsetFn::fixed(s0, u0);
    check_offset(OffsetFn{cfg.offset_kind, s0, u0}, nets);

    const long decay_steps = std::max(1L, total_steps / 2);
    for (long n = 1; n <= total_steps; ++n) {
        const double frac = std::min(1.0, double(n - 1) / double(decay_steps));
        const double eps = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
        advance(index_policy(states, nets.lambda_table(st.sigma), cfg.budget, eps, explore_rng));
        StepReport rep;
        double gl = std::nan("");
        try {
            rep = cfg.full_gradient ? whittle_q_step(st, nets, buffer, cfg.batch, replay_rng)
                                    : whittle_dqn_q_step(st, nets, buffer, cfg.batch, replay_rng);
            if (n % cfg.sigma_period == 0)
                gl = sigma_step(st, nets, sample_references(buffer, cfg.batch, replay_rng));
        } catch (const NumericOverflow&) {
            result.diverged = true;
            result.steps_done = n;
            return result;
        }
        result.steps_done = n;
        if (observer) observer(RmabProgress{n, rep.loss, rep.proxy, gl, eps, st});
    }
    return result;
}

}  // namespace fgdqn
