#include "fgdqn/env.hpp"

#include <cmath>
#include <stdexcept>

namespace fgdqn {

FeatureEncoding FeatureEncoding::one_hot(int num_states) {
    return {EncodingMode::OneHot, Eigen::MatrixXd::Identity(num_states, num_states)};
}

FeatureEncoding FeatureEncoding::normalized_scalar(int num_states) {
    Eigen::MatrixXd table(num_states, 1);
    for (int s = 0; s < num_states; ++s)
        table(s, 0) = num_states > 1 ? double(s) / double(num_states - 1) : 0.0;
    return {EncodingMode::NormalizedScalar, std::move(table)};
}

FeatureEncoding FeatureEncoding::tuple_normalized(const Eigen::MatrixXd& tuples) {
    Eigen::MatrixXd table = tuples;
    for (Eigen::Index c = 0; c < table.cols(); ++c) {
        const double scale = table.col(c).cwiseAbs().maxCoeff();
        if (scale > 0.0) table.col(c) /= scale;
    }
    return {EncodingMode::TupleNormalized, std::move(table)};
}

Eigen::VectorXd Environment::encode(StateId s) const {
    if (s < 0 || s >= num_states()) throw std::invalid_argument("encode: state out of range");
    return encoding().row(s).transpose();
}

void Environment::check(StateId s, ActionId u) const {
    if (s < 0 || s >= num_states())
        throw std::invalid_argument(key() + ": state " + std::to_string(s) + " out of range");
    if (u < 0 || u >= num_actions())
        throw std::invalid_argument(key() + ": action " + std::to_string(u) + " out of range");
}

TabularEnvironment::TabularEnvironment(std::string key, TabularModeld model, FeatureEncoding encoding)
    : key_(std::move(key)), model_(std::move(model)), encoding_(std::move(encoding)) {
    model_.validate();
    if (encoding_.num_states() != model_.num_states())
        throw std::invalid_argument(key_ + ": encoding does not cover the state space");
}

StepResult TabularEnvironment::step(StateId state, ActionId action, Rng& rng) const {
    check(state, action);
    const double draw = uniform01(rng);
    double cumulative = 0.0;
    StateId last = state;
    for (TabularModeld::Transition::InnerIterator it(model_.p[action], state); it; ++it) {
        cumulative += it.value();
        last = static_cast<StateId>(it.col());
        if (draw < cumulative) break;
    }
    return {last, model_.r(state, action)};
}

std::unique_ptr<Environment> make_circulant() {
    constexpr int n = 4;
    TabularModelBuilder<double> b(n, 2);
    for (int s = 0; s < n; ++s) {
        b.add(s, kActive, (s + 1) % n, 0.5);
        b.add(s, kActive, s, 0.5);
        b.add(s, kPassive, (s + n - 1) % n, 0.5);
        b.add(s, kPassive, s, 0.5);
        const double r = s == 0 ? -1.0 : (s == n - 1 ? 1.0 : 0.0);
        b.reward(s, kActive, r);
        b.reward(s, kPassive, r);
    }
    return std::make_unique<TabularEnvironment>("circulant", b.build(), FeatureEncoding::one_hot(n));
}

std::unique_ptr<Environment> make_restart() {
    constexpr int n = 5;
    TabularModelBuilder<double> b(n, 2);
    for (int s = 0; s < n; ++s) {
        b.add(s, kActive, 0, 1.0);
        b.add(s, kPassive, std::min(s + 1, n - 1), 0.9);
        b.add(s, kPassive, 0, 0.1);
        b.reward(s, kActive, std::pow(0.9, s + 1));
        b.reward(s, kPassive, 0.0);
    }
    return std::make_unique<TabularEnvironment>("restart", b.build(), FeatureEncoding::one_hot(n));
}

std::unique_ptr<Environment> make_deadline(const DeadlineParams& prm, std::string key) {
    if (prm.max_deadline < 1 || prm.max_load < 1 || prm.arrival < 0.0 || prm.arrival > 1.0)
        throw std::invalid_argument("deadline: invalid parameters");
    const int n = prm.num_states();
    TabularModelBuilder<double> b(n, 2);
    const double per_job = prm.arrival / double(prm.max_deadline * prm.max_load);
    auto arrive = [&](StateId from, ActionId u) {
        b.add(from, u, prm.id(0, 0), 1.0 - prm.arrival);
        for (int d = 1; d <= prm.max_deadline; ++d)
            for (int l = 1; l <= prm.max_load; ++l) b.add(from, u, prm.id(d, l), per_job);
    };
    Eigen::MatrixXd tuples(n, 2);
    for (int d = 0; d <= prm.max_deadline; ++d) {
        for (int l = 0; l <= prm.max_load; ++l) {
            const StateId s = prm.id(d, l);
            tuples(s, 0) = d;
            tuples(s, 1) = l;
            for (ActionId u : {kPassive, kActive}) {
                if (d == 0) {
                    b.reward(s, u, 0.0);
                    arrive(s, u);
                    continue;
                }
                const int charge = (u == kActive && l > 0) ? 1 : 0;
                const int residual = l - charge;
                double reward = charge * (1.0 - prm.cost);
                if (d > 1) {
                    b.add(s, u, prm.id(d - 1, residual), 1.0);
                } else {
                    reward -= prm.penalty * double(residual) * double(residual);
                    arrive(s, u);
                }
                b.reward(s, u, reward);
            }
        }
    }
    auto model = b.build();
    if (!anchor_reachable_under_all_policies(model, prm.id(0, 0)))
        throw std::invalid_argument("deadline: idle state is not reachable under every policy");
    tuples.col(0) /= double(prm.max_deadline);
    tuples.col(1) /= double(prm.max_load);
    return std::make_unique<TabularEnvironment>(std::move(key), std::move(model),
                                                FeatureEncoding(EncodingMode::TupleNormalized, tuples));
}

std::unique_ptr<Environment> make_access_control(const AccessControlParams& prm) {
    if (prm.servers < 1 || prm.priorities.empty() || prm.free_prob < 0.0 || prm.free_prob > 1.0)
        throw std::invalid_argument("access-control: invalid parameters");
    const int kinds = static_cast<int>(prm.priorities.size());
    const int n = prm.num_states();
    TabularModelBuilder<double> b(n, 2);
    Eigen::MatrixXd tuples(n, 2);
    for (int free = 0; free <= prm.servers; ++free) {
        for (int k = 0; k < kinds; ++k) {
            const StateId s = prm.id(free, k);
            tuples(s, 0) = free;
            tuples(s, 1) = prm.priorities[k];
            for (ActionId u : {kPassive, kActive}) {
                const bool accepted = u == kActive && free > 0;
                const int free_after = accepted ? free - 1 : free;
                b.reward(s, u, accepted ? prm.priorities[k] : 0.0);
                const int busy = prm.servers - free_after;
                // Binomial(busy, free_prob) released servers.
                for (int released = 0; released <= busy; ++released) {
                    const double pk = std::exp(std::lgamma(busy + 1.0) - std::lgamma(released + 1.0) -
                                               std::lgamma(busy - released + 1.0)) *
                                      std::pow(prm.free_prob, released) *
                                      std::pow(1.0 - prm.free_prob, busy - released);
                    for (int next_k = 0; next_k < kinds; ++next_k)
                        b.add(s, u, prm.id(free_after + released, next_k), pk / kinds);
                }
            }
        }
    }
    auto model = b.build();
    // Renormalize away the rounding of the binomial weights.
    for (auto& mat : model.p) {
        for (int i = 0; i < mat.outerSize(); ++i) {
            double sum = 0.0;
            for (TabularModeld::Transition::InnerIterator it(mat, i); it; ++it) sum += it.value();
            for (TabularModeld::Transition::InnerIterator it(mat, i); it; ++it) it.valueRef() /= sum;
        }
    }
    return std::make_unique<TabularEnvironment>("access-control", std::move(model),
                                                FeatureEncoding::tuple_normalized(tuples));
}

std::unique_ptr<Environment> make_forest(const ForestParams& prm) {
    if (prm.ages < 2 || prm.fire < 0.0 || prm.fire > 1.0)
        throw std::invalid_argument("forest: invalid parameters");
    const int n = prm.ages;
    constexpr ActionId wait = 0, cut = 1;
    TabularModelBuilder<double> b(n, 2);
    for (int s = 0; s < n; ++s) {
        b.add(s, wait, std::min(s + 1, n - 1), 1.0 - prm.fire);
        b.add(s, wait, 0, prm.fire);
        b.add(s, cut, 0, 1.0);
        b.reward(s, wait, s == n - 1 ? prm.wait_reward : 0.0);
        b.reward(s, cut, s == n - 1 ? prm.cut_reward : (s > 0 ? 1.0 : 0.0));
    }
    return std::make_unique<TabularEnvironment>("forest", b.build(), FeatureEncoding::one_hot(n));
}

namespace {

double take(EnvOverrides& o, const std::string& name, double fallback) {
    auto it = o.find(name);
    if (it == o.end()) return fallback;
    const double v = it->second;
    o.erase(it);
    return v;
}

void reject_leftovers(const std::string& key, const EnvOverrides& o) {
    if (!o.empty())
        throw std::invalid_argument(key + ": unknown override '" + o.begin()->first + "'");
}

}  // namespace

const std::vector<std::string>& environment_keys() {
    static const std::vector<std::string> keys{"circulant",      "restart",        "deadline-small",
                                               "deadline-large", "access-control", "forest"};
    return keys;
}

std::unique_ptr<Environment> make_environment(const std::string& key, const EnvOverrides& overrides) {
    EnvOverrides o = overrides;
    if (key == "circulant") {
        reject_leftovers(key, o);
        return make_circulant();
    }
    if (key == "restart") {
        reject_leftovers(key, o);
        return make_restart();
    }
    if (key == "deadline-small" || key == "deadline-large") {
        DeadlineParams p;
        if (key == "deadline-large") {
            p.max_deadline = 50;
            p.max_load = 45;
        }
        p.max_deadline = static_cast<int>(take(o, "max_deadline", p.max_deadline));
        p.max_load = static_cast<int>(take(o, "max_load", p.max_load));
        p.cost = take(o, "cost", p.cost);
        p.penalty = take(o, "penalty", p.penalty);
        p.arrival = take(o, "arrival", p.arrival);
        reject_leftovers(key, o);
        return make_deadline(p, key);
    }
    if (key == "access-control") {
        AccessControlParams p;
        p.servers = static_cast<int>(take(o, "servers", p.servers));
        p.free_prob = take(o, "free_prob", p.free_prob);
        reject_leftovers(key, o);
        return make_access_control(p);
    }
    if (key == "forest") {
        ForestParams p;
        p.ages = static_cast<int>(take(o, "ages", p.ages));
        p.fire = take(o, "fire", p.fire);
        p.wait_reward = take(o, "wait_reward", p.wait_reward);
        p.cut_reward = take(o, "cut_reward", p.cut_reward);
        reject_leftovers(key, o);
        return make_forest(p);
    }
    throw std::invalid_argument("unknown environment '" + key + "'");
}

}  // namespace fgdqn
