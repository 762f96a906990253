#pragma once

#include "fgdqn/env.hpp"
#include "fgdqn/mlp.hpp"

#include <Eigen/Dense>

#include <vector>

namespace fgdqn {

using Paramd = ParamVector<double>;
using Gradd = GradVector<double>;

/// Q(x, .; theta) over an enumerable state space: an MLP fed with the
/// environment's feature table, one output per action.
class QNetwork {
public:
    using Trace = Mlp<double>::Trace;

    QNetwork(const MlpSpec& spec, const FeatureEncoding& encoding);

    const Mlp<double>& mlp() const { return mlp_; }
    int num_states() const { return static_cast<int>(features_.rows()); }
    int num_actions() const { return mlp_.spec().output_dim; }
    Eigen::Index num_params() const { return mlp_.num_params(); }

    Eigen::VectorXd input(StateId s) const { return features_.row(s).transpose(); }
    Eigen::VectorXd values(const Paramd& theta, StateId s) const { return mlp_.forward(theta, input(s)); }
    double value(const Paramd& theta, StateId s, ActionId u) const { return values(theta, s)(u); }
    Gradd grad(const Paramd& theta, StateId s, ActionId u) const { return mlp_.grad_param(theta, input(s), u); }
    std::pair<ActionId, Gradd> grad_max(const Paramd& theta, StateId s) const {
        return mlp_.grad_max(theta, input(s));
    }
    ActionId greedy(const Paramd& theta, StateId s) const { return argmax(values(theta, s)); }

private:
    Mlp<double> mlp_;
    Eigen::MatrixXd features_;
};

/// Per-update memo of forward passes, keyed by state, for one fixed theta.
class ForwardCache {
public:
    ForwardCache(const QNetwork& q, const Paramd& theta)
        : q_(q), theta_(theta), traces_(q.num_states()), have_(q.num_states(), 0) {}

    const QNetwork::Trace& trace(StateId s) {
        if (!have_[s]) {
            q_.mlp().forward(theta_, q_.input(s), traces_[s]);
            have_[s] = 1;
        }
        return traces_[s];
    }
    double value(StateId s, ActionId u) { return trace(s).output()(u); }
    double max_value(StateId s) { return trace(s).output().maxCoeff(); }
    ActionId argmax_action(StateId s) { return argmax(trace(s).output()); }

    /// g += scale * grad Q(s, u)
    void add_grad(StateId s, ActionId u, double scale, Gradd& g) {
        q_.mlp().backward(theta_, trace(s), q_.mlp().unit(u), scale, g);
    }
    /// g += scale * Danskin subgradient of max_v Q(s, v)
    void add_grad_max(StateId s, double scale, Gradd& g) { add_grad(s, argmax_action(s), scale, g); }

private:
    const QNetwork& q_;
    const Paramd& theta_;
    std::vector<QNetwork::Trace> traces_;
    std::vector<char> have_;
};

}  // namespace fgdqn
