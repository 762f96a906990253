#pragma once

#include "fgdqn/errors.hpp"
#include "fgdqn/mlp.hpp"
#include "fgdqn/tabular_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fgdqn {

template <typename Scalar>
struct OracleSolution {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Table = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Scalar beta{};
    Vector V;  // relative values, V(anchor) = 0
    Table Q;   // r - beta + P V
    Scalar residual{};
    long iterations = 0;

    std::vector<int> greedy_policy() const {
        std::vector<int> policy(Q.rows());
        for (Eigen::Index i = 0; i < Q.rows(); ++i) policy[i] = argmax(Q.row(i));
        return policy;
    }
};

struct RviOptions {
    double tol = 1e-10;
    long max_iter = 2'000'000;
    int anchor = 0;
    /// Aperiodicity transform weight in (0, 1]; 1 is plain relative value iteration.
    double tau = 1.0;
};

namespace detail {

template <typename Scalar>
typename OracleSolution<Scalar>::Table backup(const TabularModel<Scalar>& m,
                                              const typename OracleSolution<Scalar>::Vector& V) {
    typename OracleSolution<Scalar>::Table q(m.num_states(), m.num_actions());
    for (int u = 0; u < m.num_actions(); ++u) q.col(u) = m.r.col(u) + m.p[u] * V;
    return q;
}

}  // namespace detail

/// Relative value iteration with span-seminorm stopping. Throws NoConvergence
/// carrying the last span when max_iter is exhausted.
template <typename Scalar>
OracleSolution<Scalar> relative_value_iteration(const TabularModel<Scalar>& m, const RviOptions& opt = {}) {
    using Vector = typename OracleSolution<Scalar>::Vector;
    const int n = m.num_states();
    if (opt.anchor < 0 || opt.anchor >= n) throw std::invalid_argument("rvi: anchor out of range");
    if (!(opt.tau > 0.0 && opt.tau <= 1.0)) throw std::invalid_argument("rvi: tau must lie in (0, 1]");
    const Scalar tau(opt.tau);

    Vector V = Vector::Zero(n);
    Scalar span = std::numeric_limits<Scalar>::infinity();
    Scalar lo{}, hi{};
    long it = 0;
    for (; it < opt.max_iter; ++it) {
        const Vector TV = detail::backup(m, V).rowwise().maxCoeff();
        const Vector W = (Scalar(1) - tau) * V + tau * TV;
        const Vector diff = W - V;
        lo = diff.minCoeff();
        hi = diff.maxCoeff();
        span = hi - lo;
        V = W.array() - W(opt.anchor);
        if (span < Scalar(opt.tol)) break;
    }
    if (!(span < Scalar(opt.tol)))
        throw NoConvergence("relative value iteration did not converge (span " + std::to_string(double(span)) + ")",
                            double(span));

    OracleSolution<Scalar> sol;
    sol.iterations = it + 1;
    sol.beta = (lo + hi) / (Scalar(2) * tau);
    sol.V = V;
    sol.Q = detail::backup(m, V).array() - sol.beta;
    sol.residual = (sol.V - sol.Q.rowwise().maxCoeff()).cwiseAbs().maxCoeff();
    return sol;
}

/// Policy as a row-stochastic [state x action] table.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> deterministic_policy(const std::vector<int>& actions,
                                                                           int num_actions) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> phi =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(Eigen::Index(actions.size()), num_actions);
    for (std::size_t i = 0; i < actions.size(); ++i) phi(Eigen::Index(i), actions[i]) = Scalar(1);
    return phi;
}

/// Stationary distribution of the chain induced by `policy`. Throws
/// SingularSystem when it is not unique.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> stationary_distribution(
    const TabularModel<Scalar>& m, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& policy) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const int n = m.num_states();
    if (policy.rows() != n || policy.cols() != m.num_actions())
        throw std::invalid_argument("policy shape does not match the model");
    Matrix P = Matrix::Zero(n, n);
    for (int u = 0; u < m.num_actions(); ++u) P += policy.col(u).asDiagonal() * Matrix(m.p[u]);
    Matrix A = P.transpose() - Matrix::Identity(n, n);
    A.row(n - 1).setOnes();
    Vector rhs = Vector::Zero(n);
    rhs(n - 1) = Scalar(1);
    Eigen::FullPivLU<Matrix> lu(A);
    lu.setThreshold(Scalar(1e-10));
    if (lu.rank() < n) throw SingularSystem("induced chain has no unique stationary distribution");
    return lu.solve(rhs);
}

/// Long-run average reward sum_i pi(i) sum_u phi(u|i) r(i,u).
template <typename Scalar>
Scalar policy_average_reward(const TabularModel<Scalar>& m,
                             const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& policy) {
    const auto pi = stationary_distribution(m, policy);
    return pi.dot(policy.cwiseProduct(m.r).rowwise().sum());
}

/// Same arm with the passive reward raised by `subsidy`.
template <typename Scalar>
TabularModel<Scalar> subsidized(const TabularModel<Scalar>& arm, Scalar subsidy) {
    if (arm.num_actions() != 2) throw std::invalid_argument("subsidy requires a two-action arm");
    TabularModel<Scalar> m = arm;
    m.r.col(0).array() += subsidy;
    return m;
}

/// Q(k,1) - Q(k,0) of the subsidized average-reward problem.
template <typename Scalar>
Scalar subsidy_gap(const TabularModel<Scalar>& arm, int state, Scalar subsidy, const RviOptions& opt = {}) {
    const auto sol = relative_value_iteration(subsidized(arm, subsidy), opt);
    return sol.Q(state, 1) - sol.Q(state, 0);
}

template <typename Scalar>
std::pair<Scalar, Scalar> default_subsidy_bracket(const TabularModel<Scalar>& arm) {
    const Scalar bound = arm.r.cwiseAbs().maxCoeff() + Scalar(1);
    return {-bound, bound};
}

/// Bisection for the subsidy that equalizes the active and passive Q-values
/// at `state`. Throws NotBracketed when the gap keeps its sign on [lo, hi].
template <typename Scalar>
Scalar whittle_index_exact(const TabularModel<Scalar>& arm, int state, Scalar lo, Scalar hi, Scalar tol = Scalar(1e-8)) {
    RviOptions opt;
    opt.tol = std::min(1e-10, double(tol) * 1e-3);
    Scalar g_lo = subsidy_gap(arm, state, lo, opt);
    Scalar g_hi = subsidy_gap(arm, state, hi, opt);
    if (std::abs(g_lo) < tol) return lo;
    if (std::abs(g_hi) < tol) return hi;
    if ((g_lo > 0) == (g_hi > 0))
        throw NotBracketed("whittle index for state " + std::to_string(state) + " is not bracketed by [" +
                           std::to_string(double(lo)) + ", " + std::to_string(double(hi)) + "]");
    for (int i = 0; i < 200; ++i) {
        const Scalar mid = (lo + hi) / Scalar(2);
        const Scalar g = subsidy_gap(arm, state, mid, opt);
        if (std::abs(g) < tol || hi - lo < std::numeric_limits<Scalar>::epsilon() * 4) return mid;
        if ((g > 0) == (g_lo > 0)) {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
        }
    }
    return (lo + hi) / Scalar(2);
}

template <typename Scalar>
Scalar whittle_index_exact(const TabularModel<Scalar>& arm, int state, Scalar tol = Scalar(1e-8)) {
    const auto [lo, hi] = default_subsidy_bracket(arm);
    return whittle_index_exact(arm, state, lo, hi, tol);
}

struct IndexabilityReport {
    bool indexable = true;
    /// passive[g][k] is true when passivity is optimal at state k under grid subsidy g.
    std::vector<std::vector<bool>> passive;
};

/// Checks that the passive-optimal set grows monotonically along an increasing
/// subsidy grid.
template <typename Scalar>
IndexabilityReport indexability_check(const TabularModel<Scalar>& arm, const std::vector<Scalar>& grid,
                                      Scalar tie_tol = Scalar(1e-9)) {
    IndexabilityReport report;
    for (Scalar lambda : grid) {
        const auto sol = relative_value_iteration(subsidized(arm, lambda));
        std::vector<bool> passive(arm.num_states());
        for (int k = 0; k < arm.num_states(); ++k) passive[k] = sol.Q(k, 0) >= sol.Q(k, 1) - tie_tol;
        if (!report.passive.empty()) {
            const auto& prev = report.passive.back();
            for (int k = 0; k < arm.num_states(); ++k)
                if (prev[k] && !passive[k]) report.indexable = false;
        }
        report.passive.push_back(std::move(passive));
    }
    return report;
}

template <typename Scalar>
std::vector<Scalar> linear_grid(Scalar lo, Scalar hi, int points) {
    std::vector<Scalar> g(points);
    for (int i = 0; i < points; ++i) g[i] = lo + (hi - lo) * Scalar(i) / Scalar(std::max(points - 1, 1));
    return g;
}

}  // namespace fgdqn
