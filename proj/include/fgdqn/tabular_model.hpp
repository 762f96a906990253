#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgdqn {

/// Exact controlled-chain model: one row-stochastic sparse matrix per action
/// and a dense reward table indexed [state, action].
template <typename Scalar>
struct TabularModel {
    using Transition = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;
    using Rewards = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    std::vector<Transition> p;  // p[u](i, j) = p(j | i, u)
    Rewards r;                  // r(i, u)

    int num_states() const { return static_cast<int>(r.rows()); }
    int num_actions() const { return static_cast<int>(r.cols()); }

    Scalar prob(int i, int u, int j) const { return p[u].coeff(i, j); }

    /// Throws std::invalid_argument unless every row is a probability vector.
    void validate(Scalar tol = Scalar(1e-12)) const {
        if (static_cast<int>(p.size()) != num_actions())
            throw std::invalid_argument("tabular model: action count mismatch");
        for (int u = 0; u < num_actions(); ++u) {
            if (p[u].rows() != num_states() || p[u].cols() != num_states())
                throw std::invalid_argument("tabular model: transition shape mismatch");
            for (int i = 0; i < num_states(); ++i) {
                Scalar sum(0);
                for (typename Transition::InnerIterator it(p[u], i); it; ++it) {
                    if (it.value() < Scalar(0) || it.value() > Scalar(1))
                        throw std::invalid_argument("tabular model: entry outside [0,1]");
                    sum += it.value();
                }
                if (std::abs(sum - Scalar(1)) > tol)
                    throw std::invalid_argument("tabular model: row " + std::to_string(i) +
                                                " action " + std::to_string(u) +
                                                " does not sum to 1");
            }
        }
        if (!r.allFinite()) throw std::invalid_argument("tabular model: non-finite reward");
    }
};

using TabularModeld = TabularModel<double>;

/// Incremental builder collecting (i, u, j, prob) entries; duplicates are summed.
template <typename Scalar>
class TabularModelBuilder {
public:
    TabularModelBuilder(int num_states, int num_actions)
        : triplets_(num_actions),
          rewards_(TabularModel<Scalar>::Rewards::Zero(num_states, num_actions)) {}

    void add(int i, int u, int j, Scalar prob) {
        if (prob != Scalar(0)) triplets_[u].emplace_back(i, j, prob);
    }
    void reward(int i, int u, Scalar value) { rewards_(i, u) = value; }

    TabularModel<Scalar> build() const {
        TabularModel<Scalar> m;
        const auto n = rewards_.rows();
        for (const auto& t : triplets_) {
            typename TabularModel<Scalar>::Transition mat(n, n);
            mat.setFromTriplets(t.begin(), t.end());
            mat.makeCompressed();
            m.p.push_back(std::move(mat));
        }
        m.r = rewards_;
        return m;
    }

private:
    std::vector<std::vector<Eigen::Triplet<Scalar>>> triplets_;
    typename TabularModel<Scalar>::Rewards rewards_;
};

/// True when `anchor` is reached with positive probability from every state
/// under every stationary policy, which makes the model unichain.
template <typename Scalar>
bool anchor_reachable_under_all_policies(const TabularModel<Scalar>& m, int anchor) {
    const int n = m.num_states();
    std::vector<char> good(n, 0);
    good[anchor] = 1;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int i = 0; i < n; ++i) {
            if (good[i]) continue;
            bool all_actions = true;
            for (int u = 0; u < m.num_actions() && all_actions; ++u) {
                bool hits = false;
                for (typename TabularModel<Scalar>::Transition::InnerIterator it(m.p[u], i); it; ++it)
                    if (it.value() > Scalar(0) && good[it.col()]) {
                        hits = true;
                        break;
                    }
                all_actions = hits;
            }
            if (all_actions) {
                good[i] = 1;
                changed = true;
            }
        }
    }
    for (char g : good)
        if (!g) return false;
    return true;
}

}  // namespace fgdqn
