// Brute-force references shared by the unit tests and the acceptance binary.
#pragma once

#include "fgdqn/replay.hpp"
#include "fgdqn/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace fgdqn::testing {

/// Keeps every live transition in a plain FIFO and answers queries by
/// scanning it.
struct ScanReplay {
    std::size_t capacity;
    std::size_t per_key_cap;
    std::deque<Transition> live;

    void push(const Transition& t) {
        live.push_back(t);
        if (live.size() > capacity) live.pop_front();
    }
    /// The newest per_key_cap live transitions matching (x, u), oldest first.
    std::vector<Transition> matches(StateId x, ActionId u) const {
        std::vector<Transition> m;
        for (const auto& t : live)
            if (t.state == x && t.action == u) m.push_back(t);
        if (m.size() > per_key_cap) m.erase(m.begin(), m.end() - static_cast<std::ptrdiff_t>(per_key_cap));
        return m;
    }
    bool td_average(StateId x, ActionId u, double q, double f, const std::function<double(StateId)>& boot,
                    double& out) const {
        const auto m = matches(x, u);
        if (m.empty()) return false;
        double sum = 0.0;
        for (const auto& t : m) sum += t.reward + boot(t.next_state);
        out = sum / double(m.size()) - f - q;
        return true;
    }
};

/// Drives a ReplayBuffer and a ScanReplay with the same random stream of
/// pushes and compares every key's average and index contents. Returns the
/// number of mismatches.
inline int replay_sequence_mismatches(Rng& rng) {
    const std::size_t capacity = uniform_int(rng, 1, 40);
    const std::size_t cap = uniform_int(rng, 1, 12);
    const int S = uniform_int(rng, 1, 6), A = uniform_int(rng, 1, 3);
    const int pushes = uniform_int(rng, 0, 120);
    ReplayBuffer buf(capacity, cap);
    ScanReplay ref{capacity, cap, {}};
    Eigen::VectorXd boot_table(S);
    for (auto& v : boot_table) v = uniform01(rng) * 4.0 - 2.0;
    auto boot = [&](StateId s) { return boot_table(s); };
    int bad = 0;
    for (int i = 0; i < pushes; ++i) {
        const Transition t{uniform_int(rng, 0, S - 1), uniform_int(rng, 0, A - 1), uniform01(rng) * 2.0 - 1.0,
                           uniform_int(rng, 0, S - 1)};
        buf.push(t);
        ref.push(t);
    }
    if (buf.size() != ref.live.size()) ++bad;
    for (std::size_t i = 0; i < ref.live.size(); ++i)
        if (!(buf.at(i) == ref.live[i])) ++bad;
    for (StateId x = 0; x < S; ++x)
        for (ActionId u = 0; u < A; ++u) {
            const double q = uniform01(rng), f = uniform01(rng);
            double expect = 0.0;
            const bool present = ref.td_average(x, u, q, f, boot, expect);
            try {
                const double got = buf.conditional_td_average(x, u, q, f, boot);
                if (!present || std::abs(got - expect) > 1e-12) ++bad;
            } catch (const MissingKey&) {
                if (present) ++bad;
            }
            const auto m = ref.matches(x, u);
            const auto& pos = buf.positions(x, u);
            if (pos.size() != m.size()) {
                ++bad;
                continue;
            }
            for (std::size_t j = 0; j < m.size(); ++j)
                if (!(buf.at_position(pos[j]) == m[j])) ++bad;
        }
    return bad;
}

/// Central-difference gradient of a scalar function of a parameter vector.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& fn,
                                   const Eigen::VectorXd& theta, double h = 1e-6) {
    Eigen::VectorXd g(theta.size());
    Eigen::VectorXd t = theta;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        t(i) = theta(i) + h;
        const double up = fn(t);
        t(i) = theta(i) - h;
        const double down = fn(t);
        t(i) = theta(i);
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

inline double relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    return (got - want).norm() / std::max(1e-8, want.norm());
}

}  // namespace fgdqn::testing
