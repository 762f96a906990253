#pragma once

#include "fgdqn/env.hpp"
#include "fgdqn/errors.hpp"
#include "fgdqn/rng.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace fgdqn {

/// FIFO ring of transitions with a secondary index from (state, action) to the
/// ring positions holding that pair, newest last. Each index list keeps at
/// most `per_key_cap` positions.
class ReplayBuffer {
public:
    using Key = std::pair<StateId, ActionId>;

    explicit ReplayBuffer(std::size_t capacity = 100'000, std::size_t per_key_cap = 256);

    void push(const Transition& t);

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return ring_.size(); }
    std::size_t per_key_cap() const { return per_key_cap_; }
    bool empty() const { return size_ == 0; }

    /// i-th live transition in insertion order (0 = oldest).
    const Transition& at(std::size_t i) const;
    /// Ring positions indexed under (x, u), oldest first; empty when absent.
    const std::deque<std::size_t>& positions(StateId x, ActionId u) const;
    const Transition& at_position(std::size_t pos) const { return ring_[pos]; }
    const std::map<Key, std::deque<std::size_t>>& index() const { return index_; }

    std::vector<Transition> sample_uniform(std::size_t batch, Rng& rng) const;

    /// Mean over stored transitions matching (x, u) of
    /// r + bootstrap(x') - offset - q_of_xu. Throws MissingKey when no
    /// transition matches.
    template <typename Bootstrap>
    double conditional_td_average(StateId x, ActionId u, double q_of_xu, double offset_val,
                                  Bootstrap&& bootstrap) const {
        const auto it = index_.find({x, u});
        if (it == index_.end() || it->second.empty())
            throw MissingKey("no stored transition for state " + std::to_string(x) + " action " +
                             std::to_string(u));
        double sum = 0.0;
        for (std::size_t pos : it->second) {
            const Transition& t = ring_[pos];
            sum += t.reward + bootstrap(t.next_state);
        }
        return sum / double(it->second.size()) - offset_val - q_of_xu;
    }

    /// Key with the longest index list; ties go to the smallest (state, action).
    Key most_frequent_state_action() const;

    /// Distinct states appearing as the source of a live transition, ascending.
    std::vector<StateId> visited_states() const;

    /// One transition per line: x u r x'.
    void dump(const std::string& path) const;
    static ReplayBuffer load(const std::string& path, std::size_t capacity, std::size_t per_key_cap = 256);

private:
    std::vector<Transition> ring_;
    std::size_t head_ = 0;  // next write position
    std::size_t size_ = 0;
    std::size_t per_key_cap_;
    std::map<Key, std::deque<std::size_t>> index_;
    std::map<StateId, std::size_t> state_counts_;
};

}  // namespace fgdqn
