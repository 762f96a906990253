#include "fgdqn/replay.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fgdqn {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t per_key_cap)
    : ring_(capacity), per_key_cap_(per_key_cap) {
    if (capacity == 0) throw std::invalid_argument("replay: capacity must be positive");
    if (per_key_cap == 0) throw std::invalid_argument("replay: per-key cap must be positive");
}

void ReplayBuffer::push(const Transition& t) {
    const std::size_t pos = head_;
    if (size_ == ring_.size()) {
        const Transition& old = ring_[pos];
        auto it = index_.find({old.state, old.action});
        // The evicted entry is the oldest overall, so it can only sit at the
        // front of its list (or already be gone through the per-key cap).
        if (it != index_.end() && !it->second.empty() && it->second.front() == pos) {
            it->second.pop_front();
            if (it->second.empty()) index_.erase(it);
        }
        if (--state_counts_[old.state] == 0) state_counts_.erase(old.state);
    } else {
        ++size_;
    }
    ring_[pos] = t;
    auto& list = index_[{t.state, t.action}];
    list.push_back(pos);
    if (list.size() > per_key_cap_) list.pop_front();
    ++state_counts_[t.state];
    head_ = (head_ + 1) % ring_.size();
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("replay: index out of range");
    const std::size_t oldest = size_ == ring_.size() ? head_ : 0;
    return ring_[(oldest + i) % ring_.size()];
}

const std::deque<std::size_t>& ReplayBuffer::positions(StateId x, ActionId u) const {
    static const std::deque<std::size_t> none;
    const auto it = index_.find({x, u});
    return it == index_.end() ? none : it->second;
}

std::vector<Transition> ReplayBuffer::sample_uniform(std::size_t batch, Rng& rng) const {
    if (batch == 0) return {};
    if (empty()) throw EmptyBuffer("replay: cannot sample from an empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) out.push_back(ring_[pick(rng)]);
    return out;
}

ReplayBuffer::Key ReplayBuffer::most_frequent_state_action() const {
    if (index_.empty()) throw EmptyBuffer("replay: no transitions stored");
    Key best = index_.begin()->first;
    std::size_t count = 0;
    for (const auto& [key, list] : index_)
        if (list.size() > count) {
            best = key;
            count = list.size();
        }
    return best;
}

std::vector<StateId> ReplayBuffer::visited_states() const {
    std::vector<StateId> out;
    out.reserve(state_counts_.size());
    for (const auto& [s, n] : state_counts_) out.push_back(s);
    return out;
}

void ReplayBuffer::dump(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("replay: cannot write " + path);
    f << std::setprecision(17);
    for (std::size_t i = 0; i < size_; ++i) {
        const Transition& t = at(i);
        f << t.state << ' ' << t.action << ' ' << t.reward << ' ' << t.next_state << '\n';
    }
}

ReplayBuffer ReplayBuffer::load(const std::string& path, std::size_t capacity, std::size_t per_key_cap) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("replay: cannot read " + path);
    ReplayBuffer buf(capacity, per_key_cap);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream in(line);
        Transition t;
        if (!(in >> t.state >> t.action >> t.reward >> t.next_state))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed transition");
        buf.push(t);
    }
    return buf;
}

}  // namespace fgdqn
