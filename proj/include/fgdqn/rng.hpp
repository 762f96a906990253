#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fgdqn {

using Rng = std::mt19937_64;

/// Derives an independent generator from a master seed and a stream name, so
/// that e.g. evaluation draws never perturb training draws.
inline Rng child_stream(std::uint64_t master, std::string_view name, std::uint64_t salt = 0) {
    std::vector<std::uint32_t> words;
    words.reserve(name.size() + 4);
    words.push_back(static_cast<std::uint32_t>(master));
    words.push_back(static_cast<std::uint32_t>(master >> 32));
    words.push_back(static_cast<std::uint32_t>(salt));
    words.push_back(static_cast<std::uint32_t>(salt >> 32));
    for (char c : name) words.push_back(static_cast<unsigned char>(c));
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace fgdqn
