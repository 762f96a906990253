#pragma once

#include <stdexcept>
#include <string>

namespace fgdqn {

/// Raised when a parameter update produces a non-finite value. Training loops
/// treat this as the divergence signal.
struct NumericOverflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyBuffer : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingKey : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedOffset : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedMode : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoConvergence : std::runtime_error {
    NoConvergence(const std::string& what, double last_residual)
        : std::runtime_error(what), residual(last_residual) {}
    double residual;
};

struct SingularSystem : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotBracketed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fgdqn
