#include "fgdqn/qnetwork.hpp"

#include <stdexcept>

namespace fgdqn {

QNetwork::QNetwork(const MlpSpec& spec, const FeatureEncoding& encoding)
    : mlp_(spec), features_(encoding.table()) {
    if (spec.input_dim != encoding.dimension())
        throw std::invalid_argument("q-network: input dimension does not match the feature encoding");
}

}  // namespace fgdqn
