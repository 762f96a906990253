#pragma once

#include "fgdqn/errors.hpp"
#include "fgdqn/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fgdqn {

/// Fully connected network: rectifier on hidden layers, identity output.
struct MlpSpec {
    int input_dim = 1;
    std::vector<int> hidden{64};
    int output_dim = 1;

    /// Layer widths from input to output.
    std::vector<int> widths() const {
        std::vector<int> w{input_dim};
        w.insert(w.end(), hidden.begin(), hidden.end());
        w.push_back(output_dim);
        return w;
    }

    Eigen::Index num_params() const {
        const auto w = widths();
        Eigen::Index d = 0;
        for (std::size_t l = 1; l < w.size(); ++l) d += Eigen::Index(w[l]) * (w[l - 1] + 1);
        return d;
    }

    void validate() const {
        if (input_dim <= 0 || output_dim <= 0) throw std::invalid_argument("mlp: dimensions must be positive");
        if (hidden.empty()) throw std::invalid_argument("mlp: at least one hidden layer required");
        for (int h : hidden)
            if (h <= 0) throw std::invalid_argument("mlp: hidden widths must be positive");
    }

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Flat parameter storage: layer-major, each layer's weight matrix (out x in,
/// column-major) followed by its bias.
template <typename Scalar>
using ParamVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using GradVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Smallest index attaining the maximum.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& values) {
    int best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i)
        if (values(i) > values(best)) best = static_cast<int>(i);
    return best;
}

template <typename Scalar>
class Mlp {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using ConstMatrixMap = Eigen::Map<const Matrix>;
    using ConstVectorMap = Eigen::Map<const Vector>;
    using MatrixMap = Eigen::Map<Matrix>;
    using VectorMap = Eigen::Map<Vector>;
    using InputRef = Eigen::Ref<const Vector>;

    /// Activations recorded by a forward pass, reused by backward passes.
    struct Trace {
        std::vector<Vector> pre;   // pre-activations per layer
        std::vector<Vector> post;  // post[0] is the input
        const Vector& output() const { return pre.back(); }
    };

    explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        widths_ = spec_.widths();
        offsets_.push_back(0);
        for (std::size_t l = 1; l < widths_.size(); ++l)
            offsets_.push_back(offsets_.back() + Eigen::Index(widths_[l]) * (widths_[l - 1] + 1));
    }

    const MlpSpec& spec() const { return spec_; }
    Eigen::Index num_params() const { return offsets_.back(); }
    int num_layers() const { return static_cast<int>(widths_.size()) - 1; }

    /// Uniform(+-1/sqrt(fan_in)) weights, zero biases.
    Vector init(Rng& rng) const {
        Vector theta = Vector::Zero(num_params());
        for (int l = 0; l < num_layers(); ++l) {
            const double bound = 1.0 / std::sqrt(double(widths_[l]));
            std::uniform_real_distribution<double> dist(-bound, bound);
            auto w = weights(theta, l);
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = Scalar(dist(rng));
        }
        return theta;
    }

    void forward(const Vector& theta, const InputRef& x, Trace& trace) const {
        check(theta, x);
        trace.pre.resize(num_layers());
        trace.post.resize(num_layers());
        trace.post[0] = x;
        for (int l = 0; l < num_layers(); ++l) {
            trace.pre[l].noalias() = weights(theta, l) * trace.post[l];
            trace.pre[l] += bias(theta, l);
            if (l + 1 < num_layers()) trace.post[l + 1] = trace.pre[l].cwiseMax(Scalar(0));
        }
    }

    Vector forward(const Vector& theta, const InputRef& x) const {
        Trace t;
        forward(theta, x, t);
        return t.output();
    }

    /// grad += scale * d(seed . output)/d theta; optionally writes d(seed . output)/d x.
    void backward(const Vector& theta, const Trace& trace, const Vector& seed, Scalar scale,
                  Eigen::Ref<Vector> grad, Vector* input_grad = nullptr) const {
        if (grad.size() != num_params()) throw std::invalid_argument("mlp: gradient length mismatch");
        if (seed.size() != spec_.output_dim) throw std::invalid_argument("mlp: output seed length mismatch");
        Vector delta = seed;
        for (int l = num_layers() - 1; l >= 0; --l) {
            const Eigen::Index in = widths_[l], out = widths_[l + 1];
            MatrixMap gw(grad.data() + offsets_[l], out, in);
            VectorMap gb(grad.data() + offsets_[l] + out * in, out);
            gw.noalias() += (scale * delta) * trace.post[l].transpose();
            gb += scale * delta;
            if (l == 0 && input_grad == nullptr) break;
            Vector back = weights(theta, l).transpose() * delta;
            if (l > 0) {
                for (Eigen::Index i = 0; i < back.size(); ++i)
                    if (!(trace.pre[l - 1](i) > Scalar(0))) back(i) = Scalar(0);
            }
            delta = std::move(back);
        }
        if (input_grad) *input_grad = delta;
    }

    /// Gradient of output[u] with respect to the parameters.
    Vector grad_param(const Vector& theta, const InputRef& x, int u) const {
        Trace t;
        forward(theta, x, t);
        check_action(u);
        Vector g = Vector::Zero(num_params());
        backward(theta, t, unit(u), Scalar(1), g);
        return g;
    }

    /// Gradient of output[u] with respect to the input.
    Vector grad_input(const Vector& theta, const InputRef& x, int u) const {
        Trace t;
        forward(theta, x, t);
        check_action(u);
        Vector g = Vector::Zero(num_params());
        Vector gx;
        backward(theta, t, unit(u), Scalar(1), g, &gx);
        return gx;
    }

    /// Danskin subgradient of max_v output[v]: smallest maximizing index and
    /// the parameter gradient at it.
    std::pair<int, Vector> grad_max(const Vector& theta, const InputRef& x) const {
        Trace t;
        forward(theta, x, t);
        const int v = argmax(t.output());
        Vector g = Vector::Zero(num_params());
        backward(theta, t, unit(v), Scalar(1), g);
        return {v, std::move(g)};
    }

    Vector unit(int u) const { return Vector::Unit(spec_.output_dim, u); }

    ConstMatrixMap weights(const Vector& theta, int l) const {
        return ConstMatrixMap(theta.data() + offsets_[l], widths_[l + 1], widths_[l]);
    }
    ConstVectorMap bias(const Vector& theta, int l) const {
        return ConstVectorMap(theta.data() + offsets_[l] + Eigen::Index(widths_[l + 1]) * widths_[l],
                              widths_[l + 1]);
    }
    MatrixMap weights(Vector& theta, int l) const {
        return MatrixMap(theta.data() + offsets_[l], widths_[l + 1], widths_[l]);
    }
    VectorMap bias(Vector& theta, int l) const {
        return VectorMap(theta.data() + offsets_[l] + Eigen::Index(widths_[l + 1]) * widths_[l], widths_[l + 1]);
    }

private:
    void check(const Vector& theta, const InputRef& x) const {
        if (theta.size() != num_params())
            throw std::invalid_argument("mlp: parameter length " + std::to_string(theta.size()) + " != " +
                                        std::to_string(num_params()));
        if (x.size() != spec_.input_dim)
            throw std::invalid_argument("mlp: input length " + std::to_string(x.size()) + " != " +
                                        std::to_string(spec_.input_dim));
    }
    void check_action(int u) const {
        if (u < 0 || u >= spec_.output_dim) throw std::invalid_argument("mlp: output index out of range");
    }

    MlpSpec spec_;
    std::vector<int> widths_;
    std::vector<Eigen::Index> offsets_;
};

/// theta + scale * g; throws NumericOverflow when the result is not finite.
template <typename Scalar>
ParamVector<Scalar> axpy_update(const ParamVector<Scalar>& theta, Scalar scale, const GradVector<Scalar>& g) {
    if (theta.size() != g.size()) throw std::invalid_argument("axpy_update: length mismatch");
    ParamVector<Scalar> out = theta + scale * g;
    if (!out.allFinite()) throw NumericOverflow("parameter update produced a non-finite value");
    return out;
}

}  // namespace fgdqn
