#include "dlf/network.hpp"

#include <cmath>

namespace dlf {

std::vector<Index> NetworkSpec::layer_dims() const {
    std::vector<Index> dims;
    dims.reserve(hidden_layers.size() + 2);
    dims.push_back(input_dim);
    for (Index h : hidden_layers) dims.push_back(h);
    dims.push_back(output_dim);
    return dims;
}

void validate_spec(const NetworkSpec& spec) {
    if (spec.input_dim < 1) throw InvalidSpec("network: input_dim must be >= 1");
    if (spec.output_dim < 1) {
        throw InvalidSpec("network: output_dim must be >= 1");
    }
    for (Index h : spec.hidden_layers) {
        if (h < 1) throw InvalidSpec("network: hidden widths must be >= 1");
    }
    if (spec.output_clip < 0.0) {
        throw InvalidSpec("network: output_clip must be non-negative");
    }
}

NetworkParams& NetworkParams::operator+=(const NetworkParams& other) {
    if (weights.size() != other.weights.size()) {
        throw DimensionMismatch("params: layer count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        biases[l] += other.biases[l];
    }
    return *this;
}

NetworkParams& NetworkParams::operator*=(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    return *this;
}

double NetworkParams::squared_norm() const {
    double total = 0.0;
    for (const auto& w : weights) total += w.squaredNorm();
    for (const auto& b : biases) total += b.squaredNorm();
    return total;
}

NetworkParams init_params(const NetworkSpec& spec, SeededRng& rng) {
    validate_spec(spec);
    const auto dims = spec.layer_dims();
    NetworkParams params;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const Index fan_in = dims[l];
        const Index fan_out = dims[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Matrix w(fan_out, fan_in);
        for (Index i = 0; i < fan_out; ++i) {
            for (Index j = 0; j < fan_in; ++j) {
                w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
            }
        }
        params.weights.push_back(std::move(w));
        params.biases.push_back(Vector::Zero(fan_out));
    }
    return params;
}

void validate_params(const NetworkSpec& spec, const NetworkParams& params) {
    const auto dims = spec.layer_dims();
    if (params.weights.size() + 1 != dims.size() ||
        params.biases.size() + 1 != dims.size()) {
        throw DimensionMismatch("network: layer count does not match spec");
    }
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        if (params.weights[l].rows() != dims[l + 1] ||
            params.weights[l].cols() != dims[l] ||
            params.biases[l].size() != dims[l + 1]) {
            throw DimensionMismatch("network: parameter shape mismatch at layer " +
                                    std::to_string(l));
        }
        if (!params.weights[l].allFinite() || !params.biases[l].allFinite()) {
            throw NonFiniteLoss("network: non-finite parameters at layer " +
                                std::to_string(l));
        }
    }
}

namespace {

void apply_activation(Matrix& a, Activation act) {
    if (act == Activation::ReLU) {
        a = a.cwiseMax(0.0);
    } else {
        a = a.array().tanh().matrix();
    }
}

// Derivative of the activation expressed through the post-activation value.
Matrix activation_grad(const Matrix& post, Activation act) {
    if (act == Activation::ReLU) {
        return (post.array() > 0.0).cast<double>().matrix();
    }
    return (1.0 - post.array().square()).matrix();
}

}  // namespace

Matrix forward_batch(const NetworkSpec& spec, const NetworkParams& params,
                     const Matrix& x, ForwardCache& cache) {
    if (x.cols() != spec.input_dim) {
        throw DimensionMismatch("forward: input has " + std::to_string(x.cols()) +
                                " features, spec wants " +
                                std::to_string(spec.input_dim));
    }
    const std::size_t n_layers = params.weights.size();
    cache.activations.assign(1, x);
    Matrix a = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        Matrix z = (a * params.weights[l].transpose()).rowwise() +
                   params.biases[l].transpose();
        if (l + 1 < n_layers) {
            apply_activation(z, spec.activation);
            cache.activations.push_back(z);
        } else if (spec.output_clip > 0.0) {
            cache.pre_clip = z;
            z = z.cwiseMax(-spec.output_clip).cwiseMin(spec.output_clip);
        }
        a = std::move(z);
    }
    return a;
}

Matrix forward_batch(const NetworkSpec& spec, const NetworkParams& params,
                     const Matrix& x) {
    ForwardCache cache;
    return forward_batch(spec, params, x, cache);
}

Vector forward(const NetworkSpec& spec, const NetworkParams& params,
               const Vector& x) {
    return forward_batch(spec, params, x.transpose()).row(0).transpose();
}

NetworkGrads backward_batch(const NetworkSpec& spec,
                            const NetworkParams& params,
                            const ForwardCache& cache,
                            const Matrix& upstream) {
    const std::size_t n_layers = params.weights.size();
    if (cache.activations.size() != n_layers) {
        throw DimensionMismatch("backward: cache does not match network depth");
    }
    if (upstream.rows() != cache.activations[0].rows() ||
        upstream.cols() != spec.output_dim) {
        throw DimensionMismatch("backward: upstream gradient shape mismatch");
    }
    NetworkGrads grads = zero_grads(spec);
    Matrix g = upstream;
    if (spec.output_clip > 0.0) {
        g.array() *=
            (cache.pre_clip.array().abs() < spec.output_clip).cast<double>();
    }
    for (std::size_t l = n_layers; l-- > 0;) {
        grads.weights[l] = g.transpose() * cache.activations[l];
        grads.biases[l] = g.colwise().sum().transpose();
        if (l > 0) {
            g = (g * params.weights[l])
                    .cwiseProduct(
                        activation_grad(cache.activations[l], spec.activation));
        }
    }
    return grads;
}

NetworkGrads zero_grads(const NetworkSpec& spec) {
    const auto dims = spec.layer_dims();
    NetworkGrads grads;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        grads.weights.push_back(Matrix::Zero(dims[l + 1], dims[l]));
        grads.biases.push_back(Vector::Zero(dims[l + 1]));
    }
    return grads;
}

void adam_update(Matrix& param, const Matrix& grad, AdamBuf& buf, long step,
                 const AdamConfig& cfg) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
        throw DimensionMismatch("adam: parameter and gradient shapes differ");
    }
    if (step < 1) throw InvalidShape("adam: step must be >= 1");
    buf.m = cfg.beta1 * buf.m + (1.0 - cfg.beta1) * grad;
    buf.v = cfg.beta2 * buf.v.array().matrix() +
            (1.0 - cfg.beta2) * grad.array().square().matrix();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    param.array() -= cfg.lr * (buf.m.array() / c1) /
                     ((buf.v.array() / c2).sqrt() + cfg.eps);
}

AdamState make_adam_state(const NetworkSpec& spec) {
    const auto dims = spec.layer_dims();
    AdamState state;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w = Matrix::Zero(dims[l + 1], dims[l]);
        state.weights.push_back(AdamBuf::like(w));
        Matrix b = Matrix::Zero(dims[l + 1], 1);
        state.biases.push_back(AdamBuf::like(b));
    }
    return state;
}

void adam_step(NetworkParams& params, const NetworkGrads& grads,
               AdamState& state, const AdamConfig& cfg) {
    if (params.weights.size() != grads.weights.size() ||
        params.weights.size() != state.weights.size()) {
        throw DimensionMismatch("adam: layer count mismatch");
    }
    ++state.step;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        adam_update(params.weights[l], grads.weights[l], state.weights[l],
                    state.step, cfg);
        Matrix b = params.biases[l];
        adam_update(b, grads.biases[l], state.biases[l], state.step, cfg);
        params.biases[l] = b.col(0);
    }
}

}  // namespace dlf
