#pragma once

#include <vector>

#include "dlf/numerics.hpp"

namespace dlf {

enum class Activation { ReLU, Tanh };

// Architecture of a feed-forward network. The final layer is always linear;
// consumers that need several heads slice the output vector.
struct NetworkSpec {
    Index input_dim = 0;
    std::vector<Index> hidden_layers;
    Index output_dim = 0;
    Activation activation = Activation::ReLU;
    // Optional symmetric output clamp to [-output_clip, output_clip].
    // Zero disables it. Off by default; only theory-faithful experiments
    // turn it on.
    double output_clip = 0.0;

    // Layer widths including input and output, e.g. 2 -> [3] -> 1 gives
    // {2, 3, 1}.
    std::vector<Index> layer_dims() const;
};

void validate_spec(const NetworkSpec& spec);

// Weights and biases per layer. weights[l] has shape (out_l x in_l),
// biases[l] has length out_l. Gradients share the same layout.
struct NetworkParams {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    NetworkParams& operator+=(const NetworkParams& other);
    NetworkParams& operator*=(double s);
    double squared_norm() const;
};

using NetworkGrads = NetworkParams;

// Weights uniform on +-sqrt(6 / fan_in), biases zero.
NetworkParams init_params(const NetworkSpec& spec, SeededRng& rng);

void validate_params(const NetworkSpec& spec, const NetworkParams& params);

// Post-activation values per layer for a batch, activations[0] being the
// input batch (rows = samples). When the output clamp is active,
// pre_clip holds the unclamped final layer so backward can mask.
struct ForwardCache {
    std::vector<Matrix> activations;
    Matrix pre_clip;
};

// Batched forward pass; x has one sample per row.
Matrix forward_batch(const NetworkSpec& spec, const NetworkParams& params,
                     const Matrix& x);
Matrix forward_batch(const NetworkSpec& spec, const NetworkParams& params,
                     const Matrix& x, ForwardCache& cache);

// Single-sample convenience wrapper.
Vector forward(const NetworkSpec& spec, const NetworkParams& params,
               const Vector& x);

// Exact gradient of sum_i <upstream_i, forward(x_i)> with respect to every
// parameter. upstream has one row per sample, matching the cached batch.
NetworkGrads backward_batch(const NetworkSpec& spec,
                            const NetworkParams& params,
                            const ForwardCache& cache, const Matrix& upstream);

NetworkGrads zero_grads(const NetworkSpec& spec);

// Elementwise Adam moment buffers for one tensor. The step counter lives
// with the caller so that several tensors updated together share one
// bias-correction schedule.
struct AdamBuf {
    Matrix m, v;

    static AdamBuf like(const Matrix& p) {
        return {Matrix::Zero(p.rows(), p.cols()),
                Matrix::Zero(p.rows(), p.cols())};
    }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update of param in place. step is the 1-based global step.
void adam_update(Matrix& param, const Matrix& grad, AdamBuf& buf, long step,
                 const AdamConfig& cfg);

// Adam over a whole network.
struct AdamState {
    std::vector<AdamBuf> weights;
    std::vector<AdamBuf> biases;
    long step = 0;
};

AdamState make_adam_state(const NetworkSpec& spec);

void adam_step(NetworkParams& params, const NetworkGrads& grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace dlf
