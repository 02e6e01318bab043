#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sage/errors.hpp"

namespace sage {

enum class Activation { relu, tanh };
enum class Loss { softmax_cross_entropy, mse };

// Dense MLP architecture. layer_dims = [input, hidden..., output].
// Hidden layers use `activation`; the output layer is always linear
// (logits for cross-entropy, raw values for mse).
struct NetworkSpec {
    std::vector<int> layer_dims;
    Activation activation = Activation::relu;
    Loss loss = Loss::softmax_cross_entropy;
};

void validate_spec(const NetworkSpec& spec);

// Flat parameter layout, layer-major: for each layer l, the weight
// matrix W_l (fan_out rows x fan_in cols, row-major) followed by the
// bias vector (fan_out). Gradients use the identical layout.
std::size_t parameter_count(const NetworkSpec& spec);

// Offset of layer l's weight block / bias block in the flat layout.
std::size_t weight_offset(const NetworkSpec& spec, std::size_t layer);
std::size_t bias_offset(const NetworkSpec& spec, std::size_t layer);

// One minibatch. inputs is row-major n_samples x input_dim.
// Classification targets live in `labels`; regression targets in
// `targets` (row-major n_samples x target_dim).
struct Batch {
    std::size_t n_samples = 0;
    std::size_t input_dim = 0;
    std::vector<double> inputs;
    std::vector<int> labels;
    std::size_t target_dim = 0;
    std::vector<double> targets;
};

// He-uniform weights for relu, Glorot-uniform for tanh, zero biases.
std::vector<double> init_network(const NetworkSpec& spec, std::uint64_t seed);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// Mean loss over the batch and its exact analytic gradient.
LossGrad loss_and_grad(const NetworkSpec& spec,
                       const std::vector<double>& params, const Batch& batch);

double loss_only(const NetworkSpec& spec, const std::vector<double>& params,
                 const Batch& batch);

// Central finite differences, entry j = (L(θ+he_j) - L(θ-he_j)) / 2h.
std::vector<double> finite_difference_grad(const NetworkSpec& spec,
                                           const std::vector<double>& params,
                                           const Batch& batch,
                                           double h = 1e-6);

// Raw network outputs, row-major n x output_dim.
std::vector<double> forward(const NetworkSpec& spec,
                            const std::vector<double>& params,
                            const std::vector<double>& inputs, std::size_t n);

// Argmax over logits; ties broken by lowest class index.
std::vector<int> predict_labels(const NetworkSpec& spec,
                                const std::vector<double>& params,
                                const std::vector<double>& inputs,
                                std::size_t n);

// Binary checkpoint: header (dims, activation, loss, seed, layout
// version tag) followed by the flat parameter array.
void save_checkpoint(const std::string& path, const NetworkSpec& spec,
                     std::uint64_t seed, const std::vector<double>& params);

struct Checkpoint {
    NetworkSpec spec;
    std::uint64_t seed = 0;
    std::vector<double> params;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace sage
