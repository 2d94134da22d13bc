// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "csiloc/binary_io.hpp"
#include "csiloc/rng.hpp"

namespace csiloc::nn {

/// Row-major real tensor. Batched tensors carry the batch size as their leading dimension.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::vector<std::size_t> s, std::vector<double> v);

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

std::size_t shape_size(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

enum class LayerKind : std::uint8_t {
    fully_connected = 0, // affine map; pair with relu
    conv2d = 1,          // square kernel, stride 1, zero padding
    max_pool = 2,        // 2x2 window, stride 2, odd trailing row/column dropped
    relu = 3,
    dropout = 4,
    linear_output = 5,   // affine map with no nonlinearity (regression head)
    softmax_output = 6,  // softmax over the last dimension
};

std::string to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
    std::size_t padding = 1;
    double rate = 0.0;

    static LayerSpec fully_connected(std::size_t in, std::size_t out);
    static LayerSpec linear_output(std::size_t in, std::size_t out);
    static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel = 3);
    static LayerSpec max_pool();
    static LayerSpec relu();
    static LayerSpec dropout(double rate);
    static LayerSpec softmax_output();

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
    LayerSpec spec;
    std::vector<std::size_t> in_shape;  // per sample
    std::vector<std::size_t> out_shape; // per sample
    std::vector<double> weights;        // fc: [out x in]; conv: [out_ch x in_ch x k x k]
    std::vector<double> bias;
};

enum class Mode { train, eval };

/// Activations kept by a training forward pass so the backward pass can run.
struct ForwardTrace {
    std::vector<Tensor> inputs;                    // input of each executed layer
    std::vector<std::vector<double>> dropout_scale; // per layer; empty unless dropout
    Tensor output;
};

/// Parameter gradients, laid out like the network's layers.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;
};

class Network {
public:
    Network() = default;
    /// Validates the stack against `input_shape` and records per-layer shapes.
    /// Parameters are zero until initialize() or load.
    Network(std::vector<std::size_t> input_shape, std::vector<LayerSpec> specs);

    /// He-uniform weights for layers feeding a ReLU, Xavier-uniform for the others; zero biases.
    void initialize(std::uint64_t seed);

    const std::vector<std::size_t>& input_shape() const { return input_shape_; }
    std::vector<std::size_t> output_shape() const;
    std::size_t parameter_count() const;
    std::size_t layer_count() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return layers_[i]; }
    Layer& layer(std::size_t i) { return layers_[i]; }

    /// Accepts either one sample (shape == input_shape) or a batch ([B] + input_shape).
    /// Eval mode is read-only; train mode needs `rng` for dropout.
    Tensor forward(const Tensor& input, Mode mode = Mode::eval, Rng* rng = nullptr) const;

    /// Batched forward over layers [0, layer_end), keeping what backward() needs.
    void forward_traced(const Tensor& batch, Mode mode, Rng* rng, std::size_t layer_end, ForwardTrace& trace) const;

    /// Backpropagates `grad_output` through the layers recorded in `trace`. Parameter gradients are
    /// accumulated into `grads`; the gradient with respect to the batch input is returned.
    Tensor backward(const ForwardTrace& trace, const Tensor& grad_output, Gradients& grads) const;

    Gradients zero_gradients() const;

    void save(ByteWriter& w) const;
    static Network load(ByteReader& r);

    friend bool operator==(const Network& a, const Network& b);

private:
    std::vector<std::size_t> input_shape_;
    std::vector<Layer> layers_;
};

// --- losses --------------------------------------------------------------------------------

struct LossResult {
    double loss = 0.0;
    Tensor gradient; // d loss / d input, same shape as the predictions/logits
};

/// Mean over the batch of the Euclidean distance between rows of `predictions` and `labels`
/// ([B x D]). The subgradient at a zero residual is the zero vector.
LossResult mde_loss(const Tensor& predictions, const Tensor& labels);

/// Softmax + mean negative log-likelihood over rows of `logits` ([B x K]).
LossResult cross_entropy_loss(const Tensor& logits, std::span<const std::size_t> class_index);

/// Row-wise softmax of a [B x K] (or [K]) tensor.
Tensor softmax(const Tensor& logits);

// --- training ------------------------------------------------------------------------------

enum class Optimizer { sgd_momentum, adam };
enum class LossKind { mde, cross_entropy, augmented_mde };

std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
    Optimizer optimizer = Optimizer::adam;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    bool dropout_active = true;
    double momentum = 0.9;     // sgd_momentum only
    double alpha = 0.0;        // augmented_mde reporting coefficient
    void validate() const;
};

/// Row-major samples with either regression targets or class indices.
struct TrainingSet {
    std::vector<std::size_t> sample_shape;
    std::vector<double> inputs;             // count x shape_size(sample_shape)
    std::size_t target_dim = 0;
    std::vector<double> targets;            // count x target_dim (regression)
    std::vector<std::size_t> classes;       // count (classification)
    std::vector<double> perturbation_norms; // count (augmented_mde), empty means all zero

    std::size_t count() const;
};

struct TrainResult {
    std::vector<double> epoch_loss; // mean mini-batch loss per epoch
};

/// Mini-batch training, reshuffled each epoch from `config.seed`. With LossKind::cross_entropy and a
/// trailing softmax_output layer, the loss is applied to the logits feeding that layer.
/// Throws TrainingError on a non-finite loss.
TrainResult train(Network& network, const TrainingSet& data, LossKind loss, const TrainConfig& config);

// --- checkpoints ---------------------------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// "NNM1" | u16 version | network (see Network::save).
void save_network(const Network& network, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

} // namespace csiloc::nn
