#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "graspcount/rng.hpp"

// Minimal neural-network engine: batched forward/backward over a fixed layer
// vocabulary, Adam, and a seeded mini-batch trainer. Float64 throughout.

namespace graspcount::nn {

/// Row-major batch: one sample per row.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    static Matrix from_row(std::span<const double> v);
};

/// Per-sample tensor shape, stored height x width x channels (HWC).
struct Shape {
    int h = 1;
    int w = 1;
    int c = 1;

    std::size_t size() const { return static_cast<std::size_t>(h) * w * c; }
    bool operator==(const Shape&) const = default;
    static Shape vector(int n) { return {1, 1, n}; }
};

enum class LayerKind {
    dense,
    conv2d,
    conv_transpose2d,
    maxpool2x2,
    upsample2x2,
    dropout,
    relu,
    softmax,
    flatten,
    reshape,
};

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int units = 0;       // dense width or filter count
    double rate = 0.0;   // dropout rate
    Shape target{};      // reshape target

    static LayerSpec dense(int units) { return {LayerKind::dense, units}; }
    static LayerSpec conv2d(int filters) { return {LayerKind::conv2d, filters}; }
    static LayerSpec conv_transpose2d(int filters) { return {LayerKind::conv_transpose2d, filters}; }
    static LayerSpec maxpool2x2() { return {LayerKind::maxpool2x2}; }
    static LayerSpec upsample2x2() { return {LayerKind::upsample2x2}; }
    static LayerSpec dropout(double rate) { return {LayerKind::dropout, 0, rate}; }
    static LayerSpec relu() { return {LayerKind::relu}; }
    static LayerSpec softmax() { return {LayerKind::softmax}; }
    static LayerSpec flatten() { return {LayerKind::flatten}; }
    static LayerSpec reshape(Shape s) { return {LayerKind::reshape, 0, 0.0, s}; }

    bool operator==(const LayerSpec&) const = default;
};

/// One layer with resolved shapes, parameters and Adam moments.
///
/// Kernel layouts (3x3, stride 1, same padding):
///   dense             weight[out][in]
///   conv2d            weight[out_ch][kh][kw][in_ch]
///   conv_transpose2d  weight[in_ch][kh][kw][out_ch]
/// so a conv2d and a conv_transpose2d sharing a weight buffer are adjoint.
struct Layer {
    LayerSpec spec;
    Shape in;
    Shape out;
    std::vector<double> weight;
    std::vector<double> bias;
    std::vector<double> weight_m, weight_v, bias_m, bias_v;

    bool has_parameters() const { return !weight.empty() || !bias.empty(); }
};

class Model {
public:
    Model() = default;
    /// Resolves shapes layer by layer; throws ShapeMismatch when a layer cannot
    /// accept its input. Parameters start at zero; call init() to randomize.
    Model(Shape input, std::vector<LayerSpec> specs);

    /// Glorot-uniform weights, zero biases, fresh optimizer state.
    void init(std::uint64_t seed);

    const Shape& input_shape() const { return input_; }
    Shape output_shape() const { return layers_.empty() ? input_ : layers_.back().out; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<LayerSpec> specs() const;
    std::size_t parameter_count() const;
    std::uint64_t adam_step_count() const { return adam_steps_; }

    void reset_optimizer();
    /// True when every parameter is finite.
    bool finite() const;

    /// Same layer specs and input shape.
    bool same_architecture(const Model& other) const;
    /// Bitwise equality of parameters (and architecture).
    bool same_parameters(const Model& other) const;

    std::string to_json() const;
    static Model from_json(const std::string& text);

    /// Increments and returns the Adam step counter.
    std::uint64_t advance_optimizer_step() { return ++adam_steps_; }

private:
    Shape input_{};
    std::vector<Layer> layers_;
    std::uint64_t adam_steps_ = 0;
};

/// Activations retained for backpropagation.
struct ForwardPass {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool training = false;
    std::vector<Matrix> activations;         // activations[k] is the input of layer begin+k
    std::vector<std::vector<double>> aux;    // im2col patches, pool argmax, dropout masks
    const Matrix& output() const { return activations.back(); }
};

/// Runs layers [begin, end). Dropout draws masks from `rng` when training;
/// rng may be null only when training is false.
ForwardPass forward_pass(const Model& model, const Matrix& input, bool training, Rng* rng = nullptr,
                         std::size_t begin = 0, std::size_t end = SIZE_MAX);

/// Inference through layers [begin, end) with dropout disabled.
Matrix forward(const Model& model, const Matrix& input, std::size_t begin = 0, std::size_t end = SIZE_MAX);

/// Training-mode forward with a caller-owned generator.
Matrix forward(const Model& model, const Matrix& input, bool training, Rng& rng);

enum class Loss { mse, categorical_cross_entropy };

std::string to_string(Loss loss);

/// MSE: mean over all elements. Cross-entropy: mean over rows of -sum t*log p.
double compute_loss(const Matrix& output, const Matrix& target, Loss loss);

struct Gradients {
    std::vector<std::vector<double>> weight;
    std::vector<std::vector<double>> bias;
};

/// Gradients of compute_loss(pass.output(), target, loss) for every parameter
/// of the layers covered by `pass`; untouched layers get empty tensors. When
/// the last layer is softmax and the loss is cross-entropy the two are
/// differentiated together.
Gradients backward(const Model& model, const ForwardPass& pass, const Matrix& target, Loss loss);

/// Gradient of the loss with respect to the network input.
Matrix input_gradient(const Model& model, const ForwardPass& pass, const Matrix& target, Loss loss);

struct TrainConfig {
    double learning_rate = 0.001;
    int epochs = 0;
    std::size_t batch_size = 500;
    Loss loss = Loss::mse;
    std::uint64_t seed = 0;
    bool oversample = false;

    void validate() const;
};

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8). Throws NonFiniteGradient before
/// touching any parameter if a gradient entry is not finite.
void adam_step(Model& model, const Gradients& grads, const TrainConfig& config);

struct TrainSet {
    Matrix inputs;
    Matrix targets;
    std::vector<int> labels;  // class per row; required when oversampling
};

/// Epoch order. Without oversampling: a seeded permutation of all rows. With
/// it: every present class receives an equal share of the epoch (remainder to
/// the lowest class ids), rows drawn with replacement within the class, then
/// shuffled.
std::vector<std::size_t> epoch_order(std::span<const int> labels, std::size_t n, bool oversample, Rng& rng);

/// Mini-batch training; returns the mean training loss of each epoch.
std::vector<double> train(Model& model, const TrainSet& data, const TrainConfig& config);

}  // namespace graspcount::nn
