#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "llc/grid.hpp"
#include "llc/tensor.hpp"

namespace llc {

enum class Activation { ReLU, Identity };

/// Static input quantization attached to a layer by the quantize pipeline:
/// the layer's input is snapped to this grid on the fly during forward.
struct InputQuant {
    double scale = 0.0;
    int bits = 0;
    RoundDir dir = RoundDir::Negative;
};

/// Fully connected layer computing act(W x + b). Weight is [out x in].
struct DenseLayer {
    Tensor weight;
    Tensor bias;
    Activation activation = Activation::Identity;
    /// True for either half of a factored (L, R) pair; such layers are
    /// skipped by further decomposition.
    bool factor_part = false;
    std::optional<InputQuant> in_quant;

    std::size_t out_dim() const { return weight.rows(); }
    std::size_t in_dim() const { return weight.cols(); }
    void validate(std::size_t index) const;
};

/// Ordered dense layers with a cross-entropy-with-softmax head.
/// layers[0] is the output-side layer (paper-style indexing: layer 1 is
/// outermost, and the input sample plays the role of h_{n+1}).
struct Model {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.back().in_dim(); }
    std::size_t num_classes() const { return layers.front().out_dim(); }
    /// Total weight-matrix element count (biases excluded; they are neither
    /// quantized nor factored).
    std::size_t weight_count() const;
    void validate() const;
};

struct Dataset {
    Tensor inputs;               // [m x d]
    std::vector<int> labels;     // class ids, length m
    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return inputs.cols(); }
    void validate(std::size_t num_classes) const;
    /// First ceil(frac*m) samples and the remainder, in order.
    std::pair<Dataset, Dataset> split(double frac) const;
    Dataset concat(const Dataset& other) const;
};

/// Additive perturbation injected into the input of one layer during
/// forward (broadcast across samples). Injecting at the innermost layer
/// perturbs the sample itself.
struct Injection {
    std::size_t layer = 0;
    Tensor values;  // [in_dim(layer)]
};

struct ForwardResult {
    Tensor logits;                      // [m x classes]
    std::vector<Tensor> layer_inputs;   // layer_inputs[i] = h_{i+1}, [m x in_i]
    std::vector<Tensor> layer_outputs;  // post-activation output of each layer
};

/// Batched forward pass. `input` is [m x d] (or [d] for a single sample).
/// Input quantization attached to layers is applied unless disabled.
ForwardResult forward(const Model& model, const Tensor& input,
                      const std::vector<Injection>* injections = nullptr,
                      bool apply_input_quant = true);

struct LossStats {
    double mean_loss = 0.0;
    double top1 = 0.0;
};

LossStats loss_and_accuracy(const Model& model, const Dataset& data);
double mean_loss(const Model& model, const Dataset& data,
                 const std::vector<Injection>* injections = nullptr);

/// Per-layer gradients, mean over the batch.
struct Gradients {
    std::vector<Tensor> weight;      // shape of each layer weight
    std::vector<Tensor> bias;        // shape of each layer bias
    std::vector<Tensor> activation;  // [in_i], mean dl/dh_{i+1}
};

/// Mean gradients of the cross-entropy loss over a batch.
Gradients backward(const Model& model, const Tensor& inputs,
                   const std::vector<int>& labels,
                   const std::vector<Injection>* injections = nullptr);

/// Single-sample convenience overload.
Gradients backward(const Model& model, const Tensor& input, int label);

/// Mini-batch SGD used only to produce test fixtures. Deterministic given
/// the seed; 0 epochs returns the model unchanged bitwise.
Model train_fixture(Model model, const Dataset& data, int epochs, double lr,
                    std::uint64_t seed, std::size_t batch = 64);

/// Random dense model with He-style init (hand-rolled RNG, reproducible).
/// dims = {d_in, h1, ..., classes}, given input-side first.
Model make_mlp(const std::vector<std::size_t>& dims,
               const std::vector<Activation>& acts, std::uint64_t seed,
               const std::vector<double>* init_scales = nullptr);

}  // namespace llc
