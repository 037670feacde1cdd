#pragma once

#include <functional>
#include <vector>

#include "llc/net.hpp"

namespace llc {

/// Per-layer gradient statistics collected over a calibration set without
/// touching the weights.
struct GradientProfile {
    std::vector<Tensor> mean_weight_grad;  // E dl/dw_i, one per layer
    std::vector<Tensor> mean_act_grad;     // E dl/dh_{i+1}, one per layer
    /// mean_act_grad . 1, the k*Ep estimator for each layer.
    std::vector<double> grad_dot_one;
    /// mean_weight_grad . 1, the weight-side analogue (drives the weight
    /// rounding direction).
    std::vector<double> weight_grad_dot_one;
    std::size_t sample_count = 0;
};

/// Averages per-sample gradients over the dataset. Accumulation is chunked
/// and pairwise-combined so parallel and serial runs agree to 1e-12.
GradientProfile calibrate(const Model& model, const Dataset& data);

/// Finite-difference Hessian-vector product over an arbitrary gradient
/// callable: (grad(w + h v) - grad(w - h v)) / (2 h).
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;
std::vector<double> hvp_fd(const GradFn& grad, const std::vector<double>& w,
                           const std::vector<double>& v, double h);

/// Hessian-vector product of the mean loss with respect to the weights,
/// by central differences of analytic gradients; h = 1e-4 * (1 + |w|_inf).
std::vector<Tensor> hessian_vector_product(const Model& model, const Dataset& data,
                                           const std::vector<Tensor>& direction);

/// Second-order term 0.5 (eps, delta)^T H (eps, delta) of the loss
/// expansion, with eps perturbing layer inputs and delta perturbing
/// weights. Either list may contain zero tensors.
double second_order_term(const Model& model, const Dataset& data,
                         const std::vector<Tensor>& eps,
                         const std::vector<Tensor>& delta);

}  // namespace llc
