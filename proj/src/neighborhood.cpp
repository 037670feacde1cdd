#include "llc/neighborhood.hpp"

#include <algorithm>
#include <cmath>

namespace llc {

Perturbation Perturbation::make(PerturbTarget target, std::size_t layer, Tensor values) {
    Perturbation p;
    p.target = target;
    p.layer = layer;
    p.magnitude = values.max_abs();
    p.values = std::move(values);
    return p;
}

double predict_delta_first(const GradientProfile& profile,
                           const std::vector<Perturbation>& perts) {
    double acc = 0.0;
    for (const auto& p : perts) {
        if (p.layer >= profile.mean_weight_grad.size())
            throw Error("predict_delta_first: layer index out of range");
        const Tensor& g = p.target == PerturbTarget::Weights
                              ? profile.mean_weight_grad[p.layer]
                              : profile.mean_act_grad[p.layer];
        if (g.size() != p.values.size())
            throw Error("predict_delta_first: perturbation shape mismatch at layer " +
                        std::to_string(p.layer + 1));
        acc += dot(g, p.values);
    }
    return acc;
}

namespace {

std::vector<Tensor> zero_like_weights(const Model& model) {
    std::vector<Tensor> v(model.layers.size());
    return v;  // empty tensors mean "no perturbation on this layer"
}

std::vector<Tensor> zero_like_inputs(const Model& model) {
    std::vector<Tensor> v(model.layers.size());
    return v;
}

}  // namespace

double measure_gap_weights(const Model& model, const Dataset& data,
                           const GradientProfile& profile, const Perturbation& pert,
                           int order) {
    if (pert.target != PerturbTarget::Weights)
        throw Error("measure_gap_weights: perturbation must target weights");
    if (order != 1 && order != 2) throw Error("measure_gap_weights: order must be 1 or 2");
    Model m = model;
    Tensor& w = m.layers.at(pert.layer).weight;
    if (!w.same_shape(pert.values))
        throw Error("measure_gap_weights: shape mismatch at layer " +
                    std::to_string(pert.layer + 1));
    for (std::size_t k = 0; k < w.size(); ++k) w.data[k] += pert.values.data[k];
    double actual = mean_loss(m, data) - mean_loss(model, data);
    double predicted = dot(profile.mean_weight_grad[pert.layer], pert.values);
    if (order == 2) {
        auto delta = zero_like_weights(model);
        delta[pert.layer] = pert.values;
        predicted += second_order_term(model, data, zero_like_inputs(model), delta);
    }
    return std::abs(actual - predicted);
}

double measure_gap_weights(const Model& model, const Dataset& data,
                           const Perturbation& pert, int order) {
    return measure_gap_weights(model, data, calibrate(model, data), pert, order);
}

double measure_gap_activations(const Model& model, const Dataset& data,
                               const GradientProfile& profile, const Perturbation& pert,
                               int order) {
    if (pert.target != PerturbTarget::Activations)
        throw Error("measure_gap_activations: perturbation must target activations");
    if (order != 1 && order != 2)
        throw Error("measure_gap_activations: order must be 1 or 2");
    std::vector<Injection> inj{{pert.layer, pert.values}};
    double actual = mean_loss(model, data, &inj) - mean_loss(model, data);
    double predicted = dot(profile.mean_act_grad[pert.layer], pert.values);
    if (order == 2) {
        auto eps = zero_like_inputs(model);
        eps[pert.layer] = pert.values;
        predicted += second_order_term(model, data, eps, zero_like_weights(model));
    }
    return std::abs(actual - predicted);
}

double measure_gap_activations(const Model& model, const Dataset& data,
                               const Perturbation& pert, int order) {
    return measure_gap_activations(model, data, calibrate(model, data), pert, order);
}

Regime classify_regime(PerturbTarget target, double magnitude) {
    if (magnitude < 0.0) throw Error("classify_regime: negative magnitude");
    double lo = target == PerturbTarget::Activations ? 1e-3 : 8e-3;
    double hi = target == PerturbTarget::Activations ? 8e-2 : 2e-1;
    if (magnitude < lo) return Regime::FirstOrder;
    if (magnitude <= hi) return Regime::SecondOrder;
    return Regime::HigherOrder;
}

double chebyshev_bound(double e_mean, double e_var, double p_mean, double p_var) {
    if (e_var < 0.0 || p_var < 0.0) throw Error("chebyshev_bound: negative variance");
    if (e_mean == 0.0 || p_mean == 0.0)
        throw Error("chebyshev_bound: undefined for zero mean");
    double ep2 = e_mean * e_mean * p_mean * p_mean;
    double b = e_var * p_var / ep2 + e_var / (e_mean * e_mean) + p_var / (p_mean * p_mean);
    return std::clamp(b, 0.0, 1.0);
}

}  // namespace llc
