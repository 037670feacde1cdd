#pragma once

#include "llc/calibration.hpp"
#include "llc/net.hpp"

namespace llc {

enum class PerturbTarget { Weights, Activations };

/// Additive noise on one layer's weights (delta_i) or inputs (eps_i).
struct Perturbation {
    PerturbTarget target = PerturbTarget::Weights;
    std::size_t layer = 0;
    Tensor values;
    double magnitude = 0.0;  // inf-norm of values

    static Perturbation make(PerturbTarget target, std::size_t layer, Tensor values);
};

enum class Regime { FirstOrder, SecondOrder, HigherOrder };

struct RegimeReport {
    std::size_t layer = 0;
    PerturbTarget target = PerturbTarget::Weights;
    double magnitude = 0.0;
    Regime regime = Regime::FirstOrder;
    double gap_first = 0.0;
    double gap_second = 0.0;
};

/// First-order predicted loss delta: sum of E[dl/dh_{i+1}] . eps_i and
/// E[dl/dw_i] . delta_i over the given perturbations.
double predict_delta_first(const GradientProfile& profile,
                           const std::vector<Perturbation>& perts);

/// |actual mean-loss delta - predicted delta| for a weight perturbation.
/// Actual is measured by full re-inference with w_i + delta; order 2 adds
/// the Hessian quadratic term to the prediction.
double measure_gap_weights(const Model& model, const Dataset& data,
                           const GradientProfile& profile, const Perturbation& pert,
                           int order);
double measure_gap_weights(const Model& model, const Dataset& data,
                           const Perturbation& pert, int order);

/// Same for activation noise, injected additively at the layer input
/// during forward.
double measure_gap_activations(const Model& model, const Dataset& data,
                               const GradientProfile& profile, const Perturbation& pert,
                               int order);
double measure_gap_activations(const Model& model, const Dataset& data,
                               const Perturbation& pert, int order);

/// Noise-magnitude regime thresholds. Activations: <1e-3 first order,
/// [1e-3, 8e-2] second order, >8e-2 higher order. Weights: <8e-3,
/// [8e-3, 2e-1], >2e-1.
Regime classify_regime(PerturbTarget target, double magnitude);

/// Probability bound on the expected inner product having the wrong sign:
/// Var(e)Var(p)/(Ee Ep)^2 + Var(e)/Ee^2 + Var(p)/Ep^2, clamped to [0, 1].
/// Meaningful when the means have opposite signs.
double chebyshev_bound(double e_mean, double e_var, double p_mean, double p_var);

}  // namespace llc
