#pragma once

#include <string>
#include <vector>

#include "llc/calibration.hpp"
#include "llc/net.hpp"
#include "llc/rng.hpp"

namespace llc {

/// Quantization level: a bit width in {2, 4, 8, 16}, or full precision.
struct QuantLevel {
    int bits = 0;  // 0 is the full-precision sentinel

    bool full_precision() const { return bits == 0; }
    static QuantLevel fp() { return {}; }
    static QuantLevel of(int bits);
    std::string name() const { return full_precision() ? "fp" : std::to_string(bits); }
    bool operator==(const QuantLevel&) const = default;
};

/// Default search levels: full precision, 16, 8, 4 bit. 2-bit is supported
/// but off by default.
std::vector<QuantLevel> default_levels();
std::vector<QuantLevel> parse_levels(const std::string& csv);

enum class ScaleMode { AbsMax, Aciq };

/// Optimal clipping multiplier for a unit Laplace at the given bit width
/// (symmetric grid with 2^(b-1)-1 positive levels). Pinned from a
/// numerical minimization of the expected squared quantization error.
double aciq_alpha(int bits);

/// Symmetric uniform grid step: clip / (2^(bits-1) - 1). AbsMax clips at
/// max|t|; Aciq clips at alpha(bits) * b, with b the maximum-likelihood
/// Laplace scale mean|t - median(t)|. Returns 0 for an all-zero tensor
/// (callers fall back to full precision).
double compute_scale(const Tensor& t, int bits, ScaleMode mode = ScaleMode::Aciq);

struct RoundResult {
    Tensor q;    // values snapped to the grid, clamped to representable range
    Tensor eps;  // q - t
};

/// One-sided rounding onto the grid {m*scale}. Positive gives elementwise
/// error in [0, scale), Negative in (-scale, 0], forcing the error mean's
/// sign. scale == 0 is a no-op (eps = 0).
RoundResult directional_round(const Tensor& t, double scale, RoundDir dir, int bits);

/// Stochastic variant: snaps up with probability equal to the complement
/// of the fractional grid position, so the error sign holds only in
/// distribution. Kept behind this separate entry point.
RoundResult stochastic_directional_round(const Tensor& t, double scale, RoundDir dir,
                                         int bits, Rng& rng);

/// Rounding direction for a layer's activations: Negative when the
/// grad-dot-one estimator is positive or zero, Positive otherwise, so the
/// expected error opposes the mean gradient sign.
RoundDir choose_direction(const GradientProfile& profile, std::size_t layer);
/// Same rule driven by the weight-side gradient sum, used for weights.
RoundDir choose_weight_direction(const GradientProfile& profile, std::size_t layer);

struct LayerQuantPlan {
    std::size_t layer = 0;
    QuantLevel level;
    double scale_weight = 0.0;
    double scale_input = 0.0;
    RoundDir direction = RoundDir::Negative;         // activation side
    RoundDir weight_direction = RoundDir::Negative;  // weight side
};

/// P[i][j]: predicted loss impact of quantizing layer i at level j;
/// W[i][j]: serialized weight bytes at that level. plans[i][j] carries the
/// scales and directions needed to apply the choice.
struct CostMatrices {
    std::vector<QuantLevel> levels;
    std::vector<std::vector<double>> P;
    std::vector<std::vector<std::size_t>> W;
    std::vector<std::vector<LayerQuantPlan>> plans;
    std::size_t layer_count() const { return P.size(); }
    std::size_t level_count() const { return levels.size(); }
};

/// Serialized bytes of a weight tensor at a level: ceil(count*bits/8),
/// or 8*count at full precision.
std::size_t weight_bytes(std::size_t count, QuantLevel level);

/// Builds the cost and weight matrices by probing each (layer, level):
/// activations and weights are quantized with the chosen directions, the
/// loss sensitivity is probed by re-inference, and the weight term is
/// added only when the measured weight fluctuation reaches error_max.
CostMatrices build_cost_matrices(const Model& model, const Dataset& calib,
                                 const GradientProfile& profile,
                                 const std::vector<QuantLevel>& levels, double error_max,
                                 ScaleMode mode = ScaleMode::Aciq);

/// Applies one chosen plan per layer: weights are snapped in place and
/// non-full-precision layers get static input quantization.
Model apply_quant_plan(const Model& model, const std::vector<LayerQuantPlan>& plan);

/// CSV dumps (rows = layers, cols = levels) for inspection.
void dump_cost_csv(const CostMatrices& cm, const std::string& p_path,
                   const std::string& w_path);

}  // namespace llc
