#pragma once

#include <optional>
#include <string>
#include <vector>

#include "llc/calibration.hpp"
#include "llc/net.hpp"

namespace llc {

/// Balanced rank-r factorization W ~ L R with L = U_r diag(sqrt(s)) and
/// R = diag(sqrt(s)) V_r^T from the truncated SVD.
struct FactorPair {
    Tensor L;      // [N x r]
    Tensor R;      // [r x M]
    std::size_t rank = 0;
    double residual_fro = 0.0;  // ||W - L R||_F
    Tensor delta;               // L R - W

    /// Eq. 10 rank cap: a factorization only shrinks the layer when
    /// r (N + M) < N M, i.e. r < N M / (N + M).
    static std::size_t rank_cap(std::size_t n, std::size_t m);
};

/// Truncated-SVD factorization at the requested rank; residual is the
/// Eckart-Young optimum sqrt(sum of trailing squared singular values).
FactorPair low_rank_factor(const Tensor& w, std::size_t r);

/// Inner product E[dl/dw_layer] . delta; a candidate passes the gradient
/// sign condition when this is strictly negative.
double sign_condition(const GradientProfile& profile, std::size_t layer,
                      const Tensor& delta);

struct RankCandidate {
    std::size_t rank = 0;
    double residual_fro = 0.0;
    double sign_value = 0.0;
    bool accepted = false;
    double measured_loss = 0.0;  // calibration loss, only valid when accepted
};

struct RankSearchTrace {
    std::size_t layer = 0;  // 0-based
    std::vector<RankCandidate> candidates;
    std::optional<std::size_t> chosen_rank;
};

struct LowRankOptions {
    double gamma = 1e-4;          // Frobenius residual tolerance
    bool gamma_relative = false;  // interpret gamma as gamma * ||W||_F
    std::size_t rank_max = 0;     // 0 means "up to the Eq. 10 cap"
    double early_stop_tol = 1e-9;
};

struct LayerDecomposition {
    FactorPair factors;
    RankSearchTrace trace;
};

/// Rank search over r = 1..rank_max: a candidate is accepted when its
/// residual is within gamma and either the sign condition holds or the
/// residual is below early_stop_tol (a numerically exact reconstruction
/// cannot carry a meaningful sign). Accepted candidates are ranked by
/// measured calibration loss, ties to the smaller rank; the search stops
/// early once a sub-tolerance residual is accepted. Returns nullopt in the
/// decomposition slot when no candidate qualifies.
std::optional<LayerDecomposition> decompose_layer(const Model& model, std::size_t layer,
                                                  const GradientProfile& profile,
                                                  const Dataset& calib,
                                                  const LowRankOptions& opts,
                                                  RankSearchTrace* trace_out = nullptr);

struct DecomposeResult {
    Model model;
    std::vector<RankSearchTrace> traces;  // one per original layer, in order
    /// 1-based original layer index -> chosen rank, for factored layers.
    std::vector<std::pair<std::size_t, std::size_t>> factored;
};

/// Applies decompose_layer to every eligible layer (2-D weight with
/// min(N, M) >= 8 that is not already a factor half). A factored layer is
/// replaced by two chained dense maps: the outer keeps bias and
/// activation, the inner is a pure linear map marked factor_part. Layers
/// where no rank both qualifies and reduces the element count are left
/// intact. All decisions are made against the original model and profile.
DecomposeResult decompose_model(const Model& model, const GradientProfile& profile,
                                const Dataset& calib, const LowRankOptions& opts);

/// Per-layer trace as JSON text (rank -> residual, sign, loss curves).
std::string traces_to_json(const std::vector<RankSearchTrace>& traces);

}  // namespace llc
