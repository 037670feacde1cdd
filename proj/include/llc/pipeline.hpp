#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llc/allocator.hpp"
#include "llc/data_io.hpp"
#include "llc/lowrank.hpp"
#include "llc/neighborhood.hpp"
#include "llc/quant.hpp"

namespace llc {

/// Shared knobs for the pipeline entry points. Exactly one of
/// {capacity_bytes, drop_rate} must be set for quantization; the byte
/// budget is inclusive (total serialized weight bytes <= budget).
struct RunConfig {
    double calib_frac = 0.2;           // in (0, 1)
    std::size_t capacity_bytes = 0;    // 0 = unset
    double drop_rate = -1.0;           // < 0 = unset
    std::vector<QuantLevel> levels = default_levels();
    double error_max = 1e-4;
    ScaleMode scale_mode = ScaleMode::Aciq;
    LowRankOptions lowrank;
    std::uint64_t seed = 0;
};

struct QuantizeResult {
    Model model;
    Report report;
    std::vector<LayerQuantPlan> plan;
};

/// Calibrate, build cost matrices, solve the grouped knapsack under the
/// byte budget, apply the plan, and evaluate original vs compressed on
/// both splits. The curve holds one uniform-level evaluation per level.
QuantizeResult run_quantize(const Model& model, const Dataset& data,
                            const RunConfig& cfg);

struct DecomposeRunResult {
    Model model;
    Report report;
    std::vector<RankSearchTrace> traces;
};

DecomposeRunResult run_decompose(const Model& model, const Dataset& data,
                                 const RunConfig& cfg);

struct BoundsRow {
    PerturbTarget target = PerturbTarget::Activations;
    double magnitude = 0.0;
    double gap_order1 = 0.0;  // layer-averaged Eq. 6 / Eq. 5 gap
    double gap_order2 = 0.0;
    Regime regime = Regime::FirstOrder;
};

/// Sweeps noise magnitudes {1e-4, 1e-3, 1e-2, 8e-2, 1e-1} over both
/// targets with seeded uniform noise, averaging the measured gap across
/// layers. Gaps are computed on the calibration split.
std::vector<BoundsRow> run_bounds(const Model& model, const Dataset& data,
                                  const RunConfig& cfg);
std::string bounds_to_json(const std::vector<BoundsRow>& rows);
void bounds_to_csv(const std::vector<BoundsRow>& rows, const std::string& path);

struct VerifyResult {
    bool pass = false;
    double original_loss = 0.0;
    double compressed_loss = 0.0;
    double delta = 0.0;  // compressed - original
};

/// Losslessness certificate on the given dataset: PASS iff the compressed
/// model's mean loss does not exceed the original's by more than tol_abs
/// (default strict). Models must agree on input dim and class count.
VerifyResult run_verify(const Model& original, const Model& compressed,
                        const Dataset& data, double tol_abs = 0.0);

/// Serialized size of all weight matrices at full precision.
std::size_t full_precision_bytes(const Model& model);

}  // namespace llc
