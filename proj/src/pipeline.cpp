#include "llc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "llc/rng.hpp"

namespace llc {

std::size_t full_precision_bytes(const Model& model) {
    std::size_t total = 0;
    for (const auto& l : model.layers) total += l.weight.size() * 8;
    return total;
}

namespace {

void fill_eval(Report& r, const Model& original, const Model& compressed,
               const Dataset& calib, const Dataset& holdout) {
    LossStats oc = loss_and_accuracy(original, calib);
    LossStats oh = loss_and_accuracy(original, holdout);
    LossStats cc = loss_and_accuracy(compressed, calib);
    LossStats ch = loss_and_accuracy(compressed, holdout);
    r.original_loss_calib = oc.mean_loss;
    r.original_top1_calib = oc.top1;
    r.original_loss_holdout = oh.mean_loss;
    r.original_top1_holdout = oh.top1;
    r.compressed_loss_calib = cc.mean_loss;
    r.compressed_top1_calib = cc.top1;
    r.compressed_loss_holdout = ch.mean_loss;
    r.compressed_top1_holdout = ch.top1;
    r.drop_rate = r.original_bytes == 0
                      ? 0.0
                      : 1.0 - static_cast<double>(r.compressed_bytes) /
                                  static_cast<double>(r.original_bytes);
}

std::size_t gcd_of_W(const std::vector<std::vector<std::size_t>>& W) {
    std::size_t g = 0;
    for (const auto& row : W)
        for (std::size_t w : row) g = std::gcd(g, w);
    return g == 0 ? 1 : g;
}

void check_split(const RunConfig& cfg) {
    if (!(cfg.calib_frac > 0.0 && cfg.calib_frac < 1.0))
        throw Error("run config: calibration fraction must be in (0, 1)");
}

}  // namespace

QuantizeResult run_quantize(const Model& model, const Dataset& data,
                            const RunConfig& cfg) {
    check_split(cfg);
    const bool has_cap = cfg.capacity_bytes > 0, has_drop = cfg.drop_rate >= 0.0;
    if (has_cap == has_drop)
        throw Error("run config: exactly one of capacity or drop-rate must be set");

    auto [calib, holdout] = data.split(cfg.calib_frac);
    GradientProfile profile = calibrate(model, calib);
    CostMatrices cm = build_cost_matrices(model, calib, profile, cfg.levels,
                                          cfg.error_max, cfg.scale_mode);

    const std::size_t original_bytes = full_precision_bytes(model);
    std::size_t budget = cfg.capacity_bytes;
    if (has_drop) {
        if (cfg.drop_rate >= 1.0) throw Error("run config: drop-rate must be < 1");
        budget = static_cast<std::size_t>(
            std::floor((1.0 - cfg.drop_rate) * static_cast<double>(original_bytes)));
    }

    AllocationProblem prob;
    prob.P = cm.P;
    prob.W = cm.W;
    // the user-facing budget is inclusive; Eq. 9's strict bound gets budget+1
    prob.capacity = budget + 1;
    prob.granularity = gcd_of_W(cm.W);
    Allocation alloc = solve_group_knapsack(prob);

    QuantizeResult res;
    res.plan.reserve(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i)
        res.plan.push_back(cm.plans[i][alloc.choice[i]]);
    res.model = apply_quant_plan(model, res.plan);

    Report& r = res.report;
    r.original_bytes = original_bytes;
    r.compressed_bytes = alloc.total_bytes;
    for (std::size_t i = 0; i < res.plan.size(); ++i) {
        LayerDecision d;
        d.layer = i + 1;
        d.bytes = cm.W[i][alloc.choice[i]];
        if (res.plan[i].level.full_precision()) {
            d.action = "full_precision";
        } else {
            d.action = "quantize";
            d.bits = res.plan[i].level.bits;
        }
        r.decisions.push_back(d);
    }
    fill_eval(r, model, res.model, calib, holdout);

    // uniform-level reference curve on the calibration split
    for (std::size_t j = 0; j < cfg.levels.size(); ++j) {
        std::vector<LayerQuantPlan> uniform;
        std::size_t bytes = 0;
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            uniform.push_back(cm.plans[i][j]);
            bytes += cm.W[i][j];
        }
        Model u = apply_quant_plan(model, uniform);
        LossStats s = loss_and_accuracy(u, calib);
        CurvePoint pt;
        pt.level = cfg.levels[j].full_precision() ? 64.0
                                                  : static_cast<double>(cfg.levels[j].bits);
        pt.loss = s.mean_loss;
        pt.top1 = s.top1;
        pt.bytes = bytes;
        r.curve.push_back(pt);
    }
    return res;
}

DecomposeRunResult run_decompose(const Model& model, const Dataset& data,
                                 const RunConfig& cfg) {
    check_split(cfg);
    auto [calib, holdout] = data.split(cfg.calib_frac);
    GradientProfile profile = calibrate(model, calib);
    DecomposeResult dec = decompose_model(model, profile, calib, cfg.lowrank);

    DecomposeRunResult res;
    res.model = std::move(dec.model);
    res.traces = std::move(dec.traces);

    Report& r = res.report;
    r.original_bytes = full_precision_bytes(model);
    r.compressed_bytes = full_precision_bytes(res.model);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        LayerDecision d;
        d.layer = i + 1;
        if (res.traces[i].chosen_rank) {
            const std::size_t rk = *res.traces[i].chosen_rank;
            d.action = "factor";
            d.rank = rk;
            d.bytes = 8 * rk * (model.layers[i].out_dim() + model.layers[i].in_dim());
        } else {
            d.action = "none";
            d.bytes = 8 * model.layers[i].weight.size();
        }
        r.decisions.push_back(d);
    }
    fill_eval(r, model, res.model, calib, holdout);
    return res;
}

std::vector<BoundsRow> run_bounds(const Model& model, const Dataset& data,
                                  const RunConfig& cfg) {
    check_split(cfg);
    auto [calib, holdout] = data.split(cfg.calib_frac);
    (void)holdout;
    GradientProfile profile = calibrate(model, calib);
    const double magnitudes[] = {1e-4, 1e-3, 1e-2, 8e-2, 1e-1};
    const PerturbTarget targets[] = {PerturbTarget::Activations, PerturbTarget::Weights};

    Rng rng(cfg.seed ^ 0x626f756e647321ULL);
    std::vector<BoundsRow> rows;
    for (PerturbTarget target : targets) {
        for (double mag : magnitudes) {
            BoundsRow row;
            row.target = target;
            row.magnitude = mag;
            row.regime = classify_regime(target, mag);
            double g1 = 0.0, g2 = 0.0;
            const std::size_t n = model.layers.size();
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<std::size_t> shape =
                    target == PerturbTarget::Weights
                        ? model.layers[i].weight.shape
                        : std::vector<std::size_t>{model.layers[i].in_dim()};
                Tensor noise(shape);
                for (double& v : noise.data) v = mag * (2.0 * rng.uniform() - 1.0);
                Perturbation p = Perturbation::make(target, i, std::move(noise));
                if (target == PerturbTarget::Weights) {
                    g1 += measure_gap_weights(model, calib, profile, p, 1);
                    g2 += measure_gap_weights(model, calib, profile, p, 2);
                } else {
                    g1 += measure_gap_activations(model, calib, profile, p, 1);
                    g2 += measure_gap_activations(model, calib, profile, p, 2);
                }
            }
            row.gap_order1 = g1 / static_cast<double>(n);
            row.gap_order2 = g2 / static_cast<double>(n);
            rows.push_back(row);
        }
    }
    return rows;
}

namespace {

const char* target_name(PerturbTarget t) {
    return t == PerturbTarget::Weights ? "weights" : "activations";
}

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::FirstOrder: return "first_order";
        case Regime::SecondOrder: return "second_order";
        default: return "higher_order";
    }
}

}  // namespace

std::string bounds_to_json(const std::vector<BoundsRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"target", target_name(r.target)},
                       {"magnitude", r.magnitude},
                       {"gap_order1", r.gap_order1},
                       {"gap_order2", r.gap_order2},
                       {"regime", regime_name(r.regime)}});
    }
    return arr.dump(2);
}

void bounds_to_csv(const std::vector<BoundsRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write file: " + path);
    f << "target,magnitude,gap_order1,gap_order2,regime\n";
    for (const auto& r : rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%s\n",
                      target_name(r.target), r.magnitude, r.gap_order1, r.gap_order2,
                      regime_name(r.regime));
        f << buf;
    }
}

VerifyResult run_verify(const Model& original, const Model& compressed,
                        const Dataset& data, double tol_abs) {
    if (original.input_dim() != compressed.input_dim() ||
        original.num_classes() != compressed.num_classes())
        throw Error("verify: models disagree on input dimension or class count");
    VerifyResult v;
    v.original_loss = mean_loss(original, data);
    v.compressed_loss = mean_loss(compressed, data);
    v.delta = v.compressed_loss - v.original_loss;
    v.pass = v.delta <= tol_abs;
    return v;
}

}  // namespace llc
