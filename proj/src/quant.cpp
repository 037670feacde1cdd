#include "llc/quant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "llc/grid.hpp"
#include "llc/parallel.hpp"

namespace llc {

QuantLevel QuantLevel::of(int bits) {
    if (bits != 2 && bits != 4 && bits != 8 && bits != 16)
        throw Error("quant level: bits must be one of {2, 4, 8, 16}");
    return {bits};
}

std::vector<QuantLevel> default_levels() {
    return {QuantLevel::fp(), QuantLevel::of(16), QuantLevel::of(8), QuantLevel::of(4)};
}

std::vector<QuantLevel> parse_levels(const std::string& csv) {
    std::vector<QuantLevel> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "fp" || tok == "full" || tok == "64")
            out.push_back(QuantLevel::fp());
        else
            out.push_back(QuantLevel::of(std::stoi(tok)));
    }
    if (out.empty()) throw Error("levels: empty list");
    return out;
}

double aciq_alpha(int bits) {
    // argmin of the expected squared quantization error of a clipped
    // symmetric uniform grid under a unit Laplace (see the quadrature
    // oracle in the tests)
    switch (bits) {
        case 2: return 2.0;
        case 4: return 4.8199153;
        case 8: return 9.8826485;
        case 16: return 20.2713157;
        default: throw Error("aciq_alpha: unsupported bit width");
    }
}

double compute_scale(const Tensor& t, int bits, ScaleMode mode) {
    if (bits != 2 && bits != 4 && bits != 8 && bits != 16)
        throw Error("compute_scale: bits must be one of {2, 4, 8, 16}");
    double qmax = static_cast<double>((1L << (bits - 1)) - 1);
    double absmax = t.max_abs();
    if (absmax == 0.0) return 0.0;
    if (mode == ScaleMode::AbsMax) return absmax / qmax;
    // maximum-likelihood Laplace scale around the median
    std::vector<double> v = t.data;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    double med = v[v.size() / 2];
    if (v.size() % 2 == 0) {
        double lower = *std::max_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2));
        med = 0.5 * (med + lower);
    }
    double b = 0.0;
    for (double x : t.data) b += std::abs(x - med);
    b /= static_cast<double>(t.size());
    if (b == 0.0) return absmax / qmax;  // constant tensor: fall back to absmax
    return aciq_alpha(bits) * b / qmax;
}

RoundResult directional_round(const Tensor& t, double scale, RoundDir dir, int) {
    RoundResult r;
    r.q = t;
    r.eps = Tensor(t.shape);
    if (scale == 0.0) return r;  // no-op grid
    if (scale < 0.0) throw Error("directional_round: negative scale");
    for (std::size_t k = 0; k < t.size(); ++k) {
        r.q.data[k] = snap_to_grid(t.data[k], scale, dir);
        r.eps.data[k] = r.q.data[k] - t.data[k];
    }
    return r;
}

RoundResult stochastic_directional_round(const Tensor& t, double scale, RoundDir dir,
                                         int, Rng& rng) {
    RoundResult r;
    r.q = t;
    r.eps = Tensor(t.shape);
    if (scale == 0.0) return r;
    for (std::size_t k = 0; k < t.size(); ++k) {
        double g = t.data[k] / scale;
        double f = std::floor(g);
        double frac = g - f;
        bool up = rng.uniform() < (dir == RoundDir::Positive ? 1.0 - frac : frac);
        r.q.data[k] = (up ? f + 1.0 : f) * scale;
        r.eps.data[k] = r.q.data[k] - t.data[k];
    }
    return r;
}

RoundDir choose_direction(const GradientProfile& profile, std::size_t layer) {
    if (layer >= profile.grad_dot_one.size())
        throw Error("choose_direction: layer out of range");
    return profile.grad_dot_one[layer] < 0.0 ? RoundDir::Positive : RoundDir::Negative;
}

RoundDir choose_weight_direction(const GradientProfile& profile, std::size_t layer) {
    if (layer >= profile.weight_grad_dot_one.size())
        throw Error("choose_weight_direction: layer out of range");
    return profile.weight_grad_dot_one[layer] < 0.0 ? RoundDir::Positive
                                                    : RoundDir::Negative;
}

std::size_t weight_bytes(std::size_t count, QuantLevel level) {
    if (level.full_precision()) return count * 8;
    return (count * static_cast<std::size_t>(level.bits) + 7) / 8;
}

namespace {

constexpr std::size_t kActSampleCap = 65536;

// Deterministic strided subsample of a layer-input activation matrix.
Tensor sample_activations(const Tensor& acts) {
    std::size_t n = acts.size();
    std::size_t stride = std::max<std::size_t>(1, n / kActSampleCap);
    std::vector<double> out;
    out.reserve(n / stride + 1);
    for (std::size_t k = 0; k < n; k += stride) out.push_back(acts.data[k]);
    const std::size_t m = out.size();
    return Tensor({m}, std::move(out));
}

}  // namespace

CostMatrices build_cost_matrices(const Model& model, const Dataset& calib,
                                 const GradientProfile& profile,
                                 const std::vector<QuantLevel>& levels, double error_max,
                                 ScaleMode mode) {
    if (error_max <= 0.0) throw Error("build_cost_matrices: error_max must be positive");
    model.validate();
    const std::size_t n = model.layers.size(), k = levels.size();

    ForwardResult fr = forward(model, calib.inputs);
    std::vector<Tensor> act_samples(n);
    for (std::size_t i = 0; i < n; ++i)
        act_samples[i] = sample_activations(fr.layer_inputs[i]);
    const double f0 = mean_loss(model, calib);

    CostMatrices cm;
    cm.levels = levels;
    cm.P.assign(n, std::vector<double>(k, 0.0));
    cm.W.assign(n, std::vector<std::size_t>(k, 0));
    cm.plans.assign(n, std::vector<LayerQuantPlan>(k));

    parallel_for(n * k, [&](std::size_t idx) {
        const std::size_t i = idx / k, j = idx % k;
        const DenseLayer& L = model.layers[i];
        const std::size_t count = L.weight.size();
        LayerQuantPlan& plan = cm.plans[i][j];
        plan.layer = i;
        plan.level = levels[j];
        if (levels[j].full_precision()) {
            cm.P[i][j] = 0.0;
            cm.W[i][j] = weight_bytes(count, QuantLevel::fp());
            return;
        }
        const int bits = levels[j].bits;
        const double scale_w = compute_scale(L.weight, bits, mode);
        if (scale_w == 0.0) {
            // degenerate (all-zero) weights: full-precision fallback
            plan.level = QuantLevel::fp();
            cm.P[i][j] = 0.0;
            cm.W[i][j] = weight_bytes(count, QuantLevel::fp());
            return;
        }
        plan.direction = choose_direction(profile, i);
        plan.weight_direction = choose_weight_direction(profile, i);
        plan.scale_weight = scale_w;
        plan.scale_input = compute_scale(act_samples[i], bits, mode);

        RoundResult wq = directional_round(L.weight, scale_w, plan.weight_direction, bits);
        double delta_norm = wq.eps.l2_norm();
        double delta_rms = delta_norm / std::sqrt(static_cast<double>(wq.eps.size()));

        double slope_term = 0.0;
        if (plan.scale_input > 0.0) {
            RoundResult aq =
                directional_round(act_samples[i], plan.scale_input, plan.direction, bits);
            double eps_rms =
                aq.eps.l2_norm() / std::sqrt(static_cast<double>(aq.eps.size()));
            // loss sensitivity to a scale_input-sized shift of this layer's input
            Tensor probe({L.in_dim()});
            double mag = plan.direction == RoundDir::Positive ? plan.scale_input
                                                              : -plan.scale_input;
            for (double& v : probe.data) v = mag;
            std::vector<Injection> inj{{i, std::move(probe)}};
            double f_input = mean_loss(model, calib, &inj);
            double slope = std::abs(f0 - f_input) / plan.scale_input;
            slope_term = slope * eps_rms;
        }

        Model probe_model = model;
        probe_model.layers[i].weight = wq.q;
        double fluc = std::abs(f0 - mean_loss(probe_model, calib));

        double p = slope_term;
        if (fluc >= error_max) p += fluc / scale_w * delta_rms;
        if (!std::isfinite(p))
            throw Error("build_cost_matrices: non-finite cost at layer " +
                        std::to_string(i + 1));
        cm.P[i][j] = p;
        cm.W[i][j] = weight_bytes(count, levels[j]);
    });
    return cm;
}

Model apply_quant_plan(const Model& model, const std::vector<LayerQuantPlan>& plan) {
    Model out = model;
    for (const auto& p : plan) {
        if (p.layer >= out.layers.size()) throw Error("apply_quant_plan: bad layer index");
        if (p.level.full_precision()) continue;
        DenseLayer& L = out.layers[p.layer];
        if (p.scale_weight > 0.0)
            L.weight =
                directional_round(L.weight, p.scale_weight, p.weight_direction, p.level.bits)
                    .q;
        if (p.scale_input > 0.0)
            L.in_quant = InputQuant{p.scale_input, p.level.bits, p.direction};
    }
    return out;
}

void dump_cost_csv(const CostMatrices& cm, const std::string& p_path,
                   const std::string& w_path) {
    auto header = [&](std::ofstream& f) {
        f << "layer";
        for (const auto& l : cm.levels) f << "," << l.name();
        f << "\n";
    };
    if (!p_path.empty()) {
        std::ofstream f(p_path);
        if (!f) throw Error("cannot write file: " + p_path);
        header(f);
        for (std::size_t i = 0; i < cm.layer_count(); ++i) {
            f << (i + 1);
            for (std::size_t j = 0; j < cm.level_count(); ++j) {
                char buf[40];
                std::snprintf(buf, sizeof(buf), ",%.17g", cm.P[i][j]);
                f << buf;
            }
            f << "\n";
        }
    }
    if (!w_path.empty()) {
        std::ofstream f(w_path);
        if (!f) throw Error("cannot write file: " + w_path);
        header(f);
        for (std::size_t i = 0; i < cm.layer_count(); ++i) {
            f << (i + 1);
            for (std::size_t j = 0; j < cm.level_count(); ++j) f << "," << cm.W[i][j];
            f << "\n";
        }
    }
}

}  // namespace llc
