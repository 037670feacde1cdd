#include "llc/lowrank.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace llc {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<const MatRM>;

}  // namespace

std::size_t FactorPair::rank_cap(std::size_t n, std::size_t m) {
    // largest r with r (n + m) < n m, additionally bounded by min(n, m)
    std::size_t cap = (n * m - 1) / (n + m);
    return std::min(cap, std::min(n, m));
}

FactorPair low_rank_factor(const Tensor& w, std::size_t r) {
    if (!w.is_matrix()) throw Error("low_rank_factor: weight must be 2-D");
    const std::size_t n = w.rows(), m = w.cols();
    if (r < 1 || r > std::min(n, m))
        throw Error("low_rank_factor: rank " + std::to_string(r) +
                    " out of range for " + std::to_string(n) + "x" + std::to_string(m));

    MapRM W(w.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    Eigen::BDCSVD<MatRM> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& U = svd.matrixU();
    const auto& V = svd.matrixV();
    const auto& S = svd.singularValues();

    FactorPair fp;
    fp.rank = r;
    fp.L = Tensor::matrix(n, r);
    fp.R = Tensor::matrix(r, m);
    for (std::size_t q = 0; q < r; ++q) {
        const double root = std::sqrt(std::max(0.0, S(static_cast<Eigen::Index>(q))));
        for (std::size_t i = 0; i < n; ++i)
            fp.L.at(i, q) = U(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) * root;
        for (std::size_t j = 0; j < m; ++j)
            fp.R.at(q, j) = root * V(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(q));
    }

    fp.delta = Tensor::matrix(n, m);
    MapRM L(fp.L.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
    MapRM R(fp.R.data.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m));
    Eigen::Map<MatRM> D(fp.delta.data.data(), static_cast<Eigen::Index>(n),
                        static_cast<Eigen::Index>(m));
    D = L * R - W;
    fp.residual_fro = fp.delta.frobenius();
    return fp;
}

double sign_condition(const GradientProfile& profile, std::size_t layer,
                      const Tensor& delta) {
    if (layer >= profile.mean_weight_grad.size())
        throw Error("sign_condition: layer index out of range");
    const Tensor& g = profile.mean_weight_grad[layer];
    if (!g.same_shape(delta))
        throw Error("sign_condition: delta shape mismatch at layer " +
                    std::to_string(layer + 1));
    return dot(g, delta);
}

std::optional<LayerDecomposition> decompose_layer(const Model& model, std::size_t layer,
                                                  const GradientProfile& profile,
                                                  const Dataset& calib,
                                                  const LowRankOptions& opts,
                                                  RankSearchTrace* trace_out) {
    if (layer >= model.layers.size())
        throw Error("decompose_layer: layer index out of range");
    if (opts.gamma <= 0.0) {
        // gamma = 0 admits no residual at all; record an empty search
        if (trace_out) *trace_out = RankSearchTrace{layer, {}, std::nullopt};
        return std::nullopt;
    }
    const Tensor& w = model.layers[layer].weight;
    const std::size_t n = w.rows(), m = w.cols();
    const std::size_t cap = FactorPair::rank_cap(n, m);
    std::size_t r_hi = opts.rank_max == 0 ? cap : std::min(opts.rank_max, cap);
    const double gamma_eff =
        opts.gamma_relative ? opts.gamma * w.frobenius() : opts.gamma;

    RankSearchTrace trace;
    trace.layer = layer;
    std::optional<FactorPair> best;
    double best_loss = 0.0;

    for (std::size_t r = 1; r <= r_hi; ++r) {
        FactorPair fp = low_rank_factor(w, r);
        RankCandidate cand;
        cand.rank = r;
        cand.residual_fro = fp.residual_fro;
        cand.sign_value = sign_condition(profile, layer, fp.delta);
        const bool exact = fp.residual_fro <= opts.early_stop_tol;
        cand.accepted =
            fp.residual_fro <= gamma_eff && (cand.sign_value < 0.0 || exact);
        if (cand.accepted) {
            Model probe = model;
            Tensor& pw = probe.layers[layer].weight;
            for (std::size_t k = 0; k < pw.size(); ++k)
                pw.data[k] = w.data[k] + fp.delta.data[k];
            cand.measured_loss = mean_loss(probe, calib);
            if (!best || cand.measured_loss < best_loss) {
                best = fp;
                best_loss = cand.measured_loss;
            }
        }
        trace.candidates.push_back(cand);
        if (cand.accepted && exact) break;  // residual is numerically zero
    }
    if (best) trace.chosen_rank = best->rank;
    if (trace_out) *trace_out = trace;
    if (!best) return std::nullopt;
    return LayerDecomposition{std::move(*best), std::move(trace)};
}

DecomposeResult decompose_model(const Model& model, const GradientProfile& profile,
                                const Dataset& calib, const LowRankOptions& opts) {
    model.validate();
    DecomposeResult res;
    res.traces.resize(model.layers.size());
    std::vector<std::optional<LayerDecomposition>> picks(model.layers.size());

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        res.traces[i].layer = i;
        const DenseLayer& L = model.layers[i];
        const std::size_t n = L.out_dim(), m = L.in_dim();
        const bool eligible =
            !L.factor_part && std::min(n, m) >= 8 && FactorPair::rank_cap(n, m) >= 1;
        if (!eligible) continue;
        picks[i] = decompose_layer(model, i, profile, calib, opts, &res.traces[i]);
    }

    res.model.layers.clear();
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const DenseLayer& orig = model.layers[i];
        if (!picks[i]) {
            res.model.layers.push_back(orig);
            continue;
        }
        const FactorPair& fp = picks[i]->factors;
        res.factored.emplace_back(i + 1, fp.rank);

        DenseLayer outer;  // the L map: consumes the rank-r intermediate
        outer.weight = fp.L;
        outer.bias = orig.bias;
        outer.activation = orig.activation;
        outer.factor_part = true;

        DenseLayer inner;  // the R map: sees the original layer input
        inner.weight = fp.R;
        inner.bias = Tensor::vec(fp.rank);
        inner.activation = Activation::Identity;
        inner.factor_part = true;
        inner.in_quant = orig.in_quant;

        res.model.layers.push_back(std::move(outer));
        res.model.layers.push_back(std::move(inner));
    }
    res.model.validate();
    return res;
}

std::string traces_to_json(const std::vector<RankSearchTrace>& traces) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : traces) {
        nlohmann::json jt;
        jt["layer"] = t.layer + 1;
        jt["chosen_rank"] =
            t.chosen_rank ? nlohmann::json(*t.chosen_rank) : nlohmann::json(nullptr);
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& c : t.candidates) {
            cands.push_back({{"rank", c.rank},
                             {"residual_fro", c.residual_fro},
                             {"sign_value", c.sign_value},
                             {"accepted", c.accepted},
                             {"measured_loss", c.accepted ? nlohmann::json(c.measured_loss)
                                                          : nlohmann::json(nullptr)}});
        }
        jt["candidates"] = std::move(cands);
        arr.push_back(std::move(jt));
    }
    return arr.dump(2);
}

}  // namespace llc
