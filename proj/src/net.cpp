#include "llc/net.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "llc/rng.hpp"

namespace llc {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;
using CMapV = Eigen::Map<const Eigen::VectorXd>;

void DenseLayer::validate(std::size_t index) const {
    if (!weight.is_matrix())
        throw Error("layer " + std::to_string(index + 1) + ": weight is not 2-D");
    if (bias.shape.size() != 1 || bias.size() != weight.rows())
        throw Error("layer " + std::to_string(index + 1) +
                    ": bias length does not match weight rows");
}

std::size_t Model::weight_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size();
    return n;
}

void Model::validate() const {
    if (layers.empty()) throw Error("model: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].validate(i);
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
        if (layers[i].in_dim() != layers[i + 1].out_dim())
            throw Error("model: dimension chain broken between layer " +
                        std::to_string(i + 1) + " and layer " + std::to_string(i + 2));
}

void Dataset::validate(std::size_t num_classes) const {
    if (labels.empty()) throw Error("dataset: empty");
    if (!inputs.is_matrix() || inputs.rows() != labels.size())
        throw Error("dataset: inputs/labels count mismatch");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw Error("dataset: label out of range");
}

std::pair<Dataset, Dataset> Dataset::split(double frac) const {
    if (frac <= 0.0 || frac >= 1.0) throw Error("dataset split: fraction must be in (0,1)");
    std::size_t m = size(), d = dim();
    auto k = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(m)));
    k = std::min(std::max<std::size_t>(k, 1), m - 1);
    Dataset a, b;
    a.inputs = Tensor({k, d},
                      {inputs.data.begin(), inputs.data.begin() + static_cast<long>(k * d)});
    a.labels.assign(labels.begin(), labels.begin() + static_cast<long>(k));
    b.inputs = Tensor({m - k, d},
                      {inputs.data.begin() + static_cast<long>(k * d), inputs.data.end()});
    b.labels.assign(labels.begin() + static_cast<long>(k), labels.end());
    return {std::move(a), std::move(b)};
}

Dataset Dataset::concat(const Dataset& other) const {
    if (dim() != other.dim()) throw Error("dataset concat: dimension mismatch");
    Dataset r;
    r.inputs = Tensor({size() + other.size(), dim()});
    std::copy(inputs.data.begin(), inputs.data.end(), r.inputs.data.begin());
    std::copy(other.inputs.data.begin(), other.inputs.data.end(),
              r.inputs.data.begin() + static_cast<long>(inputs.size()));
    r.labels = labels;
    r.labels.insert(r.labels.end(), other.labels.begin(), other.labels.end());
    return r;
}

namespace {

Tensor as_batch(const Tensor& input) {
    if (input.shape.size() == 1) return Tensor({1, input.size()}, input.data);
    if (input.shape.size() == 2) return input;
    throw Error("forward: input must be 1-D or 2-D");
}

void apply_activation(Tensor& t, Activation a) {
    if (a == Activation::ReLU)
        for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

const Injection* find_injection(const std::vector<Injection>* inj, std::size_t layer) {
    if (!inj) return nullptr;
    for (const auto& e : *inj)
        if (e.layer == layer) return &e;
    return nullptr;
}

}  // namespace

ForwardResult forward(const Model& model, const Tensor& input,
                      const std::vector<Injection>* injections, bool apply_input_quant) {
    const std::size_t n = model.layers.size();
    Tensor h = as_batch(input);
    if (h.cols() != model.input_dim())
        throw Error("forward: input width " + std::to_string(h.cols()) +
                    " does not match layer " + std::to_string(n) + " width " +
                    std::to_string(model.input_dim()));
    ForwardResult res;
    res.layer_inputs.resize(n);
    res.layer_outputs.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = n - 1 - k;  // innermost layer first
        const DenseLayer& L = model.layers[i];
        if (const Injection* inj = find_injection(injections, i)) {
            if (inj->values.size() != L.in_dim())
                throw Error("forward: injection shape mismatch at layer " +
                            std::to_string(i + 1));
            for (std::size_t r = 0; r < h.rows(); ++r)
                for (std::size_t c = 0; c < h.cols(); ++c)
                    h.at(r, c) += inj->values.data[c];
        }
        if (apply_input_quant && L.in_quant && L.in_quant->scale > 0.0) {
            const auto& q = *L.in_quant;
            for (double& v : h.data) v = snap_to_grid(v, q.scale, q.dir);
        }
        res.layer_inputs[i] = h;
        Tensor z({h.rows(), L.out_dim()});
        CMapM H(h.data.data(), static_cast<long>(h.rows()), static_cast<long>(h.cols()));
        CMapM W(L.weight.data.data(), static_cast<long>(L.out_dim()),
                static_cast<long>(L.in_dim()));
        CMapV b(L.bias.data.data(), static_cast<long>(L.bias.size()));
        MapM Z(z.data.data(), static_cast<long>(z.rows()), static_cast<long>(z.cols()));
        Z.noalias() = H * W.transpose();
        Z.rowwise() += b.transpose();
        apply_activation(z, L.activation);
        res.layer_outputs[i] = z;
        h = std::move(z);
    }
    if (!h.all_finite()) throw Error("forward: non-finite output");
    res.logits = std::move(h);
    return res;
}

namespace {

// Row-wise softmax probabilities and mean cross-entropy, numerically stable.
double softmax_ce(const Tensor& logits, const std::vector<int>& labels, Tensor* probs) {
    const std::size_t m = logits.rows(), c = logits.cols();
    std::vector<double> losses(m);
    if (probs) *probs = Tensor({m, c});
    for (std::size_t r = 0; r < m; ++r) {
        double mx = logits.at(r, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(r, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits.at(r, j) - mx);
        double lse = mx + std::log(sum);
        losses[r] = lse - logits.at(r, static_cast<std::size_t>(labels[r]));
        if (probs)
            for (std::size_t j = 0; j < c; ++j)
                probs->at(r, j) = std::exp(logits.at(r, j) - lse);
    }
    return pairwise_sum(losses) / static_cast<double>(m);
}

}  // namespace

LossStats loss_and_accuracy(const Model& model, const Dataset& data) {
    data.validate(model.num_classes());
    ForwardResult fr = forward(model, data.inputs);
    LossStats s;
    s.mean_loss = softmax_ce(fr.logits, data.labels, nullptr);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < fr.logits.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < fr.logits.cols(); ++j)
            if (fr.logits.at(r, j) > fr.logits.at(r, best)) best = j;
        if (best == static_cast<std::size_t>(data.labels[r])) ++hits;
    }
    s.top1 = static_cast<double>(hits) / static_cast<double>(data.labels.size());
    return s;
}

double mean_loss(const Model& model, const Dataset& data,
                 const std::vector<Injection>* injections) {
    ForwardResult fr = forward(model, data.inputs, injections);
    return softmax_ce(fr.logits, data.labels, nullptr);
}

Gradients backward(const Model& model, const Tensor& inputs,
                   const std::vector<int>& labels,
                   const std::vector<Injection>* injections) {
    Tensor batch = as_batch(inputs);
    if (batch.rows() != labels.size()) throw Error("backward: inputs/labels mismatch");
    const std::size_t n = model.layers.size();
    const std::size_t m = batch.rows();

    // forward, also keeping each layer's post-activation output
    ForwardResult fr = forward(model, batch, injections);
    Tensor probs;
    softmax_ce(fr.logits, labels, &probs);

    Gradients g;
    g.weight.resize(n);
    g.bias.resize(n);
    g.activation.resize(n);

    // grad of the mean loss wrt the outermost layer's post-activation output
    Tensor G = probs;
    for (std::size_t r = 0; r < m; ++r)
        G.at(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    for (double& v : G.data) v /= static_cast<double>(m);

    for (std::size_t i = 0; i < n; ++i) {
        const DenseLayer& L = model.layers[i];
        const Tensor& out_i = fr.layer_outputs[i];
        Tensor delta = G;  // grad wrt pre-activation z_i
        if (L.activation == Activation::ReLU)
            for (std::size_t k = 0; k < delta.size(); ++k)
                if (out_i.data[k] <= 0.0) delta.data[k] = 0.0;

        const Tensor& h_in = fr.layer_inputs[i];
        g.weight[i] = Tensor({L.out_dim(), L.in_dim()});
        g.bias[i] = Tensor({L.out_dim()});
        g.activation[i] = Tensor({L.in_dim()});

        CMapM D(delta.data.data(), static_cast<long>(m), static_cast<long>(L.out_dim()));
        CMapM H(h_in.data.data(), static_cast<long>(m), static_cast<long>(L.in_dim()));
        CMapM W(L.weight.data.data(), static_cast<long>(L.out_dim()),
                static_cast<long>(L.in_dim()));
        MapM GW(g.weight[i].data.data(), static_cast<long>(L.out_dim()),
                static_cast<long>(L.in_dim()));
        GW.noalias() = D.transpose() * H;
        Eigen::Map<Eigen::VectorXd>(g.bias[i].data.data(),
                                    static_cast<long>(L.out_dim())) = D.colwise().sum();

        Tensor gh({m, L.in_dim()});
        MapM GH(gh.data.data(), static_cast<long>(m), static_cast<long>(L.in_dim()));
        GH.noalias() = D * W;
        Eigen::Map<Eigen::VectorXd>(g.activation[i].data.data(),
                                    static_cast<long>(L.in_dim())) = GH.colwise().sum();
        G = std::move(gh);
    }
    return g;
}

Gradients backward(const Model& model, const Tensor& input, int label) {
    return backward(model, input, std::vector<int>{label});
}

Model train_fixture(Model model, const Dataset& data, int epochs, double lr,
                    std::uint64_t seed, std::size_t batch) {
    model.validate();
    data.validate(model.num_classes());
    Rng rng(seed);
    const std::size_t m = data.size(), d = data.dim();
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    for (int ep = 0; ep < epochs; ++ep) {
        rng.shuffle(order);
        for (std::size_t s = 0; s < m; s += batch) {
            std::size_t e = std::min(s + batch, m);
            Tensor bx({e - s, d});
            std::vector<int> by(e - s);
            for (std::size_t r = s; r < e; ++r) {
                std::copy_n(data.inputs.data.begin() + static_cast<long>(order[r] * d), d,
                            bx.data.begin() + static_cast<long>((r - s) * d));
                by[r - s] = data.labels[order[r]];
            }
            Gradients g = backward(model, bx, by);
            for (std::size_t i = 0; i < model.layers.size(); ++i) {
                for (std::size_t k = 0; k < g.weight[i].size(); ++k)
                    model.layers[i].weight.data[k] -= lr * g.weight[i].data[k];
                for (std::size_t k = 0; k < g.bias[i].size(); ++k)
                    model.layers[i].bias.data[k] -= lr * g.bias[i].data[k];
            }
        }
    }
    return model;
}

Model make_mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts,
               std::uint64_t seed, const std::vector<double>* init_scales) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
        throw Error("make_mlp: dims/acts mismatch");
    Rng rng(seed);
    Model m;
    m.layers.resize(dims.size() - 1);
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        // k walks input-side layers; store output-side first
        std::size_t i = dims.size() - 2 - k;
        DenseLayer& L = m.layers[i];
        double s = init_scales ? (*init_scales)[k]
                               : std::sqrt(2.0 / static_cast<double>(dims[k]));
        L.weight = Tensor({dims[k + 1], dims[k]});
        for (double& v : L.weight.data) v = s * rng.normal();
        L.bias = Tensor({dims[k + 1]});
        L.activation = acts[k];
    }
    m.validate();
    return m;
}

}  // namespace llc
