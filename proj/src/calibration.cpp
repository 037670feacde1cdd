#include "llc/calibration.hpp"

#include <cmath>

#include "llc/parallel.hpp"

namespace llc {

namespace {

constexpr std::size_t kChunk = 256;

Dataset slice(const Dataset& data, std::size_t begin, std::size_t end) {
    std::size_t d = data.dim();
    Dataset s;
    s.inputs = Tensor({end - begin, d},
                      {data.inputs.data.begin() + static_cast<long>(begin * d),
                       data.inputs.data.begin() + static_cast<long>(end * d)});
    s.labels.assign(data.labels.begin() + static_cast<long>(begin),
                    data.labels.begin() + static_cast<long>(end));
    return s;
}

// Pairwise combine of per-chunk mean gradients weighted by chunk size;
// the tree shape depends only on the chunk count, not on thread count.
struct WeightedGrads {
    Gradients g;
    double weight = 0.0;
};

WeightedGrads combine(WeightedGrads a, const WeightedGrads& b) {
    double total = a.weight + b.weight;
    double wa = a.weight / total, wb = b.weight / total;
    auto mix = [&](std::vector<Tensor>& xs, const std::vector<Tensor>& ys) {
        for (std::size_t i = 0; i < xs.size(); ++i)
            for (std::size_t k = 0; k < xs[i].size(); ++k)
                xs[i].data[k] = wa * xs[i].data[k] + wb * ys[i].data[k];
    };
    mix(a.g.weight, b.g.weight);
    mix(a.g.bias, b.g.bias);
    mix(a.g.activation, b.g.activation);
    a.weight = total;
    return a;
}

WeightedGrads reduce(std::vector<WeightedGrads>& parts, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) return std::move(parts[lo]);
    std::size_t mid = lo + (hi - lo) / 2;
    WeightedGrads left = reduce(parts, lo, mid);
    WeightedGrads right = reduce(parts, mid, hi);
    return combine(std::move(left), right);
}

Gradients mean_gradients(const Model& model, const Dataset& data) {
    std::size_t m = data.size();
    std::size_t chunks = (m + kChunk - 1) / kChunk;
    std::vector<WeightedGrads> parts(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        std::size_t lo = c * kChunk, hi = std::min(lo + kChunk, m);
        Dataset s = slice(data, lo, hi);
        parts[c].g = backward(model, s.inputs, s.labels);
        parts[c].weight = static_cast<double>(hi - lo);
    });
    return reduce(parts, 0, chunks).g;
}

}  // namespace

GradientProfile calibrate(const Model& model, const Dataset& data) {
    model.validate();
    data.validate(model.num_classes());
    Gradients g = mean_gradients(model, data);
    GradientProfile p;
    p.sample_count = data.size();
    p.mean_weight_grad = std::move(g.weight);
    p.mean_act_grad = std::move(g.activation);
    p.grad_dot_one.resize(model.layers.size());
    p.weight_grad_dot_one.resize(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        p.grad_dot_one[i] = pairwise_sum(p.mean_act_grad[i].data);
        p.weight_grad_dot_one[i] = pairwise_sum(p.mean_weight_grad[i].data);
    }
    return p;
}

std::vector<double> hvp_fd(const GradFn& grad, const std::vector<double>& w,
                           const std::vector<double>& v, double h) {
    std::vector<double> wp(w), wm(w);
    for (std::size_t i = 0; i < w.size(); ++i) {
        wp[i] += h * v[i];
        wm[i] -= h * v[i];
    }
    std::vector<double> gp = grad(wp), gm = grad(wm);
    std::vector<double> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = (gp[i] - gm[i]) / (2.0 * h);
    return out;
}

namespace {

Model perturbed(const Model& model, const std::vector<Tensor>& direction, double t) {
    Model m = model;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        if (direction[i].size() == 0) continue;
        if (!direction[i].same_shape(m.layers[i].weight))
            throw Error("hvp: direction shape mismatch at layer " + std::to_string(i + 1));
        for (std::size_t k = 0; k < direction[i].size(); ++k)
            m.layers[i].weight.data[k] += t * direction[i].data[k];
    }
    return m;
}

double weight_inf_norm(const Model& model) {
    double m = 0.0;
    for (const auto& l : model.layers) m = std::max(m, l.weight.max_abs());
    return m;
}

}  // namespace

std::vector<Tensor> hessian_vector_product(const Model& model, const Dataset& data,
                                           const std::vector<Tensor>& direction) {
    if (direction.size() != model.layers.size())
        throw Error("hvp: direction must list one tensor per layer");
    double h = 1e-4 * (1.0 + weight_inf_norm(model));
    Gradients gp = mean_gradients(perturbed(model, direction, h), data);
    Gradients gm = mean_gradients(perturbed(model, direction, -h), data);
    std::vector<Tensor> out(model.layers.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = Tensor(model.layers[i].weight.shape);
        for (std::size_t k = 0; k < out[i].size(); ++k) {
            double v = (gp.weight[i].data[k] - gm.weight[i].data[k]) / (2.0 * h);
            if (!std::isfinite(v)) throw Error("hvp: non-finite intermediate");
            out[i].data[k] = v;
        }
    }
    return out;
}

double second_order_term(const Model& model, const Dataset& data,
                         const std::vector<Tensor>& eps,
                         const std::vector<Tensor>& delta) {
    const std::size_t n = model.layers.size();
    if (eps.size() != n || delta.size() != n)
        throw Error("second_order_term: need one tensor per layer on each side");
    // s(t) = (eps, delta) . grad at (w + t delta, h + t eps); the quadratic
    // term is 0.5 * ds/dt at 0, estimated centrally.
    double h = 1e-4 * (1.0 + weight_inf_norm(model));
    auto directional = [&](double t) {
        Model m = perturbed(model, delta, t);
        std::vector<Injection> inj;
        for (std::size_t i = 0; i < n; ++i)
            if (eps[i].size() > 0) {
                Tensor scaled = eps[i];
                for (double& v : scaled.data) v *= t;
                inj.push_back({i, std::move(scaled)});
            }
        std::size_t mm = data.size();
        std::size_t chunks = (mm + kChunk - 1) / kChunk;
        std::vector<WeightedGrads> parts(chunks);
        parallel_for(chunks, [&](std::size_t c) {
            std::size_t lo = c * kChunk, hi = std::min(lo + kChunk, mm);
            Dataset s = slice(data, lo, hi);
            parts[c].g = backward(m, s.inputs, s.labels, &inj);
            parts[c].weight = static_cast<double>(hi - lo);
        });
        Gradients g = reduce(parts, 0, chunks).g;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (eps[i].size() > 0) acc += dot(eps[i], g.activation[i]);
            if (delta[i].size() > 0) acc += dot(delta[i], g.weight[i]);
        }
        return acc;
    };
    double v = 0.5 * (directional(h) - directional(-h)) / (2.0 * h);
    if (!std::isfinite(v)) throw Error("second_order_term: non-finite result");
    return v;
}

}  // namespace llc
