#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "llc/calibration.hpp"
#include "llc/data_io.hpp"
#include "llc/rng.hpp"

using namespace llc;

namespace {

Model fixture_model(std::uint64_t seed) {
    return make_mlp({6, 10, 4}, {Activation::ReLU, Activation::Identity}, seed);
}

Dataset fixture_data(std::uint64_t seed, std::size_t m = 96) {
    Rng rng(seed);
    Dataset d;
    d.inputs = Tensor({m, 6});
    for (double& v : d.inputs.data) v = rng.normal();
    for (std::size_t i = 0; i < m; ++i) d.labels.push_back(static_cast<int>(rng.below(4)));
    return d;
}

}  // namespace

TEST_CASE("calibrate equals the per-sample gradient average") {
    Model m = fixture_model(1);
    Dataset d = fixture_data(2, 40);
    GradientProfile p = calibrate(m, d);
    CHECK(p.sample_count == 40);

    // oracle: average single-sample backward calls one by one
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        Tensor wsum(m.layers[li].weight.shape);
        Tensor asum({m.layers[li].in_dim()});
        for (std::size_t s = 0; s < d.size(); ++s) {
            Tensor x({1, d.dim()});
            for (std::size_t c = 0; c < d.dim(); ++c) x.at(0, c) = d.inputs.at(s, c);
            Gradients g = backward(m, x, std::vector<int>{d.labels[s]});
            for (std::size_t k = 0; k < wsum.size(); ++k)
                wsum.data[k] += g.weight[li].data[k];
            for (std::size_t k = 0; k < asum.size(); ++k)
                asum.data[k] += g.activation[li].data[k];
        }
        for (std::size_t k = 0; k < wsum.size(); ++k)
            CHECK(p.mean_weight_grad[li].data[k] ==
                  doctest::Approx(wsum.data[k] / 40.0).epsilon(1e-12));
        for (std::size_t k = 0; k < asum.size(); ++k)
            CHECK(p.mean_act_grad[li].data[k] ==
                  doctest::Approx(asum.data[k] / 40.0).epsilon(1e-12));
    }
}

TEST_CASE("grad_dot_one sums the mean gradients") {
    Model m = fixture_model(3);
    Dataset d = fixture_data(4);
    GradientProfile p = calibrate(m, d);
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        double a = 0.0, w = 0.0;
        for (double v : p.mean_act_grad[li].data) a += v;
        for (double v : p.mean_weight_grad[li].data) w += v;
        CHECK(p.grad_dot_one[li] == doctest::Approx(a).epsilon(1e-12));
        CHECK(p.weight_grad_dot_one[li] == doctest::Approx(w).epsilon(1e-12));
    }
}

TEST_CASE("parallel and serial calibration agree to 1e-12") {
    Model m = fixture_model(5);
    Dataset d = fixture_data(6, 1200);  // several 256-sample chunks
    setenv("LLC_THREADS", "1", 1);
    GradientProfile serial = calibrate(m, d);
    setenv("LLC_THREADS", "4", 1);
    GradientProfile parallel = calibrate(m, d);
    unsetenv("LLC_THREADS");
    for (std::size_t li = 0; li < m.layers.size(); ++li)
        for (std::size_t k = 0; k < serial.mean_weight_grad[li].size(); ++k)
            CHECK(parallel.mean_weight_grad[li].data[k] ==
                  doctest::Approx(serial.mean_weight_grad[li].data[k]).epsilon(1e-12));
}

TEST_CASE("hvp_fd recovers the Hessian of a quadratic exactly") {
    // f(w) = 0.5 w^T A w, grad = A w, so the HVP must equal A v for any h
    const std::vector<std::vector<double>> A = {
        {2.0, -1.0, 0.0}, {-1.0, 3.0, 0.5}, {0.0, 0.5, 1.0}};
    GradFn grad = [&](const std::vector<double>& w) {
        std::vector<double> g(3, 0.0);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) g[i] += A[i][j] * w[j];
        return g;
    };
    std::vector<double> w = {0.3, -0.7, 1.1}, v = {1.0, 2.0, -1.0};
    std::vector<double> hv = hvp_fd(grad, w, v, 1e-3);
    for (int i = 0; i < 3; ++i) {
        double want = 0.0;
        for (int j = 0; j < 3; ++j) want += A[i][j] * v[j];
        CHECK(hv[i] == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("model hvp matches second differences of the loss") {
    Model m = fixture_model(7);
    Dataset d = fixture_data(8, 64);
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Tensor> v(m.layers.size());
        double vnorm2 = 0.0;
        for (std::size_t li = 0; li < m.layers.size(); ++li) {
            v[li] = Tensor(m.layers[li].weight.shape);
            for (double& x : v[li].data) {
                x = rng.normal();
                vnorm2 += x * x;
            }
        }
        double scale = 1e-3 / std::sqrt(vnorm2);
        for (auto& t : v)
            for (double& x : t.data) x *= scale;

        std::vector<Tensor> hv = hessian_vector_product(m, d, v);
        double vHv = 0.0;
        for (std::size_t li = 0; li < m.layers.size(); ++li) vHv += dot(v[li], hv[li]);

        // oracle: (f(w+v) - 2 f(w) + f(w-v)) with v already small
        Model mp = m, mm = m;
        for (std::size_t li = 0; li < m.layers.size(); ++li)
            for (std::size_t k = 0; k < v[li].size(); ++k) {
                mp.layers[li].weight.data[k] += v[li].data[k];
                mm.layers[li].weight.data[k] -= v[li].data[k];
            }
        double second = mean_loss(mp, d) - 2.0 * mean_loss(m, d) + mean_loss(mm, d);
        CHECK(vHv == doctest::Approx(second).epsilon(0.1));
    }
}

TEST_CASE("hvp bilinear form is symmetric") {
    Model m = fixture_model(10);
    Dataset d = fixture_data(11, 64);
    Rng rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Tensor> u(m.layers.size()), v(m.layers.size());
        for (std::size_t li = 0; li < m.layers.size(); ++li) {
            u[li] = Tensor(m.layers[li].weight.shape);
            v[li] = Tensor(m.layers[li].weight.shape);
            for (double& x : u[li].data) x = 1e-2 * rng.normal();
            for (double& x : v[li].data) x = 1e-2 * rng.normal();
        }
        std::vector<Tensor> Hu = hessian_vector_product(m, d, u);
        std::vector<Tensor> Hv = hessian_vector_product(m, d, v);
        double uHv = 0.0, vHu = 0.0;
        for (std::size_t li = 0; li < m.layers.size(); ++li) {
            uHv += dot(u[li], Hv[li]);
            vHu += dot(v[li], Hu[li]);
        }
        CHECK(uHv == doctest::Approx(vHu).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("second_order_term matches a direct second difference") {
    Model m = fixture_model(13);
    Dataset d = fixture_data(14, 64);
    Rng rng(15);
    std::vector<Tensor> eps(m.layers.size()), delta(m.layers.size());
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        eps[li] = Tensor({m.layers[li].in_dim()});
        delta[li] = Tensor(m.layers[li].weight.shape);
        for (double& x : eps[li].data) x = 1e-3 * rng.normal();
        for (double& x : delta[li].data) x = 1e-3 * rng.normal();
    }
    double got = second_order_term(m, d, eps, delta);

    // oracle: 0.5 d^2/dt^2 of l(w + t delta, h + t eps) at t = 0
    auto at = [&](double t) {
        Model mt = m;
        std::vector<Injection> inj;
        for (std::size_t li = 0; li < m.layers.size(); ++li) {
            Tensor e = eps[li];
            for (double& x : e.data) x *= t;
            inj.push_back({li, std::move(e)});
            for (std::size_t k = 0; k < delta[li].size(); ++k)
                mt.layers[li].weight.data[k] += t * delta[li].data[k];
        }
        return mean_loss(mt, d, &inj);
    };
    const double h = 0.5;
    double second = 0.5 * (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
    CHECK(got == doctest::Approx(second).epsilon(0.05).scale(1e-8));
}

TEST_CASE("zero directions give a zero second-order term") {
    Model m = fixture_model(16);
    Dataset d = fixture_data(17, 32);
    std::vector<Tensor> none(m.layers.size());
    CHECK(second_order_term(m, d, none, none) == 0.0);
}
