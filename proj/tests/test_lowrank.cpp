#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "llc/lowrank.hpp"
#include "llc/rng.hpp"

using namespace llc;

namespace {

// Independent spectral oracle: cyclic Jacobi eigenvalues of the Gram matrix
// W^T W; the squared singular values of W, without touching the SVD path.
std::vector<double> gram_eigenvalues(const Tensor& w) {
    const std::size_t n = w.cols();
    std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t r = 0; r < w.rows(); ++r) a[i][j] += w.at(r, i) * w.at(r, j);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                double theta = 0.5 * std::atan2(2.0 * a[p][q], a[q][q] - a[p][p]);
                double c = std::cos(theta), s = std::sin(theta);
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

Tensor random_matrix(std::size_t n, std::size_t m, Rng& rng, double scale = 1.0) {
    Tensor t({n, m});
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

Tensor exact_rank_matrix(std::size_t n, std::size_t m, std::size_t r, Rng& rng) {
    Tensor a = random_matrix(n, r, rng), b = random_matrix(r, m, rng);
    Tensor w({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < r; ++k) s += a.at(i, k) * b.at(k, j);
            w.at(i, j) = s;
        }
    return w;
}

Tensor product(const Tensor& l, const Tensor& r) {
    Tensor out({l.rows(), r.cols()});
    for (std::size_t i = 0; i < l.rows(); ++i)
        for (std::size_t j = 0; j < r.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < l.cols(); ++k) s += l.at(i, k) * r.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

}  // namespace

TEST_CASE("rank cap from the size constraint") {
    // r must satisfy r (n + m) < n m
    CHECK(FactorPair::rank_cap(8, 8) == 3);    // 64 / 16 = 4, strict -> 3
    CHECK(FactorPair::rank_cap(10, 40) == 7);  // 400 / 50 = 8, strict -> 7
    CHECK(FactorPair::rank_cap(8, 512) == 7);  // also bounded by min(n, m)... 4096/520
    CHECK(FactorPair::rank_cap(2, 2) == 0);    // no rank shrinks a 2x2
}

TEST_CASE("outer product factors exactly at rank 1") {
    Rng rng(1);
    Tensor a({6, 1}), b({1, 9});
    for (double& v : a.data) v = rng.normal();
    for (double& v : b.data) v = rng.normal();
    Tensor w = product(a, b);
    FactorPair fp = low_rank_factor(w, 1);
    CHECK(fp.residual_fro < 1e-12);
    CHECK(fp.L.shape == std::vector<std::size_t>{6, 1});
    CHECK(fp.R.shape == std::vector<std::size_t>{1, 9});
}

TEST_CASE("identity spectrum") {
    const std::size_t n = 5;
    Tensor I({n, n});
    for (std::size_t i = 0; i < n; ++i) I.at(i, i) = 1.0;
    CHECK(low_rank_factor(I, n).residual_fro < 1e-12);
    CHECK(low_rank_factor(I, n - 1).residual_fro == doctest::Approx(1.0).epsilon(1e-10));
    CHECK_THROWS_AS(low_rank_factor(I, 0), Error);
    CHECK_THROWS_AS(low_rank_factor(I, n + 1), Error);
}

TEST_CASE("residual matches the Gram-matrix spectral oracle") {
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor w = random_matrix(20, 30, rng);
        std::vector<double> ev = gram_eigenvalues(w);  // sigma^2, descending
        for (std::size_t r : {1u, 5u, 10u, 19u}) {
            FactorPair fp = low_rank_factor(w, r);
            double tail = 0.0;
            for (std::size_t i = r; i < ev.size(); ++i) tail += std::max(0.0, ev[i]);
            CHECK(fp.residual_fro * fp.residual_fro ==
                  doctest::Approx(tail).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("factor pair is internally consistent") {
    Rng rng(3);
    Tensor w = random_matrix(12, 7, rng);
    FactorPair fp = low_rank_factor(w, 4);
    // delta == L R - W and the recorded residual matches it
    Tensor lr = product(fp.L, fp.R);
    double resid = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        CHECK(fp.delta.data[k] == doctest::Approx(lr.data[k] - w.data[k]).epsilon(1e-12));
        resid += fp.delta.data[k] * fp.delta.data[k];
    }
    CHECK(fp.residual_fro == doctest::Approx(std::sqrt(resid)).epsilon(1e-10));
    // balanced splitting keeps the factor norms comparable
    CHECK(fp.L.frobenius() == doctest::Approx(fp.R.frobenius()).epsilon(1e-8));
}

TEST_CASE("sign condition is the flat inner product") {
    GradientProfile p;
    p.mean_weight_grad.push_back(Tensor({2, 2}, {1.0, -2.0, 0.5, 3.0}));
    Tensor zero({2, 2});
    CHECK(sign_condition(p, 0, zero) == 0.0);
    Tensor neg = p.mean_weight_grad[0];
    for (double& v : neg.data) v = -v;
    CHECK(sign_condition(p, 0, neg) ==
          doctest::Approx(-(1.0 + 4.0 + 0.25 + 9.0)).epsilon(1e-15));
    Rng rng(4);
    Tensor d({2, 2});
    for (double& v : d.data) v = rng.normal();
    double want = 0.0;
    for (std::size_t k = 0; k < 4; ++k) want += p.mean_weight_grad[0].data[k] * d.data[k];
    CHECK(sign_condition(p, 0, d) == doctest::Approx(want).epsilon(1e-12));
    Tensor bad({3});
    CHECK_THROWS_AS(sign_condition(p, 0, bad), Error);
}

namespace {

struct Fixture {
    Model model;
    Dataset data;
    GradientProfile profile;
};

// model whose inner layer has an exactly rank-r weight
Fixture low_rank_fixture(std::size_t true_rank, std::uint64_t seed) {
    Rng rng(seed);
    Fixture f;
    f.model.layers.resize(2);
    f.model.layers[0].weight = random_matrix(4, 12, rng, 0.3);
    f.model.layers[0].bias = Tensor({4});
    f.model.layers[0].activation = Activation::Identity;
    f.model.layers[1].weight = exact_rank_matrix(12, 16, true_rank, rng);
    for (double& v : f.model.layers[1].weight.data) v *= 0.3;
    f.model.layers[1].bias = Tensor({12});
    f.model.layers[1].activation = Activation::ReLU;
    f.model.validate();
    f.data.inputs = Tensor({40, 16});
    for (double& v : f.data.inputs.data) v = rng.normal();
    for (int i = 0; i < 40; ++i) f.data.labels.push_back(static_cast<int>(rng.below(4)));
    f.profile = calibrate(f.model, f.data);
    return f;
}

}  // namespace

TEST_CASE("decompose_layer early-stops at the true rank") {
    for (std::size_t r : {1u, 3u, 5u}) {
        Fixture f = low_rank_fixture(r, 100 + r);
        LowRankOptions opts;
        RankSearchTrace trace;
        auto dec = decompose_layer(f.model, 1, f.profile, f.data, opts, &trace);
        REQUIRE(dec.has_value());
        CHECK(dec->factors.rank == r);
        CHECK(dec->factors.residual_fro < 1e-9);
        CHECK(trace.candidates.size() == r);  // stopped right at the true rank
        CHECK(trace.candidates.back().accepted);
        // recorded candidates satisfy the acceptance rule exactly
        for (const auto& c : trace.candidates)
            CHECK(c.accepted ==
                  (c.residual_fro <= opts.gamma &&
                   (c.sign_value < 0.0 || c.residual_fro <= opts.early_stop_tol)));
    }
}

TEST_CASE("gamma zero admits nothing") {
    Fixture f = low_rank_fixture(3, 7);
    LowRankOptions opts;
    opts.gamma = 0.0;
    auto dec = decompose_layer(f.model, 1, f.profile, f.data, opts);
    CHECK_FALSE(dec.has_value());
}

TEST_CASE("full-rank noise under a tiny gamma stays unfactored") {
    Rng rng(8);
    Fixture f = low_rank_fixture(3, 9);
    f.model.layers[1].weight = random_matrix(12, 16, rng, 0.3);  // full rank
    f.profile = calibrate(f.model, f.data);
    LowRankOptions opts;
    opts.gamma = 1e-12;
    DecomposeResult res = decompose_model(f.model, f.profile, f.data, opts);
    CHECK(res.factored.empty());
    CHECK(res.model.layers.size() == f.model.layers.size());
}

TEST_CASE("decompose_model factors exact low-rank layers losslessly") {
    Fixture f = low_rank_fixture(2, 11);
    // make the outer layer exactly low-rank too (but it is 4x12: cap is 2)
    Rng rng(12);
    f.model.layers[0].weight = exact_rank_matrix(4, 12, 1, rng);
    f.profile = calibrate(f.model, f.data);
    double before = mean_loss(f.model, f.data);

    LowRankOptions opts;
    DecomposeResult res = decompose_model(f.model, f.profile, f.data, opts);
    // only layer 2 (12x16, min >= 8) is eligible; layer 1 has min(N,M) = 4
    REQUIRE(res.factored.size() == 1);
    CHECK(res.factored[0].first == 2);
    CHECK(res.factored[0].second == 2);
    REQUIRE(res.model.layers.size() == 3);
    CHECK(res.model.layers[1].factor_part);
    CHECK(res.model.layers[2].factor_part);
    CHECK(res.model.layers[2].activation == Activation::Identity);
    CHECK(res.model.layers[1].activation == Activation::ReLU);

    double after = mean_loss(res.model, f.data);
    CHECK(std::abs(after - before) <= 1e-9);

    // parameter count strictly decreased: 12*16 = 192 -> 2*(12+16) = 56
    std::size_t before_count = 0, after_count = 0;
    for (const auto& l : f.model.layers) before_count += l.weight.size();
    for (const auto& l : res.model.layers) after_count += l.weight.size();
    CHECK(after_count < before_count);

    // factor halves are skipped on a second pass
    GradientProfile p2 = calibrate(res.model, f.data);
    DecomposeResult res2 = decompose_model(res.model, p2, f.data, opts);
    CHECK(res2.factored.empty());
}

TEST_CASE("factored evaluation equals the explicit product") {
    Fixture f = low_rank_fixture(2, 13);
    LowRankOptions opts;
    DecomposeResult res = decompose_model(f.model, f.profile, f.data, opts);
    REQUIRE(res.model.layers.size() == 3);
    Model explicit_model = f.model;
    explicit_model.layers[1].weight =
        product(res.model.layers[1].weight, res.model.layers[2].weight);
    ForwardResult a = forward(res.model, f.data.inputs);
    ForwardResult b = forward(explicit_model, f.data.inputs);
    for (std::size_t k = 0; k < a.logits.size(); ++k)
        CHECK(a.logits.data[k] == doctest::Approx(b.logits.data[k]).epsilon(1e-10));
}

TEST_CASE("trace json carries the per-rank curve") {
    Fixture f = low_rank_fixture(3, 14);
    LowRankOptions opts;
    RankSearchTrace trace;
    decompose_layer(f.model, 1, f.profile, f.data, opts, &trace);
    auto j = nlohmann::json::parse(traces_to_json({trace}));
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 1);
    CHECK(j[0]["layer"] == 2);
    CHECK(j[0]["chosen_rank"] == 3);
    REQUIRE(j[0]["candidates"].size() == 3);
    CHECK(j[0]["candidates"][2]["accepted"] == true);
}
