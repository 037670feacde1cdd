#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "llc/rng.hpp"
#include "llc/tensor.hpp"

using namespace llc;

TEST_CASE("tensor construction and indexing") {
    Tensor m = Tensor::matrix(2, 3);
    CHECK(m.size() == 6);
    m.at(1, 2) = 5.0;
    CHECK(m.data[5] == 5.0);
    CHECK(m.at(1, 2) == 5.0);

    CHECK_THROWS_AS(Tensor({2, 0}), Error);
    CHECK_THROWS_AS(Tensor({3}, {1.0, 2.0}), Error);
}

TEST_CASE("norms") {
    Tensor t({4}, {3.0, -4.0, 0.0, 1.0});
    CHECK(t.max_abs() == 4.0);
    CHECK(t.l1_norm() == 8.0);
    CHECK(t.l2_norm() == doctest::Approx(std::sqrt(26.0)).epsilon(1e-15));
    CHECK(t.frobenius() == t.l2_norm());
    CHECK(t.all_finite());
    t.data[2] = std::nan("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("dot product") {
    Tensor a({3}, {1.0, 2.0, 3.0});
    Tensor b({3}, {4.0, -5.0, 6.0});
    CHECK(dot(a, b) == doctest::Approx(12.0).epsilon(1e-15));
    Tensor c({2}, {1.0, 1.0});
    CHECK_THROWS_AS(dot(a, c), Error);
}

TEST_CASE("pairwise summation agrees with long double accumulation") {
    Rng rng(11);
    std::vector<double> xs(10001);
    for (double& x : xs) x = rng.normal() * 1e6;
    long double acc = 0.0L;
    for (double x : xs) acc += x;
    double ref = static_cast<double>(acc);
    CHECK(pairwise_sum(xs) == doctest::Approx(ref).epsilon(1e-14));
}

TEST_CASE("pairwise summation is split-invariant") {
    // summing a prefix tree and combining must match one flat call, which is
    // what makes chunked parallel reductions deterministic
    Rng rng(3);
    std::vector<double> xs(4096);
    for (double& x : xs) x = rng.uniform() - 0.5;
    double flat = pairwise_sum(xs);
    double halves = pairwise_sum(xs.data(), 2048) + pairwise_sum(xs.data() + 2048, 2048);
    CHECK(flat == halves);
}

TEST_CASE("rng determinism and shuffle is a permutation") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    std::vector<int> v(57);
    std::iota(v.begin(), v.end(), 0);
    Rng r(9);
    r.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 57; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("rng normal moments") {
    Rng rng(123);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        s1 += x;
        s2 += x * x;
    }
    CHECK(std::abs(s1 / n) < 0.01);
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.01));
}
