#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace llc {

/// Error type for all structured failures (dimension mismatches, parse
/// errors, infeasible problems). Messages name the offending layer, tensor
/// or byte offset.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Dense row-major tensor of 64-bit reals.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(count_of(shape), 0.0) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (count_of(shape) != data.size())
            throw Error("tensor: shape/data length mismatch");
    }

    static std::size_t count_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) {
            if (e == 0) throw Error("tensor: zero extent");
            n *= e;
        }
        return s.empty() ? 0 : n;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }
    bool is_matrix() const { return shape.size() == 2; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    /// Matrix [rows x cols] of zeros.
    static Tensor matrix(std::size_t r, std::size_t c) { return Tensor({r, c}); }
    static Tensor vec(std::size_t n) { return Tensor({n}); }

    bool all_finite() const;
    double max_abs() const;
    double l1_norm() const;
    double l2_norm() const;
    double frobenius() const { return l2_norm(); }
};

/// Flat inner product of two equally sized tensors.
double dot(const Tensor& a, const Tensor& b);

/// Deterministic pairwise summation; result is independent of how callers
/// chunk the input as long as element order is fixed.
double pairwise_sum(const double* x, std::size_t n);
double pairwise_sum(const std::vector<double>& x);

}  // namespace llc
