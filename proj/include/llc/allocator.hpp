#pragma once

#include <cstddef>
#include <vector>

#include "llc/tensor.hpp"

namespace llc {

/// Grouped knapsack instance: pick exactly one level per layer so that the
/// total byte size stays strictly under the capacity while the summed
/// predicted cost is minimized.
struct AllocationProblem {
    std::vector<std::vector<double>> P;       // n x k predicted loss costs
    std::vector<std::vector<std::size_t>> W;  // n x k byte sizes
    std::size_t capacity = 0;                 // strict upper bound on total bytes
    std::size_t granularity = 64;             // bytes per DP cell

    std::size_t layer_count() const { return P.size(); }
    std::size_t level_count() const { return P.empty() ? 0 : P[0].size(); }
    void validate() const;
    /// Smallest achievable total size (min W per group).
    std::size_t min_total_bytes() const;
};

struct Allocation {
    std::vector<std::size_t> choice;  // level index per layer
    double total_cost = 0.0;
    std::size_t total_bytes = 0;
};

/// Exact DP over cells of `granularity` bytes. Optimal at cell resolution
/// (exact whenever the granularity divides every W entry); ties broken by
/// smaller total bytes, then lexicographically smaller level indices.
/// Throws when even the smallest selection does not fit, naming the
/// minimum achievable size.
Allocation solve_group_knapsack(const AllocationProblem& prob);

/// Brute-force enumeration with identical tie-breaking and summation
/// order, used as a correctness oracle. Requires k^n <= 1e7.
Allocation exhaustive_allocation(const AllocationProblem& prob);

}  // namespace llc
