#include "llc/allocator.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace llc {

void AllocationProblem::validate() const {
    if (P.empty()) throw Error("allocation: empty problem");
    if (P.size() != W.size()) throw Error("allocation: P and W row counts differ");
    const std::size_t k = P[0].size();
    if (k == 0) throw Error("allocation: no levels");
    for (std::size_t i = 0; i < P.size(); ++i) {
        if (P[i].size() != k || W[i].size() != k)
            throw Error("allocation: ragged matrix at row " + std::to_string(i + 1));
        for (double p : P[i])
            if (!(p >= 0.0)) throw Error("allocation: negative or NaN cost");
    }
    if (capacity == 0) throw Error("allocation: zero capacity");
    if (granularity == 0) throw Error("allocation: zero granularity");
}

std::size_t AllocationProblem::min_total_bytes() const {
    std::size_t total = 0;
    for (const auto& row : W) {
        std::size_t best = row[0];
        for (std::size_t w : row) best = std::min(best, w);
        total += best;
    }
    return total;
}

namespace {

[[noreturn]] void throw_infeasible(const AllocationProblem& prob) {
    throw Error("allocation infeasible: minimum achievable size is " +
                std::to_string(prob.min_total_bytes()) + " bytes, capacity " +
                std::to_string(prob.capacity) +
                " requires strictly smaller total");
}

struct CellValue {
    double cost = std::numeric_limits<double>::infinity();
    std::size_t bytes = std::numeric_limits<std::size_t>::max();
    bool feasible() const { return std::isfinite(cost); }
    bool operator<(const CellValue& o) const {
        if (cost != o.cost) return cost < o.cost;
        return bytes < o.bytes;
    }
};

std::size_t cell_weight(std::size_t bytes, std::size_t g) { return (bytes + g - 1) / g; }

}  // namespace

Allocation solve_group_knapsack(const AllocationProblem& prob) {
    prob.validate();
    const std::size_t n = prob.layer_count(), k = prob.level_count(), g = prob.granularity;
    // Sigma(cw) <= cells guarantees Sigma(W) <= g*cells <= capacity-1 < capacity.
    const std::size_t cells = (prob.capacity - 1) / g;

    // best[i][c]: optimal (cost, bytes) over layers i..n-1 using at most c cells;
    // costs accumulate back-to-front so value comparisons against the
    // exhaustive oracle are bit-exact.
    std::vector<std::vector<CellValue>> best(n + 1,
                                             std::vector<CellValue>(cells + 1));
    for (auto& v : best[n]) v = CellValue{0.0, 0};
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t c = 0; c <= cells; ++c) {
            CellValue& dst = best[i][c];
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t cw = cell_weight(prob.W[i][j], g);
                if (cw > c) continue;
                const CellValue& rest = best[i + 1][c - cw];
                if (!rest.feasible()) continue;
                CellValue cand{prob.P[i][j] + rest.cost, prob.W[i][j] + rest.bytes};
                if (cand < dst) dst = cand;
            }
        }
    }
    if (!best[0][cells].feasible()) throw_infeasible(prob);

    Allocation alloc;
    alloc.choice.resize(n);
    std::size_t c = cells;
    for (std::size_t i = 0; i < n; ++i) {
        const CellValue& want = best[i][c];
        bool found = false;
        for (std::size_t j = 0; j < k && !found; ++j) {
            const std::size_t cw = cell_weight(prob.W[i][j], g);
            if (cw > c) continue;
            const CellValue& rest = best[i + 1][c - cw];
            if (!rest.feasible()) continue;
            if (prob.P[i][j] + rest.cost == want.cost &&
                prob.W[i][j] + rest.bytes == want.bytes) {
                alloc.choice[i] = j;
                c -= cw;
                found = true;
            }
        }
        if (!found) throw Error("allocation: DP reconstruction failed");  // unreachable
    }
    alloc.total_bytes = best[0][cells].bytes;
    alloc.total_cost = best[0][cells].cost;
    return alloc;
}

Allocation exhaustive_allocation(const AllocationProblem& prob) {
    prob.validate();
    const std::size_t n = prob.layer_count(), k = prob.level_count();
    double combos = std::pow(static_cast<double>(k), static_cast<double>(n));
    if (combos > 1e7) throw Error("exhaustive_allocation: instance too large (k^n > 1e7)");

    std::vector<std::size_t> choice(n, 0);
    Allocation best;
    bool have = false;
    for (;;) {
        std::size_t bytes = 0;
        for (std::size_t i = 0; i < n; ++i) bytes += prob.W[i][choice[i]];
        if (bytes < prob.capacity) {
            // back-to-front, matching the DP's accumulation order exactly
            double cost = 0.0;
            for (std::size_t i = n; i-- > 0;) cost = prob.P[i][choice[i]] + cost;
            bool better = !have;
            if (have) {
                if (cost != best.total_cost)
                    better = cost < best.total_cost;
                else if (bytes != best.total_bytes)
                    better = bytes < best.total_bytes;
                else
                    better = choice < best.choice;
            }
            if (better) {
                best.choice = choice;
                best.total_cost = cost;
                best.total_bytes = bytes;
                have = true;
            }
        }
        // odometer increment, last layer fastest
        std::size_t pos = n;
        while (pos-- > 0) {
            if (++choice[pos] < k) break;
            choice[pos] = 0;
            if (pos == 0) {
                if (!have) throw_infeasible(prob);
                return best;
            }
        }
    }
}

}  // namespace llc
