#pragma once

#include <cmath>

namespace llc {

/// One-sided rounding direction. Positive snaps toward +inf (error in
/// [0, scale)), Negative toward -inf (error in (-scale, 0]).
enum class RoundDir { Positive, Negative };

/// Snap x onto the uniform grid {m * scale}. The grid is not clipped:
/// one-sidedness of the error is exact for every element, which the
/// sign-opposition mechanism relies on. Quantization is simulated, so
/// range saturation is not modelled.
inline double snap_to_grid(double x, double scale, RoundDir dir) {
    double g = x / scale;
    double m = dir == RoundDir::Positive ? std::ceil(g) : std::floor(g);
    return m * scale;
}

}  // namespace llc
