#pragma once

#include <span>
#include <vector>

namespace ftau {

/// Trapezoidal quadrature weights for an increasing grid. This is the
/// one integration rule used for every L2 inner product and norm on
/// gridded functions in this library.
inline std::vector<double> trapezoid_weights(std::span<const double> points) {
    const std::size_t m = points.size();
    std::vector<double> w(m, 0.0);
    if (m < 2) return w;
    w[0] = 0.5 * (points[1] - points[0]);
    for (std::size_t j = 1; j + 1 < m; ++j) w[j] = 0.5 * (points[j + 1] - points[j - 1]);
    w[m - 1] = 0.5 * (points[m - 1] - points[m - 2]);
    return w;
}

inline double trapezoid_integral(std::span<const double> values,
                                 std::span<const double> weights) {
    double acc = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) acc += weights[j] * values[j];
    return acc;
}

}  // namespace ftau
