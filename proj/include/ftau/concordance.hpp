#pragma once

#include "ftau/domain.hpp"

#include <cstdint>
#include <vector>

namespace ftau {

/// Exact pair counts at one grid point, over the n(n-1)/2 unordered pairs.
/// Concordant means (Y_i - Y_j)(X_i(t) - X_j(t)) > 0; pairs tied in Y or
/// in X(t) are neither concordant nor discordant and contribute 0.
struct PairCounts {
    std::int64_t concordant = 0;
    std::int64_t discordant = 0;
    std::int64_t tied_y = 0;     // pairs with Y_i == Y_j
    std::int64_t tied_x = 0;     // pairs with X_i(t) == X_j(t)
    std::int64_t tied_both = 0;  // tied in both
};

/// Tie diagnostics across the grid. The continuous-distribution theory
/// assumes no ties; a max tie fraction above 0.05 at any grid point is
/// worth flagging to the caller.
struct TieStats {
    std::int64_t tied_y_pairs = 0;
    std::int64_t max_tied_x_pairs = 0;
    double max_tie_fraction = 0.0;  // max over t of tied-pair share
};

/// U_n(t) on the sample grid by direct enumeration of all pairs:
/// (n choose 2)^-1 * #concordant - 0.5. O(n^2 m); reference path.
std::vector<double> u_curve(const DenseSample& sample);

/// Same output as u_curve, bitwise: counts concordant pairs per grid
/// point as exact integers via merge-sort inversion counting, O(m n log n),
/// then applies the identical final arithmetic.
std::vector<double> u_curve_fast(const DenseSample& sample);

/// T = integral of U_n^2 over [0,1] by trapezoidal quadrature.
double statistic_T(const std::vector<double>& u, const Grid& grid);

/// The n empirical projection curves
///   W_i(t) = n^-1 sum_j 1[(Y_i-Y_j)(X_i(t)-X_j(t)) > 0] - 0.5.
ProjectionSet projections(const DenseSample& sample);

/// Eigenvalues of the empirical covariance operator of the projections,
/// computed from the n x n Gram matrix M_ij = n^-1 <W_i, W_j> under
/// trapezoidal quadrature. Negative numerical eigenvalues are clamped to
/// zero; d is the smallest count whose cumulative share of the eigenvalue
/// sum reaches fve_target.
Spectrum spectrum(const ProjectionSet& proj, double fve_target = 0.95);

/// Per-grid-point exact pair counts (exposed for diagnostics and tests).
std::vector<PairCounts> pair_counts(const DenseSample& sample);

TieStats tie_stats(const DenseSample& sample);

}  // namespace ftau
