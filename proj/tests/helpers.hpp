#pragma once

#include "ftau/domain.hpp"
#include "ftau/rng.hpp"

#include <cmath>
#include <vector>

namespace ftau::test {

/// Random dense instance on a uniform grid. With `lattice` > 0, curve
/// values and responses are drawn from a small integer lattice so ties
/// in Y and in X(t) are frequent.
inline DenseSample random_dense(Rng& rng, int n, int m, int lattice = 0) {
    DenseSample s;
    s.grid = uniform_grid(m);
    s.curves.resize(n, m);
    s.responses.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j)
            s.curves(i, j) = lattice > 0
                                 ? static_cast<double>(rng.below(static_cast<std::uint64_t>(lattice)))
                                 : rng.normal();
        s.responses(i) = lattice > 0
                             ? static_cast<double>(rng.below(static_cast<std::uint64_t>(lattice)))
                             : rng.normal();
    }
    return s;
}

/// Compensated (Kahan) summation, used where identities are asserted at
/// 1e-12 scale.
inline double kahan_sum(const std::vector<double>& xs) {
    double sum = 0.0, c = 0.0;
    for (double x : xs) {
        const double y = x - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    return sum;
}

}  // namespace ftau::test
