#pragma once

#include "ftau/domain.hpp"
#include "ftau/pace.hpp"

#include <cstdint>
#include <optional>

namespace ftau {

/// Knobs shared by both test entry points. All randomness (null-law
/// sampling, CV holdouts) derives from `seed`.
struct TestOptions {
    double fve = 0.95;
    std::int64_t mc_draws = 100000;
    std::uint64_t seed = 0;
    std::optional<double> alpha;  // when set, report carries the critical value
    int threads = 1;
};

/// Dense-path association test: concordance curve, T, projection
/// spectrum, Monte Carlo p-value against the truncated chi-square
/// mixture. A fully degenerate spectrum (constant projections) yields
/// p = 1 with a degeneracy flag instead of an error.
TestReport dense_test(const DenseSample& sample, const TestOptions& opts);

/// Sparse-path test: PACE fit, curve reconstruction on the output grid,
/// then the dense machinery on the reconstructed curves. The report
/// additionally carries K and the noise variance.
TestReport sparse_test(const SparseSample& sample, const SmootherConfig& cfg,
                       const TestOptions& opts,
                       std::optional<int> fixed_k = std::nullopt);

}  // namespace ftau
