#pragma once

#include <cstdint>
#include <vector>

namespace ftau {

/// Monte Carlo sampler for the truncated null law sum_k lambda_k N_k^2
/// with N_k independent standard normals.
///
/// Draws are generated in fixed-size shards whose substreams derive from
/// (seed, shard index), so the concatenated stream is a deterministic
/// function of the seed no matter how many workers run.
struct MixtureSampler {
    std::vector<double> eigenvalues;  // nonnegative, at least one entry
    std::int64_t draws = 100000;      // >= 1000
    std::uint64_t seed = 0;
    int threads = 1;
};

/// i.i.d. draws of the weighted chi-square mixture. Deterministic given
/// (eigenvalues, draws, seed); independent of `threads`.
std::vector<double> sample_mixture(const MixtureSampler& sampler);

struct PValue {
    double p = 1.0;
    double mc_se = 0.0;
};

/// Add-one Monte Carlo p-value: (1 + #{draws >= statistic}) / (draws + 1),
/// never exactly zero. mc_se = sqrt(p(1-p)/draws).
PValue p_value(double statistic, const MixtureSampler& sampler);
PValue p_value_from_draws(const std::vector<double>& draws, double statistic);

/// Empirical 100(1-alpha) percentile of the sampled mixture.
double critical_value(double alpha, const MixtureSampler& sampler);
double critical_value_from_draws(std::vector<double> draws, double alpha);

}  // namespace ftau
