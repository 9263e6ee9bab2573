#include "ftau/nulldist.hpp"

#include "ftau/errors.hpp"
#include "ftau/parallel.hpp"
#include "ftau/rng.hpp"

#include <algorithm>
#include <cmath>

namespace ftau {

namespace {

constexpr std::int64_t shard_size = 1 << 16;

void validate(const MixtureSampler& s) {
    if (s.eigenvalues.empty()) throw ValidationError("mixture needs at least one eigenvalue");
    for (double v : s.eigenvalues)
        if (!(v >= 0.0)) throw ValidationError("mixture eigenvalues must be nonnegative");
    if (s.draws < 1000) throw ValidationError("mixture sampler needs at least 1000 draws");
}

}  // namespace

std::vector<double> sample_mixture(const MixtureSampler& sampler) {
    validate(sampler);
    const std::int64_t draws = sampler.draws;
    const std::int64_t shards = (draws + shard_size - 1) / shard_size;
    std::vector<double> out(static_cast<std::size_t>(draws));

    parallel_for(static_cast<std::size_t>(shards), sampler.threads, [&](std::size_t shard) {
        Rng rng(derive_seed(sampler.seed, shard));
        const std::int64_t lo = static_cast<std::int64_t>(shard) * shard_size;
        const std::int64_t hi = std::min(draws, lo + shard_size);
        for (std::int64_t i = lo; i < hi; ++i) {
            double acc = 0.0;
            for (double lambda : sampler.eigenvalues) {
                const double z = rng.normal();
                acc += lambda * (z * z);
            }
            out[static_cast<std::size_t>(i)] = acc;
        }
    });
    return out;
}

PValue p_value_from_draws(const std::vector<double>& draws, double statistic) {
    std::int64_t exceed = 0;
    for (double v : draws) exceed += (v >= statistic);
    const double n = static_cast<double>(draws.size());
    PValue out;
    out.p = (1.0 + static_cast<double>(exceed)) / (n + 1.0);
    out.mc_se = std::sqrt(out.p * (1.0 - out.p) / n);
    return out;
}

PValue p_value(double statistic, const MixtureSampler& sampler) {
    if (!(statistic >= 0.0)) throw ValidationError("statistic must be nonnegative");
    return p_value_from_draws(sample_mixture(sampler), statistic);
}

double critical_value_from_draws(std::vector<double> draws, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    const std::int64_t n = static_cast<std::int64_t>(draws.size());
    // smallest order statistic covering at least (1-alpha) of the draws
    std::int64_t rank = static_cast<std::int64_t>(
        std::ceil((1.0 - alpha) * static_cast<double>(n)));
    rank = std::clamp<std::int64_t>(rank, 1, n);
    auto nth = draws.begin() + static_cast<std::ptrdiff_t>(rank - 1);
    std::nth_element(draws.begin(), nth, draws.end());
    return *nth;
}

double critical_value(double alpha, const MixtureSampler& sampler) {
    return critical_value_from_draws(sample_mixture(sampler), alpha);
}

}  // namespace ftau
