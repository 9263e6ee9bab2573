#include "ftau/pipeline.hpp"

#include "ftau/concordance.hpp"
#include "ftau/errors.hpp"
#include "ftau/nulldist.hpp"
#include "ftau/rng.hpp"

#include <algorithm>

namespace ftau {

namespace {

constexpr std::uint64_t stream_mc = 1;
constexpr std::uint64_t stream_cv = 2;

TestReport run_dense_machinery(const DenseSample& sample, const TestOptions& opts,
                               std::uint64_t mc_seed) {
    if (!(opts.fve > 0.0 && opts.fve <= 1.0))
        throw ValidationError("fve must lie in (0, 1]");

    const auto u = u_curve_fast(sample);
    const double t_stat = statistic_T(u, sample.grid);
    const auto proj = projections(sample);
    const Spectrum full = spectrum(proj, opts.fve);

    TestReport report;
    report.statistic = t_stat;
    report.eigenvalues_used.d = full.d;
    report.eigenvalues_used.fve = full.fve;
    report.eigenvalues_used.eigenvalues.assign(full.eigenvalues.begin(),
                                               full.eigenvalues.begin() +
                                                   static_cast<std::ptrdiff_t>(full.d));

    const auto ties = tie_stats(sample);
    report.diagnostics["n"] = static_cast<double>(sample.n());
    report.diagnostics["m"] = static_cast<double>(sample.m());
    report.diagnostics["d"] = static_cast<double>(full.d);
    report.diagnostics["tied_y_pairs"] = static_cast<double>(ties.tied_y_pairs);
    report.diagnostics["max_tied_x_pairs"] = static_cast<double>(ties.max_tied_x_pairs);
    report.diagnostics["max_tie_fraction"] = ties.max_tie_fraction;
    report.diagnostics["tie_warning"] = ties.max_tie_fraction > 0.05 ? 1.0 : 0.0;
    report.diagnostics["seed"] = static_cast<double>(opts.seed);

    if (full.degenerate()) {
        report.p_value = 1.0;
        report.p_value_mc_se = 0.0;
        report.diagnostics["degenerate_spectrum"] = 1.0;
        if (opts.alpha) {
            report.alpha = opts.alpha;
            report.alpha_critical = 0.0;
            report.reject = false;
        }
        return report;
    }
    report.diagnostics["degenerate_spectrum"] = 0.0;

    MixtureSampler sampler;
    sampler.eigenvalues = report.eigenvalues_used.eigenvalues;
    sampler.draws = opts.mc_draws;
    sampler.seed = mc_seed;
    sampler.threads = opts.threads;
    const auto draws = sample_mixture(sampler);

    const PValue pv = p_value_from_draws(draws, t_stat);
    report.p_value = pv.p;
    report.p_value_mc_se = pv.mc_se;
    if (opts.alpha) {
        report.alpha = opts.alpha;
        report.alpha_critical = critical_value_from_draws(draws, *opts.alpha);
        report.reject = t_stat > *report.alpha_critical;
    }
    return report;
}

}  // namespace

TestReport dense_test(const DenseSample& sample, const TestOptions& opts) {
    return run_dense_machinery(sample, opts, derive_seed(opts.seed, stream_mc));
}

TestReport sparse_test(const SparseSample& sample, const SmootherConfig& cfg,
                       const TestOptions& opts, std::optional<int> fixed_k) {
    const FpcaModel model = fit(sample, cfg, fixed_k, derive_seed(opts.seed, stream_cv));

    const ScorePredictor predictor(model, sample);
    std::vector<std::vector<double>> scores;
    scores.reserve(sample.n());
    for (std::size_t i = 0; i < sample.n(); ++i)
        scores.push_back(predictor.conditional_scores(i));

    DenseSample reconstructed;
    reconstructed.grid = model.grid;
    reconstructed.curves = reconstruct(model, scores);
    reconstructed.responses = sample.responses;

    TestReport report = run_dense_machinery(reconstructed, opts, derive_seed(opts.seed, stream_mc));
    report.diagnostics["K"] = static_cast<double>(model.K);
    report.diagnostics["K_from_cv"] = model.k_from_cv ? 1.0 : 0.0;
    report.diagnostics["sigma2"] = model.sigma2;
    report.diagnostics["output_grid_size"] = static_cast<double>(model.grid.size());
    report.diagnostics["n"] = static_cast<double>(sample.n());
    return report;
}

}  // namespace ftau
