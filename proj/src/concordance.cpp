#include "ftau/concordance.hpp"

#include "ftau/errors.hpp"
#include "ftau/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>

namespace ftau {

namespace {

// Sign of (a - b) without forming the difference: -1, 0, +1.
inline int cmp_sign(double a, double b) { return (a > b) - (a < b); }

inline std::int64_t half_pairs(std::int64_t n) { return n * (n - 1) / 2; }

// Counts strict inversions (i < j, a[i] > a[j]) with bottom-up merge sort.
std::int64_t count_inversions(std::vector<double>& a, std::vector<double>& scratch) {
    const std::size_t n = a.size();
    std::int64_t inversions = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t lo = 0; lo + width < n; lo += 2 * width) {
            const std::size_t mid = lo + width;
            const std::size_t hi = std::min(lo + 2 * width, n);
            std::size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (a[i] <= a[j]) {
                    scratch[k++] = a[i++];
                } else {
                    inversions += static_cast<std::int64_t>(mid - i);
                    scratch[k++] = a[j++];
                }
            }
            while (i < mid) scratch[k++] = a[i++];
            while (j < hi) scratch[k++] = a[j++];
            std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo),
                      scratch.begin() + static_cast<std::ptrdiff_t>(hi),
                      a.begin() + static_cast<std::ptrdiff_t>(lo));
        }
    }
    return inversions;
}

// Pairs lying inside runs of equal values of a sorted range.
std::int64_t tied_pairs_sorted(const std::vector<double>& sorted) {
    std::int64_t tied = 0;
    std::size_t run = 1;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i] == sorted[i - 1]) {
            ++run;
        } else {
            tied += half_pairs(static_cast<std::int64_t>(run));
            run = 1;
        }
    }
    tied += half_pairs(static_cast<std::int64_t>(run));
    return tied;
}

}  // namespace

std::vector<double> u_curve(const DenseSample& sample) {
    const Eigen::Index n = sample.n();
    const Eigen::Index m = sample.m();
    const double total = static_cast<double>(half_pairs(n));
    std::vector<double> u(static_cast<std::size_t>(m), 0.0);
    for (Eigen::Index t = 0; t < m; ++t) {
        std::int64_t concordant = 0;
        const auto col = sample.curves.col(t);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const int sy = cmp_sign(sample.responses(i), sample.responses(j));
                const int sx = cmp_sign(col(i), col(j));
                concordant += (sy * sx > 0);
            }
        }
        u[static_cast<std::size_t>(t)] = static_cast<double>(concordant) / total - 0.5;
    }
    return u;
}

std::vector<PairCounts> pair_counts(const DenseSample& sample) {
    const Eigen::Index n = sample.n();
    const Eigen::Index m = sample.m();
    const std::int64_t total = half_pairs(n);

    // Order subjects by Y once; Y-tie groups are contiguous in this order.
    std::vector<Eigen::Index> by_y(static_cast<std::size_t>(n));
    std::iota(by_y.begin(), by_y.end(), Eigen::Index{0});
    std::sort(by_y.begin(), by_y.end(), [&](Eigen::Index a, Eigen::Index b) {
        return sample.responses(a) < sample.responses(b);
    });
    std::vector<std::pair<std::size_t, std::size_t>> y_groups;  // [begin, end)
    std::int64_t tied_y = 0;
    for (std::size_t begin = 0; begin < by_y.size();) {
        std::size_t end = begin + 1;
        while (end < by_y.size() &&
               sample.responses(by_y[end]) == sample.responses(by_y[begin]))
            ++end;
        y_groups.emplace_back(begin, end);
        tied_y += half_pairs(static_cast<std::int64_t>(end - begin));
        begin = end;
    }

    std::vector<PairCounts> counts(static_cast<std::size_t>(m));
    std::vector<double> x(static_cast<std::size_t>(n));
    std::vector<double> scratch(static_cast<std::size_t>(n));
    std::vector<double> x_sorted(static_cast<std::size_t>(n));
    for (Eigen::Index t = 0; t < m; ++t) {
        const auto col = sample.curves.col(t);
        for (std::size_t k = 0; k < by_y.size(); ++k) x[k] = col(by_y[k]);

        // Secondary sort within Y-tie groups: ties then contribute no
        // inversions, so the merge count is exactly the discordant count.
        std::int64_t tied_both = 0;
        for (const auto& [begin, end] : y_groups) {
            if (end - begin > 1) {
                std::sort(x.begin() + static_cast<std::ptrdiff_t>(begin),
                          x.begin() + static_cast<std::ptrdiff_t>(end));
                std::vector<double> group(x.begin() + static_cast<std::ptrdiff_t>(begin),
                                          x.begin() + static_cast<std::ptrdiff_t>(end));
                tied_both += tied_pairs_sorted(group);
            }
        }

        x_sorted = x;
        std::sort(x_sorted.begin(), x_sorted.end());
        const std::int64_t tied_x = tied_pairs_sorted(x_sorted);

        const std::int64_t discordant = count_inversions(x, scratch);
        PairCounts& pc = counts[static_cast<std::size_t>(t)];
        pc.discordant = discordant;
        pc.tied_y = tied_y;
        pc.tied_x = tied_x;
        pc.tied_both = tied_both;
        pc.concordant = total - discordant - tied_y - tied_x + tied_both;
    }
    return counts;
}

std::vector<double> u_curve_fast(const DenseSample& sample) {
    const double total = static_cast<double>(half_pairs(sample.n()));
    const auto counts = pair_counts(sample);
    std::vector<double> u(counts.size());
    for (std::size_t t = 0; t < counts.size(); ++t)
        u[t] = static_cast<double>(counts[t].concordant) / total - 0.5;
    return u;
}

double statistic_T(const std::vector<double>& u, const Grid& grid) {
    if (u.size() != grid.size()) throw ValidationError("u length does not match grid");
    const auto w = trapezoid_weights(grid.points);
    double acc = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) acc += w[j] * u[j] * u[j];
    return acc;
}

ProjectionSet projections(const DenseSample& sample) {
    const Eigen::Index n = sample.n();
    const Eigen::Index m = sample.m();
    const double inv_n = 1.0 / static_cast<double>(n);
    ProjectionSet out;
    out.grid = sample.grid;
    out.projections.resize(n, m);
    std::vector<std::int64_t> partners(static_cast<std::size_t>(n));
    for (Eigen::Index t = 0; t < m; ++t) {
        std::fill(partners.begin(), partners.end(), std::int64_t{0});
        const auto col = sample.curves.col(t);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const int sy = cmp_sign(sample.responses(i), sample.responses(j));
                const int sx = cmp_sign(col(i), col(j));
                if (sy * sx > 0) {
                    // the indicator is symmetric under swapping i and j
                    ++partners[static_cast<std::size_t>(i)];
                    ++partners[static_cast<std::size_t>(j)];
                }
            }
        }
        for (Eigen::Index i = 0; i < n; ++i)
            out.projections(i, t) =
                static_cast<double>(partners[static_cast<std::size_t>(i)]) * inv_n - 0.5;
    }
    return out;
}

Spectrum spectrum(const ProjectionSet& proj, double fve_target) {
    if (!(fve_target > 0.0 && fve_target <= 1.0))
        throw ValidationError("fve_target must lie in (0, 1]");
    const Eigen::Index n = proj.projections.rows();
    if (n < 1) throw ValidationError("projection set is empty");

    const auto w = trapezoid_weights(proj.grid.points);
    Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    Eigen::MatrixXd gram =
        proj.projections * q.asDiagonal() * proj.projections.transpose() / static_cast<double>(n);
    gram = 0.5 * (gram + gram.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalError("Gram eigendecomposition failed");

    std::vector<double> ev(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    for (double& v : ev) v = std::max(v, 0.0);

    const double total = std::accumulate(ev.begin(), ev.end(), 0.0);
    Spectrum s;
    if (total <= 0.0) {
        s.eigenvalues = {0.0};
        s.d = 1;
        s.fve = 1.0;
        return s;
    }
    s.eigenvalues = std::move(ev);
    double cum = 0.0;
    s.d = s.eigenvalues.size();
    for (std::size_t k = 0; k < s.eigenvalues.size(); ++k) {
        cum += s.eigenvalues[k];
        if (cum >= (fve_target - 1e-12) * total) {
            s.d = k + 1;
            s.fve = cum / total;
            break;
        }
    }
    if (s.d == s.eigenvalues.size()) s.fve = 1.0;
    return s;
}

TieStats tie_stats(const DenseSample& sample) {
    const auto counts = pair_counts(sample);
    const double total = static_cast<double>(half_pairs(sample.n()));
    TieStats stats;
    if (counts.empty()) return stats;
    stats.tied_y_pairs = counts.front().tied_y;
    for (const auto& pc : counts) {
        stats.max_tied_x_pairs = std::max(stats.max_tied_x_pairs, pc.tied_x);
        const double frac =
            static_cast<double>(pc.tied_y + pc.tied_x - pc.tied_both) / total;
        stats.max_tie_fraction = std::max(stats.max_tie_fraction, frac);
    }
    return stats;
}

}  // namespace ftau
