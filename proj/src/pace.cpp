#include "ftau/pace.hpp"

#include "ftau/errors.hpp"
#include "ftau/quadrature.hpp"
#include "ftau/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ftau {

namespace {

void check_config(const SmootherConfig& cfg) {
    if (cfg.output_grid_size < 10)
        throw ValidationError("output_grid_size must be at least 10");
    if (cfg.mean_bandwidth && !(*cfg.mean_bandwidth > 0.0))
        throw ValidationError("mean bandwidth must be positive");
    if (cfg.cov_bandwidth && !(*cfg.cov_bandwidth > 0.0))
        throw ValidationError("covariance bandwidth must be positive");
}

// Pooled 1-D scatter, sorted by time. `subject` drives the CV folds.
struct Scatter1 {
    std::vector<double> t, z;
    std::vector<int> subject;

    void sort_by_time() {
        std::vector<std::size_t> order(t.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });
        apply_order(order);
    }
    void apply_order(const std::vector<std::size_t>& order) {
        Scatter1 tmp;
        tmp.t.reserve(order.size());
        tmp.z.reserve(order.size());
        tmp.subject.reserve(order.size());
        for (std::size_t k : order) {
            tmp.t.push_back(t[k]);
            tmp.z.push_back(z[k]);
            tmp.subject.push_back(subject[k]);
        }
        *this = std::move(tmp);
    }
};

// Raw covariance scatter (s, t, cross-product), sorted by s.
struct Scatter2 {
    std::vector<double> s, t, z;
    std::vector<int> subject;

    void sort_by_s() {
        std::vector<std::size_t> order(s.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
        Scatter2 tmp;
        tmp.s.reserve(order.size());
        tmp.t.reserve(order.size());
        tmp.z.reserve(order.size());
        tmp.subject.reserve(order.size());
        for (std::size_t k : order) {
            tmp.s.push_back(s[k]);
            tmp.t.push_back(t[k]);
            tmp.z.push_back(z[k]);
            tmp.subject.push_back(subject[k]);
        }
        *this = std::move(tmp);
    }
};

// Local linear fit at x0 with Epanechnikov weights (constant factor
// dropped; it cancels in the weighted least squares). Requires two or
// more points with positive weight; a window whose design is degenerate
// (all points at one time) falls back to the local constant fit.
std::optional<double> loclin1(const std::vector<double>& ts, const std::vector<double>& zs,
                              double x0, double h) {
    auto lo = std::lower_bound(ts.begin(), ts.end(), x0 - h);
    auto hi = std::upper_bound(lo, ts.end(), x0 + h);
    double s0 = 0, s1 = 0, s2 = 0, r0 = 0, r1 = 0;
    int cnt = 0;
    for (auto it = lo; it != hi; ++it) {
        const double u = (*it - x0) / h;
        const double w = 1.0 - u * u;
        if (w <= 0.0) continue;
        const double d = *it - x0;
        const double zz = zs[static_cast<std::size_t>(it - ts.begin())];
        s0 += w;
        s1 += w * d;
        s2 += w * d * d;
        r0 += w * zz;
        r1 += w * d * zz;
        ++cnt;
    }
    if (cnt < 2) return std::nullopt;
    const double den = s0 * s2 - s1 * s1;
    if (!(den > 1e-12 * (s0 * s2 + s1 * s1))) return r0 / s0;
    return (s2 * r0 - s1 * r1) / den;
}

// 2-D local linear fit at (s0, t0) with a product Epanechnikov kernel.
// Empty window yields nullopt; rank-deficient designs fall back to the
// local constant fit.
std::optional<double> loclin2(const Scatter2& sc, double s0, double t0, double h) {
    auto lo = std::lower_bound(sc.s.begin(), sc.s.end(), s0 - h);
    auto hi = std::upper_bound(lo, sc.s.end(), s0 + h);
    double s00 = 0, s10 = 0, s01 = 0, s20 = 0, s11 = 0, s02 = 0;
    double r00 = 0, r10 = 0, r01 = 0;
    int cnt = 0;
    for (auto it = lo; it != hi; ++it) {
        const std::size_t k = static_cast<std::size_t>(it - sc.s.begin());
        const double dt = sc.t[k] - t0;
        if (dt <= -h || dt >= h) continue;
        const double ds = *it - s0;
        const double us = ds / h;
        const double ut = dt / h;
        const double w = (1.0 - us * us) * (1.0 - ut * ut);
        if (w <= 0.0) continue;
        const double z = sc.z[k];
        s00 += w;
        s10 += w * ds;
        s01 += w * dt;
        s20 += w * ds * ds;
        s11 += w * ds * dt;
        s02 += w * dt * dt;
        r00 += w * z;
        r10 += w * z * ds;
        r01 += w * z * dt;
        ++cnt;
    }
    if (cnt < 1) return std::nullopt;
    // determinant of the 3x3 normal matrix
    const double det = s00 * (s20 * s02 - s11 * s11) - s10 * (s10 * s02 - s11 * s01) +
                       s01 * (s10 * s11 - s20 * s01);
    const double scale = s00 * s20 * s02 + s00 * s11 * s11 + s10 * s10 * s02 +
                         s01 * s01 * s20 + 2.0 * std::abs(s10 * s11 * s01);
    if (!(std::abs(det) > 1e-12 * scale)) return r00 / s00;
    // Cramer solve for the intercept only
    const double a = (r00 * (s20 * s02 - s11 * s11) - s10 * (r10 * s02 - s11 * r01) +
                      s01 * (r10 * s11 - s20 * r01)) /
                     det;
    return a;
}

std::vector<double> bandwidth_grid();

// Noise variance from the diagonal gap. For a within-subject pair at
// times (a, b), E[(r_a - r_b)^2] / 2 = sigma^2 + [G(m,m) - G(a,b)] up to
// smooth remainder terms: the same smoothed-diagonal-minus-surface gap
// the estimator targets, but with the large common curve component
// cancelled pairwise. Regressing the half squared differences on the
// squared time gap and reading the intercept extrapolates the process
// increment away. Pairs are restricted to midpoints in the central half
// of the domain to dodge boundary bias.
double sigma2_from_differences(const SparseSample& sample,
                               const std::vector<std::vector<double>>& resid) {
    std::vector<double> gap, half_sq;
    bool central_only = true;
    for (int pass = 0; pass < 2 && gap.empty(); ++pass) {
        for (std::size_t i = 0; i < sample.n(); ++i) {
            const auto& t = sample.subjects[i].times;
            for (std::size_t a = 0; a < t.size(); ++a) {
                for (std::size_t b = a + 1; b < t.size(); ++b) {
                    const double mid = 0.5 * (t[a] + t[b]);
                    if (central_only && (mid < 0.25 || mid > 0.75)) continue;
                    const double diff = resid[i][a] - resid[i][b];
                    gap.push_back(std::abs(t[a] - t[b]));
                    half_sq.push_back(0.5 * diff * diff);
                }
            }
        }
        central_only = false;
    }
    if (gap.empty()) return 0.0;

    const auto caps = bandwidth_grid();
    for (std::size_t c = 0; c < caps.size(); ++c) {
        const double cap = caps[c];
        double s0 = 0, sx = 0, sxx = 0, ry = 0, rxy = 0;
        int cnt = 0;
        for (std::size_t p = 0; p < gap.size(); ++p) {
            const double u = gap[p] / cap;
            const double w = 1.0 - u * u;
            if (w <= 0.0) continue;
            const double x = gap[p] * gap[p];
            s0 += w;
            sx += w * x;
            sxx += w * x * x;
            ry += w * half_sq[p];
            rxy += w * x * half_sq[p];
            ++cnt;
        }
        if (cnt < 30 && c + 1 < caps.size()) continue;
        if (cnt == 0) break;
        const double den = s0 * sxx - sx * sx;
        const double intercept =
            den > 1e-12 * (s0 * sxx + sx * sx) ? (sxx * ry - sx * rxy) / den : ry / s0;
        return std::max(0.0, intercept);
    }
    return 0.0;
}

std::vector<double> bandwidth_grid() {
    // geometric over [span/20, span/2]; the domain is rescaled to span 1
    std::vector<double> h(8);
    for (int j = 0; j < 8; ++j) h[static_cast<std::size_t>(j)] = 0.05 * std::pow(10.0, j / 7.0);
    return h;
}

constexpr int n_folds = 5;

// Mean bandwidth by 5-fold CV (folds by subject), then the one-SE rule:
// among candidates within one fold-level standard error of the minimum,
// take the largest. With flat mean functions the CV curve is flat up to
// noise and the strict argmin would wander into undersmoothing.
double select_bandwidth_1d(const Scatter1& pooled, const Grid& out) {
    std::vector<Scatter1> train(n_folds);
    std::vector<Scatter1> held(n_folds);
    for (std::size_t k = 0; k < pooled.t.size(); ++k) {
        const int f = pooled.subject[k] % n_folds;
        for (int g = 0; g < n_folds; ++g) {
            Scatter1& dst = (g == f) ? held[static_cast<std::size_t>(g)]
                                     : train[static_cast<std::size_t>(g)];
            dst.t.push_back(pooled.t[k]);
            dst.z.push_back(pooled.z[k]);
            dst.subject.push_back(pooled.subject[k]);
        }
    }

    struct Candidate {
        double h = 0.0;
        double cv = std::numeric_limits<double>::infinity();
        double se = 0.0;
    };
    std::vector<Candidate> feasible_set;
    for (double h : bandwidth_grid()) {
        bool feasible = true;
        for (double x0 : out.points) {
            if (!loclin1(pooled.t, pooled.z, x0, h)) {
                feasible = false;
                break;
            }
        }
        if (!feasible) continue;
        double fold_mean[n_folds];
        std::size_t active_folds = 0;
        double cv = 0.0;
        std::size_t count = 0;
        for (int f = 0; f < n_folds && feasible; ++f) {
            const auto& tr = train[static_cast<std::size_t>(f)];
            const auto& he = held[static_cast<std::size_t>(f)];
            if (he.t.empty()) continue;
            if (tr.t.empty()) {
                feasible = false;
                break;
            }
            double fold_sse = 0.0;
            std::size_t fold_n = 0;
            for (std::size_t k = 0; k < he.t.size(); ++k) {
                const auto pred = loclin1(tr.t, tr.z, he.t[k], h);
                if (!pred) {
                    feasible = false;
                    break;
                }
                const double e = he.z[k] - *pred;
                fold_sse += e * e;
                ++fold_n;
            }
            if (!feasible || fold_n == 0) continue;
            fold_mean[active_folds++] = fold_sse / static_cast<double>(fold_n);
            cv += fold_sse;
            count += fold_n;
        }
        if (!feasible || count == 0) continue;
        Candidate c;
        c.h = h;
        c.cv = cv / static_cast<double>(count);
        if (active_folds > 1) {
            double mean = 0.0;
            for (std::size_t f = 0; f < active_folds; ++f) mean += fold_mean[f];
            mean /= static_cast<double>(active_folds);
            double var = 0.0;
            for (std::size_t f = 0; f < active_folds; ++f)
                var += (fold_mean[f] - mean) * (fold_mean[f] - mean);
            var /= static_cast<double>(active_folds - 1);
            c.se = std::sqrt(var / static_cast<double>(active_folds));
        }
        feasible_set.push_back(c);
    }
    if (feasible_set.empty())
        throw NumericalError("mean bandwidth selection: no feasible bandwidth in [0.05, 0.5]");

    std::size_t best = 0;
    for (std::size_t i = 1; i < feasible_set.size(); ++i)
        if (feasible_set[i].cv < feasible_set[best].cv) best = i;
    double chosen = feasible_set[best].h;
    const double cutoff = feasible_set[best].cv + feasible_set[best].se;
    for (const auto& c : feasible_set)
        if (c.h > chosen && c.cv <= cutoff) chosen = c.h;
    return chosen;
}

double select_bandwidth_2d(const Scatter2& pairs, const Grid& out) {
    std::vector<Scatter2> train(n_folds);
    std::vector<Scatter2> held(n_folds);
    for (std::size_t k = 0; k < pairs.s.size(); ++k) {
        const int f = pairs.subject[k] % n_folds;
        for (int g = 0; g < n_folds; ++g) {
            Scatter2& dst = (g == f) ? held[static_cast<std::size_t>(g)]
                                     : train[static_cast<std::size_t>(g)];
            dst.s.push_back(pairs.s[k]);
            dst.t.push_back(pairs.t[k]);
            dst.z.push_back(pairs.z[k]);
            dst.subject.push_back(pairs.subject[k]);
        }
    }

    double best_h = 0.0;
    double best_cv = std::numeric_limits<double>::infinity();
    for (double h : bandwidth_grid()) {
        bool feasible = true;
        for (double s0 : out.points) {
            for (double t0 : out.points) {
                if (!loclin2(pairs, s0, t0, h)) {
                    feasible = false;
                    break;
                }
            }
            if (!feasible) break;
        }
        if (!feasible) continue;
        double cv = 0.0;
        std::size_t count = 0;
        for (int f = 0; f < n_folds && feasible; ++f) {
            const auto& tr = train[static_cast<std::size_t>(f)];
            const auto& he = held[static_cast<std::size_t>(f)];
            if (he.s.empty()) continue;
            if (tr.s.empty()) {
                feasible = false;
                break;
            }
            for (std::size_t k = 0; k < he.s.size(); ++k) {
                const auto pred = loclin2(tr, he.s[k], he.t[k], h);
                if (!pred) {
                    feasible = false;
                    break;
                }
                const double e = he.z[k] - *pred;
                cv += e * e;
                ++count;
            }
        }
        if (!feasible || count == 0) continue;
        cv /= static_cast<double>(count);
        if (cv < best_cv) {
            best_cv = cv;
            best_h = h;
        }
    }
    if (best_h == 0.0)
        throw NumericalError("covariance bandwidth selection: no feasible bandwidth in [0.05, 0.5]");
    return best_h;
}

}  // namespace

Grid output_grid(const SmootherConfig& cfg) {
    check_config(cfg);
    return uniform_grid(cfg.output_grid_size);
}

double lininterp(const Grid& grid, const Eigen::VectorXd& values, double t) {
    const auto& pts = grid.points;
    if (t <= pts.front()) return values(0);
    if (t >= pts.back()) return values(static_cast<Eigen::Index>(pts.size()) - 1);
    const auto it = std::upper_bound(pts.begin(), pts.end(), t);
    const std::size_t j = static_cast<std::size_t>(it - pts.begin());
    const double t0 = pts[j - 1], t1 = pts[j];
    const double u = (t - t0) / (t1 - t0);
    return values(static_cast<Eigen::Index>(j - 1)) * (1.0 - u) +
           values(static_cast<Eigen::Index>(j)) * u;
}

namespace {

Eigen::VectorXd estimate_mean_impl(const SparseSample& sample, const SmootherConfig& cfg,
                                   double* used_bw) {
    check_config(cfg);
    if (sample.total_observations() < 10)
        throw ValidationError("mean estimation needs at least 10 pooled observations");

    Scatter1 pooled;
    for (std::size_t i = 0; i < sample.n(); ++i) {
        const auto& s = sample.subjects[i];
        for (std::size_t j = 0; j < s.times.size(); ++j) {
            pooled.t.push_back(s.times[j]);
            pooled.z.push_back(s.values[j]);
            pooled.subject.push_back(static_cast<int>(i));
        }
    }
    pooled.sort_by_time();

    const Grid out = output_grid(cfg);
    const double h = cfg.mean_bandwidth ? *cfg.mean_bandwidth : select_bandwidth_1d(pooled, out);
    if (used_bw) *used_bw = h;

    Eigen::VectorXd mean(static_cast<Eigen::Index>(out.size()));
    for (std::size_t j = 0; j < out.size(); ++j) {
        const auto est = loclin1(pooled.t, pooled.z, out.points[j], h);
        if (!est) {
            std::ostringstream msg;
            msg << "mean smoother: fewer than 2 observations in the kernel window at t="
                << out.points[j] << " (bandwidth " << h << ")";
            throw NumericalError(msg.str());
        }
        mean(static_cast<Eigen::Index>(j)) = *est;
    }
    return mean;
}

}  // namespace

Eigen::VectorXd estimate_mean(const SparseSample& sample, const SmootherConfig& cfg) {
    return estimate_mean_impl(sample, cfg, nullptr);
}

CovarianceEstimate estimate_covariance(const SparseSample& sample,
                                       const Eigen::VectorXd& mean,
                                       const SmootherConfig& cfg) {
    check_config(cfg);
    const Grid out = output_grid(cfg);
    const std::size_t g = out.size();
    if (mean.size() != static_cast<Eigen::Index>(g))
        throw ValidationError("mean length does not match the output grid");

    // centered residuals per observation
    std::vector<std::vector<double>> resid(sample.n());
    for (std::size_t i = 0; i < sample.n(); ++i) {
        const auto& s = sample.subjects[i];
        resid[i].resize(s.times.size());
        for (std::size_t j = 0; j < s.times.size(); ++j)
            resid[i][j] = s.values[j] - lininterp(out, mean, s.times[j]);
    }

    Scatter2 pairs;
    for (std::size_t i = 0; i < sample.n(); ++i) {
        const auto& s = sample.subjects[i];
        const std::size_t ni = s.times.size();
        for (std::size_t a = 0; a < ni; ++a) {
            for (std::size_t b = 0; b < ni; ++b) {
                if (a == b && cfg.diag_exclusion) continue;
                pairs.s.push_back(s.times[a]);
                pairs.t.push_back(s.times[b]);
                pairs.z.push_back(resid[i][a] * resid[i][b]);
                pairs.subject.push_back(static_cast<int>(i));
            }
        }
    }
    if (pairs.s.empty()) throw ValidationError("no off-diagonal pairs available");
    pairs.sort_by_s();

    const double h = cfg.cov_bandwidth ? *cfg.cov_bandwidth : select_bandwidth_2d(pairs, out);

    CovarianceEstimate est;
    est.cov_bandwidth_used = h;
    est.surface.resize(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(g));
    for (std::size_t a = 0; a < g; ++a) {
        for (std::size_t b = 0; b < g; ++b) {
            const auto v = loclin2(pairs, out.points[a], out.points[b], h);
            if (!v) {
                std::ostringstream msg;
                msg << "covariance smoother: empty kernel window at (" << out.points[a] << ", "
                    << out.points[b] << ") with bandwidth " << h;
                throw NumericalError(msg.str());
            }
            est.surface(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = *v;
        }
    }
    est.surface = 0.5 * (est.surface + est.surface.transpose()).eval();

    est.sigma2 = sigma2_from_differences(sample, resid);
    return est;
}

EigenDecomposition eigendecompose(const Eigen::MatrixXd& surface, const Grid& grid, int k_max) {
    const Eigen::Index g = static_cast<Eigen::Index>(grid.size());
    if (surface.rows() != g || surface.cols() != g)
        throw ValidationError("surface dimensions do not match the grid");
    if (k_max < 1) throw ValidationError("k_max must be at least 1");
    if (k_max > g) throw ValidationError("k_max exceeds grid size");

    const auto w = trapezoid_weights(grid.points);
    Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(w.data(), g);
    Eigen::VectorXd qs = q.array().sqrt();

    Eigen::MatrixXd b = qs.asDiagonal() * (0.5 * (surface + surface.transpose())) * qs.asDiagonal();
    b = 0.5 * (b + b.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(b);
    if (solver.info() != Eigen::Success)
        throw NumericalError("covariance surface eigendecomposition failed");

    EigenDecomposition out;
    out.eigenvalues.resize(static_cast<std::size_t>(k_max));
    out.eigenfunctions.resize(k_max, g);
    for (int k = 0; k < k_max; ++k) {
        const Eigen::Index src = g - 1 - k;  // Eigen sorts ascending
        out.eigenvalues[static_cast<std::size_t>(k)] = std::max(0.0, solver.eigenvalues()(src));
        Eigen::VectorXd phi = solver.eigenvectors().col(src).cwiseQuotient(qs);
        const double integral = q.dot(phi);
        if (integral < -1e-8 || (std::abs(integral) <= 1e-8 && phi(0) < 0.0)) phi = -phi;
        out.eigenfunctions.row(k) = phi.transpose();
    }
    return out;
}

namespace {

// Sigma_G for one observation set from the model's eigen-expansion plus
// noise on the diagonal; ridged when the condition estimate blows up.
Eigen::MatrixXd observation_covariance(const FpcaModel& model, const Eigen::MatrixXd& phi,
                                       double sigma2) {
    const Eigen::Index n = phi.rows();
    Eigen::VectorXd gamma = Eigen::Map<const Eigen::VectorXd>(
        model.eigenvalues.data(), static_cast<Eigen::Index>(model.eigenvalues.size()));
    Eigen::MatrixXd sigma = phi * gamma.asDiagonal() * phi.transpose();
    sigma.diagonal().array() += sigma2;
    sigma = 0.5 * (sigma + sigma.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check(sigma, Eigen::EigenvaluesOnly);
    const double lo = check.eigenvalues().minCoeff();
    const double hi = check.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi > lo * 1e12) {
        const double ridge = 1e-8 * sigma.trace() / static_cast<double>(n);
        sigma.diagonal().array() += ridge > 0.0 ? ridge : 1e-12;
    }
    return sigma;
}

Eigen::VectorXd solve_observation_system(const FpcaModel& model, const Eigen::MatrixXd& phi,
                                         const Eigen::VectorXd& resid) {
    Eigen::MatrixXd sigma = observation_covariance(model, phi, model.sigma2);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma);
    if (ldlt.info() != Eigen::Success)
        throw NumericalError("subject covariance factorization failed even after ridge");
    Eigen::VectorXd w = ldlt.solve(resid);
    if (!w.allFinite())
        throw NumericalError("subject covariance numerically singular even after ridge");
    return w;
}

Eigen::MatrixXd interp_eigenfunctions(const FpcaModel& model, std::span<const double> times) {
    const int kmax = model.k_max();
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(times.size()), kmax);
    for (std::size_t j = 0; j < times.size(); ++j)
        for (int k = 0; k < kmax; ++k)
            phi(static_cast<Eigen::Index>(j), k) =
                lininterp(model.grid, model.eigenfunctions.row(k).transpose(), times[j]);
    return phi;
}

std::vector<double> scores_from_solution(const FpcaModel& model, const Eigen::MatrixXd& phi,
                                         const Eigen::VectorXd& w, int K) {
    const int kmax = model.k_max();
    std::vector<double> xi(static_cast<std::size_t>(K), 0.0);
    for (int k = 0; k < std::min(K, kmax); ++k)
        xi[static_cast<std::size_t>(k)] = model.eigenvalues[static_cast<std::size_t>(k)] *
                                          phi.col(k).dot(w);
    return xi;
}

}  // namespace

std::vector<double> conditional_scores_at(const FpcaModel& model,
                                          std::span<const double> times,
                                          std::span<const double> values, int K) {
    if (times.empty() || times.size() != values.size())
        throw ValidationError("conditional scores need a nonempty (times, values) set");
    if (K < 1) throw ValidationError("K must be at least 1");

    Eigen::VectorXd resid(static_cast<Eigen::Index>(times.size()));
    for (std::size_t j = 0; j < times.size(); ++j)
        resid(static_cast<Eigen::Index>(j)) = values[j] - lininterp(model.grid, model.mean, times[j]);

    const Eigen::MatrixXd phi = interp_eigenfunctions(model, times);
    const Eigen::VectorXd w = solve_observation_system(model, phi, resid);
    return scores_from_solution(model, phi, w, K);
}

ScorePredictor::ScorePredictor(const FpcaModel& model, const SparseSample& sample)
    : gamma_(model.eigenvalues), default_k_(model.K) {
    subjects_.reserve(sample.n());
    for (const auto& s : sample.subjects) {
        SubjectCache cache;
        cache.phi = interp_eigenfunctions(model, s.times);
        Eigen::VectorXd resid(static_cast<Eigen::Index>(s.times.size()));
        for (std::size_t j = 0; j < s.times.size(); ++j)
            resid(static_cast<Eigen::Index>(j)) =
                s.values[j] - lininterp(model.grid, model.mean, s.times[j]);
        cache.weighted = solve_observation_system(model, cache.phi, resid);
        subjects_.push_back(std::move(cache));
    }
}

std::vector<double> ScorePredictor::conditional_scores(std::size_t i) const {
    return conditional_scores(i, default_k_);
}

std::vector<double> ScorePredictor::conditional_scores(std::size_t i, int K) const {
    if (i >= subjects_.size()) throw ValidationError("subject index out of range");
    if (K < 1) throw ValidationError("K must be at least 1");
    const auto& cache = subjects_[i];
    const int kmax = static_cast<int>(gamma_.size());
    std::vector<double> xi(static_cast<std::size_t>(K), 0.0);
    for (int k = 0; k < std::min(K, kmax); ++k)
        xi[static_cast<std::size_t>(k)] =
            gamma_[static_cast<std::size_t>(k)] * cache.phi.col(k).dot(cache.weighted);
    return xi;
}

Eigen::MatrixXd reconstruct(const FpcaModel& model,
                            const std::vector<std::vector<double>>& scores) {
    const Eigen::Index g = static_cast<Eigen::Index>(model.grid.size());
    const Eigen::Index n = static_cast<Eigen::Index>(scores.size());
    if (n == 0) throw ValidationError("no score vectors given");
    const std::size_t K = scores.front().size();
    if (K == 0 || static_cast<int>(K) > model.k_max())
        throw ValidationError("score length must lie in [1, k_max]");

    Eigen::MatrixXd curves(n, g);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& xi = scores[static_cast<std::size_t>(i)];
        if (xi.size() != K) throw ValidationError("score vectors have inconsistent lengths");
        Eigen::RowVectorXd row = model.mean.transpose();
        for (std::size_t k = 0; k < K; ++k)
            row += xi[k] * model.eigenfunctions.row(static_cast<Eigen::Index>(k));
        curves.row(i) = row;
    }
    return curves;
}

std::vector<int> default_k_candidates(int grid_size) {
    const int hi = std::min(10, grid_size - 1);
    std::vector<int> out;
    for (int k = 1; k <= hi; ++k) out.push_back(k);
    return out;
}

namespace {

// One holdout index per subject, drawn for every subject so the stream
// does not depend on eligibility.
std::vector<std::uint64_t> draw_holdouts(const SparseSample& sample, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 17));
    std::vector<std::uint64_t> pick(sample.n());
    for (std::size_t i = 0; i < sample.n(); ++i)
        pick[i] = rng.below(sample.subjects[i].times.size());
    return pick;
}

int select_k_given(const FpcaModel& model, const SparseSample& sample,
                   const std::vector<std::uint64_t>& pick,
                   const std::vector<int>& k_candidates) {
    if (k_candidates.empty()) throw ValidationError("K candidate list is empty");
    std::vector<int> candidates = k_candidates;
    std::sort(candidates.begin(), candidates.end());
    for (int k : candidates) {
        if (k < 1) throw ValidationError("K candidates must be positive");
        if (k > static_cast<int>(model.grid.size()))
            throw ValidationError("K candidate exceeds output grid size");
    }
    const int k_top = candidates.back();

    std::vector<double> sse(candidates.size(), 0.0);
    std::size_t used = 0;
    for (std::size_t i = 0; i < sample.n(); ++i) {
        const auto& s = sample.subjects[i];
        const std::size_t ni = s.times.size();
        if (ni < 2) continue;

        std::vector<double> times, values;
        times.reserve(ni - 1);
        values.reserve(ni - 1);
        for (std::size_t j = 0; j < ni; ++j) {
            if (j == pick[i]) continue;
            times.push_back(s.times[j]);
            values.push_back(s.values[j]);
        }
        const double t_held = s.times[pick[i]];
        const double z_held = s.values[pick[i]];

        const auto xi = conditional_scores_at(model, times, values, k_top);
        double pred = lininterp(model.grid, model.mean, t_held);
        std::size_t c = 0;
        for (int k = 1; k <= k_top; ++k) {
            if (k <= model.k_max())
                pred += xi[static_cast<std::size_t>(k - 1)] *
                        lininterp(model.grid,
                                  model.eigenfunctions.row(static_cast<Eigen::Index>(k - 1))
                                      .transpose(),
                                  t_held);
            while (c < candidates.size() && candidates[c] == k) {
                const double e = z_held - pred;
                sse[c] += e * e;
                ++c;
            }
        }
        ++used;
    }
    if (used == 0) throw ValidationError("K selection needs a subject with at least 2 observations");

    std::size_t best = 0;
    for (std::size_t c = 1; c < candidates.size(); ++c)
        if (sse[c] < sse[best]) best = c;  // ties keep the smaller K
    return candidates[best];
}

struct ComponentsFit {
    FpcaModel model;
    double mean_bw = 0.0;
    double cov_bw = 0.0;
};

ComponentsFit fit_components(const SparseSample& sample, const SmootherConfig& cfg) {
    ComponentsFit out;
    out.model.grid = output_grid(cfg);
    out.model.mean = estimate_mean_impl(sample, cfg, &out.mean_bw);
    const auto cov = estimate_covariance(sample, out.model.mean, cfg);
    out.cov_bw = cov.cov_bandwidth_used;
    const auto eig =
        eigendecompose(cov.surface, out.model.grid, static_cast<int>(out.model.grid.size()));
    out.model.eigenvalues = eig.eigenvalues;
    out.model.eigenfunctions = eig.eigenfunctions;
    out.model.sigma2 = cov.sigma2;
    // Near-null-space artifacts must not reach the score systems: when
    // sigma2 is near zero they are not shrunk and their boundary wiggles
    // leak into reconstructions. Two screens: modes localized on single
    // grid nodes (sup-norm above anything a >=0.05-bandwidth surface can
    // produce for a unit-L2 eigenfunction), and eigenvalues below 1% of
    // the leading one.
    if (!out.model.eigenvalues.empty()) {
        const double floor_value = 0.01 * out.model.eigenvalues.front();
        for (int k = 0; k < out.model.k_max(); ++k) {
            auto& gamma = out.model.eigenvalues[static_cast<std::size_t>(k)];
            if (gamma < floor_value ||
                out.model.eigenfunctions.row(k).cwiseAbs().maxCoeff() > 4.0)
                gamma = 0.0;
        }
    }
    return out;
}

// Leakage-free truncation choice: the component model used for the CV
// predictions is refit on the sample with every held-out observation
// removed (same bandwidths as the full fit), so the held-out values
// cannot inform the eigenfunctions they are predicted from. Falls back
// to the full-data model when the reduced sample cannot support a fit.
int select_k_by_cv(const SparseSample& sample, const SmootherConfig& cfg_fixed,
                   const FpcaModel& full_model, const std::vector<int>& k_candidates,
                   std::uint64_t seed) {
    const auto pick = draw_holdouts(sample, seed);
    SparseSample train = sample;
    for (std::size_t i = 0; i < train.n(); ++i) {
        auto& s = train.subjects[i];
        if (s.times.size() < 2) continue;
        s.times.erase(s.times.begin() + static_cast<std::ptrdiff_t>(pick[i]));
        s.values.erase(s.values.begin() + static_cast<std::ptrdiff_t>(pick[i]));
    }
    try {
        const ComponentsFit trained = fit_components(train, cfg_fixed);
        return select_k_given(trained.model, sample, pick, k_candidates);
    } catch (const ValidationError&) {
        return select_k_given(full_model, sample, pick, k_candidates);
    } catch (const NumericalError&) {
        return select_k_given(full_model, sample, pick, k_candidates);
    }
}

SmootherConfig with_fixed_bandwidths(const SmootherConfig& cfg, const ComponentsFit& fitted) {
    SmootherConfig fixed = cfg;
    fixed.mean_bandwidth = fitted.mean_bw;
    fixed.cov_bandwidth = fitted.cov_bw;
    return fixed;
}

}  // namespace

int select_K_with_model(const FpcaModel& model, const SparseSample& sample,
                        const std::vector<int>& k_candidates, std::uint64_t seed) {
    return select_k_given(model, sample, draw_holdouts(sample, seed), k_candidates);
}

int select_K(const SparseSample& sample, const SmootherConfig& cfg,
             const std::vector<int>& k_candidates, std::uint64_t seed) {
    const ComponentsFit fitted = fit_components(sample, cfg);
    return select_k_by_cv(sample, with_fixed_bandwidths(cfg, fitted), fitted.model,
                          k_candidates, seed);
}

FpcaModel fit(const SparseSample& sample, const SmootherConfig& cfg,
              std::optional<int> fixed_k, std::uint64_t cv_seed) {
    ComponentsFit fitted = fit_components(sample, cfg);
    if (fixed_k) {
        if (*fixed_k < 1) throw ValidationError("K must be at least 1");
        fitted.model.K = std::min(*fixed_k, fitted.model.k_max());
        fitted.model.k_from_cv = false;
    } else {
        fitted.model.K =
            select_k_by_cv(sample, with_fixed_bandwidths(cfg, fitted), fitted.model,
                           default_k_candidates(cfg.output_grid_size), cv_seed);
        fitted.model.k_from_cv = true;
    }
    return fitted.model;
}

}  // namespace ftau
