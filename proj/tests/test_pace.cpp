#include "ftau/pace.hpp"
#include "ftau/errors.hpp"
#include "ftau/quadrature.hpp"
#include "ftau/rng.hpp"
#include "ftau/simgen.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <functional>

using namespace ftau;

namespace {

constexpr double pi = 3.14159265358979323846;

// sparse sample from a curve generator: subject i gets ni observations at
// uniform random times, values curve(i, t) + noise_sd * N(0,1)
SparseSample make_sparse(Rng& rng, int n, int ni, double noise_sd,
                         const std::function<double(int, double, Rng&)>& curve) {
    SparseSample s;
    s.subjects.resize(static_cast<std::size_t>(n));
    s.responses.resize(n);
    for (int i = 0; i < n; ++i) {
        auto& subj = s.subjects[static_cast<std::size_t>(i)];
        subj.times.resize(static_cast<std::size_t>(ni));
        subj.values.resize(static_cast<std::size_t>(ni));
        for (int j = 0; j < ni; ++j) subj.times[static_cast<std::size_t>(j)] = rng.u01();
        std::sort(subj.times.begin(), subj.times.end());
        for (int j = 0; j < ni; ++j) {
            const double t = subj.times[static_cast<std::size_t>(j)];
            subj.values[static_cast<std::size_t>(j)] = curve(i, t, rng) + noise_sd * rng.normal();
        }
        s.responses(i) = rng.normal();
    }
    return s;
}

FpcaModel rank_one_model(double gamma, double sigma2) {
    FpcaModel m;
    m.grid = uniform_grid(11);
    m.mean = Eigen::VectorXd::Zero(11);
    m.eigenvalues = {gamma};
    m.eigenfunctions = Eigen::MatrixXd::Ones(1, 11);
    m.sigma2 = sigma2;
    m.K = 1;
    return m;
}

}  // namespace

TEST_CASE("output grid is equally spaced on [0,1]") {
    SmootherConfig cfg;
    const Grid g = output_grid(cfg);
    REQUIRE(g.size() == 51);
    CHECK(g.points.front() == 0.0);
    CHECK(g.points.back() == 1.0);
    CHECK(g.points[25] == doctest::Approx(0.5).epsilon(1e-15));
    cfg.output_grid_size = 5;
    CHECK_THROWS_AS(output_grid(cfg), ValidationError);
}

TEST_CASE("estimate_mean is exact on flat and linear signals") {
    Rng rng(31);
    SmootherConfig cfg;
    cfg.mean_bandwidth = 0.25;
    cfg.cov_bandwidth = 0.3;

    auto zero = make_sparse(rng, 40, 3, 0.0, [](int, double, Rng&) { return 0.0; });
    CHECK(estimate_mean(zero, cfg).cwiseAbs().maxCoeff() <= 1e-12);

    // local linear smoothing reproduces degree-1 signals exactly
    auto linear = make_sparse(rng, 40, 3, 0.0, [](int, double t, Rng&) { return t; });
    const Eigen::VectorXd mean = estimate_mean(linear, cfg);
    const Grid g = output_grid(cfg);
    for (Eigen::Index j = 0; j < mean.size(); ++j)
        CHECK(mean(j) == doctest::Approx(g.points[static_cast<std::size_t>(j)]).epsilon(0).scale(1.0).epsilon(1e-10));
}

TEST_CASE("estimate_mean recovers a constant level under noise with CV bandwidth") {
    Rng rng(32);
    SmootherConfig cfg;  // bandwidths auto
    auto data = make_sparse(rng, 200, 3, 0.1, [](int, double, Rng&) { return 3.0; });
    const Eigen::VectorXd mean = estimate_mean(data, cfg);
    CHECK((mean.array() - 3.0).abs().maxCoeff() <= 0.1);
}

TEST_CASE("estimate_mean failure modes") {
    Rng rng(33);
    auto data = make_sparse(rng, 12, 2, 0.0, [](int, double t, Rng&) { return t; });
    SmootherConfig cfg;
    cfg.mean_bandwidth = 1e-4;
    CHECK_THROWS_WITH_AS(estimate_mean(data, cfg), doctest::Contains("kernel window at t="),
                         NumericalError);

    auto tiny = make_sparse(rng, 4, 2, 0.0, [](int, double t, Rng&) { return t; });
    SmootherConfig ok;
    CHECK_THROWS_WITH_AS(estimate_mean(tiny, ok), doctest::Contains("at least 10"),
                         ValidationError);
}

TEST_CASE("estimate_covariance on pure noise") {
    Rng rng(34);
    auto data = make_sparse(rng, 300, 3, 0.2, [](int, double, Rng&) { return 0.0; });
    SmootherConfig cfg;
    const Eigen::VectorXd mean = estimate_mean(data, cfg);
    const auto est = estimate_covariance(data, mean, cfg);
    CHECK(est.surface.cwiseAbs().maxCoeff() <= 0.02);
    CHECK(est.sigma2 >= 0.02);
    CHECK(est.sigma2 <= 0.06);
}

TEST_CASE("estimate_covariance on noiseless rank-one curves") {
    Rng rng(35);
    // X_i(t) = xi_i (constant curves), xi ~ N(0,1): covariance surface is 1
    std::vector<double> xi(300);
    for (auto& v : xi) v = rng.normal();
    auto data = make_sparse(rng, 300, 3, 0.0, [&](int i, double, Rng&) {
        return xi[static_cast<std::size_t>(i)];
    });
    SmootherConfig cfg;
    const Eigen::VectorXd mean = estimate_mean(data, cfg);
    const auto est = estimate_covariance(data, mean, cfg);
    CHECK((est.surface.array() - 1.0).abs().maxCoeff() <= 0.15);
    CHECK(est.sigma2 <= 0.05);
    CHECK((est.surface - est.surface.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eigendecompose: constant kernel") {
    const Grid g = uniform_grid(51);
    const Eigen::MatrixXd surface = Eigen::MatrixXd::Ones(51, 51);
    const auto eig = eigendecompose(surface, g, 5);
    CHECK(eig.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-10));
    for (std::size_t k = 1; k < 5; ++k)
        CHECK(std::abs(eig.eigenvalues[k]) <= 1e-10);
    for (Eigen::Index j = 0; j < 51; ++j)
        CHECK(eig.eigenfunctions(0, j) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("eigendecompose: analytic sin kernel eigenpair") {
    const Grid g = uniform_grid(51);
    Eigen::MatrixXd surface(51, 51);
    for (int a = 0; a < 51; ++a)
        for (int b = 0; b < 51; ++b)
            surface(a, b) = 2.0 * std::sin(2.0 * pi * g.points[static_cast<std::size_t>(a)]) *
                            std::sin(2.0 * pi * g.points[static_cast<std::size_t>(b)]);
    const auto eig = eigendecompose(surface, g, 3);
    CHECK(eig.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(eig.eigenvalues[1] <= 1e-8);

    // eigenfunction matches sqrt(2) sin(2 pi t) up to sign
    double err_pos = 0.0, err_neg = 0.0;
    for (int j = 0; j < 51; ++j) {
        const double target = std::sqrt(2.0) * std::sin(2.0 * pi * g.points[static_cast<std::size_t>(j)]);
        err_pos = std::max(err_pos, std::abs(eig.eigenfunctions(0, j) - target));
        err_neg = std::max(err_neg, std::abs(eig.eigenfunctions(0, j) + target));
    }
    CHECK(std::min(err_pos, err_neg) <= 1e-3);
}

TEST_CASE("eigendecompose: orthonormal under quadrature, k_max checked") {
    const Grid g = uniform_grid(21);
    Rng rng(36);
    Eigen::MatrixXd r(21, 21);
    for (int a = 0; a < 21; ++a)
        for (int b = 0; b < 21; ++b) r(a, b) = rng.normal();
    const Eigen::MatrixXd surface = r.transpose() * r / 21.0;
    const auto eig = eigendecompose(surface, g, 8);

    const auto w = trapezoid_weights(g.points);
    Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(w.data(), 21);
    const Eigen::MatrixXd gram =
        eig.eigenfunctions * q.asDiagonal() * eig.eigenfunctions.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-8);

    // descending, nonnegative, and sign convention: nonnegative integral
    for (std::size_t k = 1; k < eig.eigenvalues.size(); ++k)
        CHECK(eig.eigenvalues[k] <= eig.eigenvalues[k - 1]);
    for (int k = 0; k < 8; ++k)
        CHECK(q.dot(eig.eigenfunctions.row(k).transpose()) >= -1e-8);

    CHECK_THROWS_WITH_AS(eigendecompose(surface, g, 22), doctest::Contains("exceeds grid size"),
                         ValidationError);
}

TEST_CASE("conditional scores: zero residuals give zero scores") {
    FpcaModel m = rank_one_model(1.0, 0.25);
    m.mean = Eigen::VectorXd::LinSpaced(11, 0.0, 2.0);
    const std::vector<double> times{0.15, 0.5, 0.85};
    std::vector<double> values;
    for (double t : times) values.push_back(lininterp(m.grid, m.mean, t));
    for (double xi : conditional_scores_at(m, times, values, 1)) CHECK(xi == 0.0);
}

TEST_CASE("conditional scores: hand-evaluated 1x1 system") {
    // gamma=1, phi=1, sigma2=0.25, single residual 1 -> 1/(1.25) = 0.8
    const FpcaModel m = rank_one_model(1.0, 0.25);
    const std::vector<double> times{0.3};
    const std::vector<double> values{1.0};
    const auto xi = conditional_scores_at(m, times, values, 1);
    REQUIRE(xi.size() == 1);
    CHECK(xi[0] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("conditional scores shrink to zero as sigma2 grows") {
    const std::vector<double> times{0.2, 0.6};
    const std::vector<double> values{1.3, -0.4};
    double prev = 1e300;
    for (double s2 : {0.01, 0.1, 1.0, 10.0, 1e4, 1e8}) {
        const FpcaModel m = rank_one_model(0.8, s2);
        const double xi = conditional_scores_at(m, times, values, 1)[0];
        CHECK(std::abs(xi) < prev);
        prev = std::abs(xi);
    }
    CHECK(prev <= 1e-6);
}

TEST_CASE("multi-component score norm shrinks when sigma2 doubles") {
    Rng rng(37);
    for (int rep = 0; rep < 20; ++rep) {
        FpcaModel m;
        m.grid = uniform_grid(21);
        m.mean = Eigen::VectorXd::Zero(21);
        m.eigenvalues = {1.2, 0.5, 0.2};
        m.eigenfunctions.resize(3, 21);
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 21; ++j)
                m.eigenfunctions(k, j) =
                    fourier_basis(k + 1, m.grid.points[static_cast<std::size_t>(j)]);
        m.K = 3;
        m.sigma2 = 0.05 + rng.u01();

        std::vector<double> times, values;
        const int ni = 3 + static_cast<int>(rng.below(4));
        for (int j = 0; j < ni; ++j) {
            times.push_back(rng.u01());
            values.push_back(rng.normal() + 0.5);
        }
        std::sort(times.begin(), times.end());

        const auto lo = conditional_scores_at(m, times, values, 3);
        FpcaModel wide = m;
        wide.sigma2 = 2.0 * m.sigma2;
        const auto hi = conditional_scores_at(wide, times, values, 3);
        double norm_lo = 0.0, norm_hi = 0.0;
        for (int k = 0; k < 3; ++k) {
            norm_lo += lo[static_cast<std::size_t>(k)] * lo[static_cast<std::size_t>(k)];
            norm_hi += hi[static_cast<std::size_t>(k)] * hi[static_cast<std::size_t>(k)];
        }
        CHECK(norm_hi < norm_lo);
    }
}

TEST_CASE("reconstruct: zero scores give the mean, simple arithmetic case") {
    FpcaModel m = rank_one_model(1.0, 0.0);
    m.mean = Eigen::VectorXd::LinSpaced(11, -1.0, 1.0);
    const Eigen::MatrixXd flat = reconstruct(m, {{0.0}, {0.0}});
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 11; ++j) CHECK(flat(i, j) == m.mean(j));

    FpcaModel unit = rank_one_model(1.0, 0.0);
    const Eigen::MatrixXd two = reconstruct(unit, {{2.0}});
    for (int j = 0; j < 11; ++j) CHECK(two(0, j) == 2.0);

    CHECK_THROWS_AS(reconstruct(unit, {{}}), ValidationError);
    CHECK_THROWS_AS(reconstruct(unit, {{1.0}, {1.0, 2.0}}), ValidationError);
}

TEST_CASE("reconstruct recovers noiseless single-component curves") {
    Rng rng(38);
    std::vector<double> xi(200);
    for (auto& v : xi) v = rng.normal();
    auto data = make_sparse(rng, 200, 6, 0.0, [&](int i, double t, Rng&) {
        return 1.0 + xi[static_cast<std::size_t>(i)] * std::sqrt(2.0) * std::sin(2.0 * pi * t);
    });
    SmootherConfig cfg;
    cfg.mean_bandwidth = 0.15;
    cfg.cov_bandwidth = 0.2;
    const FpcaModel model = fit(data, cfg, 2, 1);
    const ScorePredictor predictor(model, data);
    std::vector<std::vector<double>> scores;
    for (std::size_t i = 0; i < data.n(); ++i) scores.push_back(predictor.conditional_scores(i));
    const Eigen::MatrixXd curves = reconstruct(model, scores);

    double max_err = 0.0;
    for (int i = 0; i < 200; ++i)
        for (int j = 0; j < 51; ++j) {
            const double t = model.grid.points[static_cast<std::size_t>(j)];
            const double truth = 1.0 + xi[static_cast<std::size_t>(i)] * std::sqrt(2.0) *
                                           std::sin(2.0 * pi * t);
            max_err = std::max(max_err, std::abs(curves(i, j) - truth));
        }
    CHECK(max_err <= 0.1);
}

TEST_CASE("select_K: single candidate needs no choice") {
    Rng rng(39);
    auto data = make_sparse(rng, 30, 4, 0.1, [](int, double t, Rng&) { return t; });
    SmootherConfig cfg;
    cfg.mean_bandwidth = 0.25;
    cfg.cov_bandwidth = 0.3;
    CHECK(select_K(data, cfg, {3}, 5) == 3);
    CHECK_THROWS_AS(select_K(data, cfg, {}, 5), ValidationError);
}

TEST_CASE("select_K picks 1 for one-component data in most seeded runs") {
    SmootherConfig cfg;
    cfg.mean_bandwidth = 0.2;
    cfg.cov_bandwidth = 0.25;
    int picked_one = 0;
    for (int rep = 0; rep < 50; ++rep) {
        Rng rng(1000 + static_cast<std::uint64_t>(rep));
        std::vector<double> xi(100);
        for (auto& v : xi) v = rng.normal();
        auto data = make_sparse(rng, 100, 5, 0.1, [&](int i, double t, Rng&) {
            return xi[static_cast<std::size_t>(i)] * std::sqrt(2.0) * std::sin(2.0 * pi * t);
        });
        const int k = select_K(data, cfg, {1, 2, 3, 4, 5}, static_cast<std::uint64_t>(rep));
        picked_one += (k == 1);
    }
    CHECK(picked_one >= 40);
}

TEST_CASE("select_K on pure noise favors the smallest candidate") {
    SmootherConfig cfg;
    cfg.mean_bandwidth = 0.25;
    cfg.cov_bandwidth = 0.3;
    int picked_min = 0;
    const int reps = 16;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng(7000 + static_cast<std::uint64_t>(rep));
        auto data = make_sparse(rng, 120, 5, 0.2, [](int, double, Rng&) { return 0.0; });
        const int k = select_K(data, cfg, {1, 2, 3, 4}, static_cast<std::uint64_t>(rep));
        picked_min += (k == 1);
    }
    CHECK(picked_min * 2 >= reps);
}

TEST_CASE("select_K requires a subject with two observations") {
    FpcaModel m = rank_one_model(1.0, 0.1);
    SparseSample singletons;
    singletons.subjects = {{{0.2}, {1.0}}, {{0.7}, {2.0}}};
    singletons.responses.resize(2);
    singletons.responses << 1.0, 2.0;
    CHECK_THROWS_WITH_AS(select_K_with_model(m, singletons, {1, 2}, 3),
                         doctest::Contains("at least 2 observations"), ValidationError);
}

TEST_CASE("fit on the five-component sparse design") {
    ScenarioConfig sim;
    sim.design = Design::SimII;
    sim.case_id = 1;
    sim.n = 300;
    sim.delta = 0.0;
    sim.seed = 11;
    const SparseSample data = gen_sim2(sim);

    SmootherConfig cfg;
    const FpcaModel model = fit(data, cfg, std::nullopt, 4);

    // truth: noise variance 0.2; five unit eigenvalues
    CHECK(model.sigma2 >= 0.1);
    CHECK(model.sigma2 <= 0.4);
    double total = 0.0, first5 = 0.0;
    for (std::size_t k = 0; k < model.eigenvalues.size(); ++k) {
        total += model.eigenvalues[k];
        if (k < 5) first5 += model.eigenvalues[k];
    }
    CHECK(first5 / total >= 0.9);
    CHECK(model.K >= 1);
    CHECK(model.k_from_cv);
}

TEST_CASE("fit reproduces near-dense noiseless observations") {
    Rng rng(41);
    std::vector<double> a(80), b(80);
    for (int i = 0; i < 80; ++i) {
        a[static_cast<std::size_t>(i)] = rng.normal();
        b[static_cast<std::size_t>(i)] = 0.5 * rng.normal();
    }
    auto data = make_sparse(rng, 80, 20, 0.0, [&](int i, double t, Rng&) {
        return a[static_cast<std::size_t>(i)] +
               b[static_cast<std::size_t>(i)] * std::sqrt(2.0) * std::cos(2.0 * pi * t);
    });
    SmootherConfig cfg;
    cfg.mean_bandwidth = 0.1;
    cfg.cov_bandwidth = 0.15;
    const FpcaModel model = fit(data, cfg, std::nullopt, 2);
    const ScorePredictor predictor(model, data);

    double max_err = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        std::vector<std::vector<double>> one{predictor.conditional_scores(i)};
        FpcaModel local = model;
        const Eigen::MatrixXd curve = reconstruct(local, one);
        const Eigen::VectorXd row = curve.row(0).transpose();
        for (std::size_t j = 0; j < data.subjects[i].times.size(); ++j) {
            const double pred = lininterp(model.grid, row, data.subjects[i].times[j]);
            max_err = std::max(max_err, std::abs(pred - data.subjects[i].values[j]));
        }
    }
    CHECK(max_err <= 0.05);
}
