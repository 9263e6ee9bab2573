#include "ftau/simgen.hpp"

#include "ftau/errors.hpp"
#include "ftau/parallel.hpp"
#include "ftau/pipeline.hpp"
#include "ftau/quadrature.hpp"
#include "ftau/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ftau {

namespace {

constexpr double coef_rate = 2.0;        // exponential coefficient rate
constexpr double case2_noise_rate = 2.0; // exponential response noise rate
constexpr double case3_noise_sd = 0.31622776601683794;  // sqrt(0.1)
constexpr double sim2_noise_sd = 0.4472135954999579;    // sqrt(0.2)
constexpr double sim2_case3_coef_sd = 0.31622776601683794;  // sqrt(0.1)

void check_scenario(const ScenarioConfig& cfg) {
    if (cfg.n < 10) throw ValidationError("scenario requires n >= 10");
    if (cfg.replicates < 1) throw ValidationError("scenario requires replicates >= 1");
    if (!(cfg.delta >= 0.0)) throw ValidationError("delta must be nonnegative");
    if (cfg.case_id < 1 || cfg.case_id > 3) throw ValidationError("case must be 1, 2 or 3");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    if (cfg.design == Design::SimI) {
        if (cfg.p != 5 && cfg.p != 10)
            throw ValidationError("Simulation I uses basis dimension 5 or 10");
    } else if (cfg.p != 5) {
        throw ValidationError("Simulations II and III use basis dimension 5");
    }
}

double basis_value(const ScenarioConfig& cfg, int k, double t) {
    return cfg.case_id == 3 ? monomial_basis(k, t) : fourier_basis(k, t);
}

// Response for one subject. The linear cases use the exact coefficient
// identity integral(X beta) = sum_k eps_k beta_k, valid because the
// Fourier basis is orthonormal; the monotone case integrates
// 0.001^X(t) by trapezoid on the generation grid.
double draw_response(const ScenarioConfig& cfg, const std::vector<double>& coefs,
                     const std::vector<double>& curve, const std::vector<double>& weights,
                     Rng& rng) {
    if (cfg.case_id == 3) {
        double integral = 0.0;
        for (std::size_t j = 0; j < curve.size(); ++j)
            integral += weights[j] * std::pow(0.001, curve[j]);
        return cfg.delta * integral + case3_noise_sd * rng.normal();
    }
    double signal = 0.0;
    for (int k = 1; k <= cfg.p; ++k)
        signal += coefs[static_cast<std::size_t>(k - 1)] * (static_cast<double>(k) / 2.0);
    if (cfg.case_id == 1) return cfg.delta * signal + rng.normal();
    return cfg.delta * signal + rng.exponential(case2_noise_rate);
}

}  // namespace

double fourier_basis(int k, double t) {
    if (k < 1) throw ValidationError("basis index must be >= 1");
    if (k == 1) return 1.0;
    constexpr double two_pi = 6.283185307179586476925286766559;
    const int j = k / 2;
    const double arg = two_pi * static_cast<double>(j) * t;
    const double root2 = 1.4142135623730951;
    return (k % 2 == 0) ? root2 * std::sin(arg) : root2 * std::cos(arg);
}

double monomial_basis(int k, double t) {
    if (k < 1) throw ValidationError("basis index must be >= 1");
    return std::pow(t, k - 1);
}

DenseSample gen_sim1(const ScenarioConfig& cfg) {
    check_scenario(cfg);
    if (cfg.design != Design::SimI) throw ValidationError("gen_sim1 requires design SimI");

    const Grid grid = uniform_grid(20);
    const auto weights = trapezoid_weights(grid.points);
    Rng rng(cfg.seed);

    DenseSample out;
    out.grid = grid;
    out.curves.resize(cfg.n, static_cast<Eigen::Index>(grid.size()));
    out.responses.resize(cfg.n);

    std::vector<double> coefs(static_cast<std::size_t>(cfg.p));
    std::vector<double> curve(grid.size());
    for (int i = 0; i < cfg.n; ++i) {
        for (int k = 1; k <= cfg.p; ++k)
            coefs[static_cast<std::size_t>(k - 1)] = rng.exponential(coef_rate);
        for (std::size_t j = 0; j < grid.size(); ++j) {
            double x = 0.0;
            for (int k = 1; k <= cfg.p; ++k)
                x += coefs[static_cast<std::size_t>(k - 1)] * basis_value(cfg, k, grid.points[j]);
            curve[j] = x;
            out.curves(i, static_cast<Eigen::Index>(j)) = x;
        }
        out.responses(i) = draw_response(cfg, coefs, curve, weights, rng);
    }
    return out;
}

namespace {

SparseSample gen_sparse(const ScenarioConfig& cfg, bool exponential_coefs) {
    check_scenario(cfg);
    const Grid latent = uniform_grid(56);
    const auto weights = trapezoid_weights(latent.points);
    constexpr std::size_t points_per_subject = 5;
    Rng rng(cfg.seed);

    SparseSample out;
    out.subjects.resize(static_cast<std::size_t>(cfg.n));
    out.responses.resize(cfg.n);

    std::vector<double> coefs(static_cast<std::size_t>(cfg.p));
    std::vector<double> curve(latent.size());
    std::vector<std::size_t> indices(latent.size());
    for (int i = 0; i < cfg.n; ++i) {
        for (int k = 1; k <= cfg.p; ++k) {
            double eps;
            if (exponential_coefs) {
                eps = rng.exponential(coef_rate);
            } else if (cfg.case_id == 3) {
                eps = sim2_case3_coef_sd * rng.normal();
            } else {
                eps = rng.normal();
            }
            coefs[static_cast<std::size_t>(k - 1)] = eps;
        }
        for (std::size_t j = 0; j < latent.size(); ++j) {
            double x = 0.0;
            for (int k = 1; k <= cfg.p; ++k)
                x += coefs[static_cast<std::size_t>(k - 1)] * basis_value(cfg, k, latent.points[j]);
            curve[j] = x;
        }

        // 5 distinct grid indices, uniform without replacement
        std::iota(indices.begin(), indices.end(), std::size_t{0});
        for (std::size_t j = 0; j < points_per_subject; ++j) {
            const std::size_t pick = j + static_cast<std::size_t>(rng.below(indices.size() - j));
            std::swap(indices[j], indices[pick]);
        }
        std::vector<std::size_t> chosen(indices.begin(),
                                        indices.begin() + points_per_subject);
        std::sort(chosen.begin(), chosen.end());

        auto& subj = out.subjects[static_cast<std::size_t>(i)];
        subj.times.resize(points_per_subject);
        subj.values.resize(points_per_subject);
        for (std::size_t j = 0; j < points_per_subject; ++j) {
            subj.times[j] = latent.points[chosen[j]];
            subj.values[j] = curve[chosen[j]] + sim2_noise_sd * rng.normal();
        }
        out.responses(i) = draw_response(cfg, coefs, curve, weights, rng);
    }
    return out;
}

}  // namespace

SparseSample gen_sim2(const ScenarioConfig& cfg) {
    if (cfg.design != Design::SimII) throw ValidationError("gen_sim2 requires design SimII");
    return gen_sparse(cfg, false);
}

SparseSample gen_sim3(const ScenarioConfig& cfg) {
    if (cfg.design != Design::SimIII) throw ValidationError("gen_sim3 requires design SimIII");
    return gen_sparse(cfg, true);
}

PowerResult power_study(const ScenarioConfig& cfg) {
    check_scenario(cfg);
    const auto start = std::chrono::steady_clock::now();

    PowerResult result;
    result.p_values.assign(static_cast<std::size_t>(cfg.replicates),
                           std::numeric_limits<double>::quiet_NaN());

    parallel_for(static_cast<std::size_t>(cfg.replicates), cfg.threads, [&](std::size_t r) {
        ScenarioConfig rep = cfg;
        rep.seed = derive_seed(cfg.seed, r, 100);
        rep.threads = 1;  // replicates are the unit of parallelism

        TestOptions opts;
        opts.fve = 0.95;
        opts.mc_draws = cfg.mc_draws;
        opts.seed = derive_seed(cfg.seed, r, 200);
        opts.threads = 1;

        try {
            TestReport report;
            if (cfg.design == Design::SimI) {
                report = dense_test(gen_sim1(rep), opts);
            } else {
                SmootherConfig smoother;
                smoother.output_grid_size = cfg.grid_size;
                const SparseSample data =
                    cfg.design == Design::SimII ? gen_sim2(rep) : gen_sim3(rep);
                report = sparse_test(data, smoother, opts);
            }
            result.p_values[r] = report.p_value;
        } catch (const std::exception&) {
            // recorded as NaN and excluded from the rate
        }
    });

    std::int64_t rejected = 0;
    std::int64_t valid = 0;
    for (double p : result.p_values) {
        if (std::isnan(p)) {
            ++result.errored;
            continue;
        }
        ++valid;
        rejected += (p < cfg.alpha);
    }
    if (valid > 0) {
        result.rejection_rate = static_cast<double>(rejected) / static_cast<double>(valid);
        result.se = std::sqrt(result.rejection_rate * (1.0 - result.rejection_rate) /
                              static_cast<double>(valid));
    }
    result.runtime_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string design_name(Design d) {
    switch (d) {
        case Design::SimI: return "sim1";
        case Design::SimII: return "sim2";
        case Design::SimIII: return "sim3";
    }
    return "sim1";
}

ScenarioConfig parse_scenario_line(const std::string& line) {
    ScenarioConfig cfg;
    std::istringstream in(line);
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw ValidationError("scenario token missing '=': " + token);
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        try {
            if (key == "design") {
                if (value == "sim1") cfg.design = Design::SimI;
                else if (value == "sim2") cfg.design = Design::SimII;
                else if (value == "sim3") cfg.design = Design::SimIII;
                else throw ValidationError("unknown design: " + value);
            } else if (key == "case") {
                cfg.case_id = std::stoi(value);
            } else if (key == "n") {
                cfg.n = std::stoi(value);
            } else if (key == "p") {
                cfg.p = std::stoi(value);
            } else if (key == "delta") {
                cfg.delta = std::stod(value);
            } else if (key == "reps") {
                cfg.replicates = std::stoi(value);
            } else if (key == "alpha") {
                cfg.alpha = std::stod(value);
            } else if (key == "seed") {
                cfg.seed = std::stoull(value);
            } else if (key == "mc_draws") {
                cfg.mc_draws = std::stoll(value);
            } else if (key == "grid_size") {
                cfg.grid_size = std::stoi(value);
            } else if (key == "threads") {
                cfg.threads = std::stoi(value);
            } else {
                throw ValidationError("unknown scenario key: " + key);
            }
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception&) {
            throw ValidationError("bad scenario value for " + key + ": " + value);
        }
    }
    check_scenario(cfg);
    return cfg;
}

std::string scenario_to_line(const ScenarioConfig& cfg) {
    std::ostringstream out;
    out << "design=" << design_name(cfg.design) << " case=" << cfg.case_id << " n=" << cfg.n
        << " p=" << cfg.p << " delta=" << cfg.delta << " reps=" << cfg.replicates
        << " alpha=" << cfg.alpha << " seed=" << cfg.seed << " mc_draws=" << cfg.mc_draws
        << " grid_size=" << cfg.grid_size;
    return out.str();
}

}  // namespace ftau
