#pragma once

#include "ftau/domain.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ftau {

enum class Design { SimI, SimII, SimIII };

/// One simulation scenario: design, response case, sample size, basis
/// dimension, effect size, replicate count, level, seed.
///
/// Distribution conventions used throughout: "exponential with rate 2"
/// means mean 1/2; normal noise written N(0, v) is parameterized by its
/// variance v.
struct ScenarioConfig {
    Design design = Design::SimI;
    int case_id = 1;  // 1 linear+normal, 2 linear+exponential, 3 monotone nonlinear
    int n = 300;
    int p = 5;  // SimI: 5 or 10; SimII/III: fixed at 5
    double delta = 0.0;
    int replicates = 300;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    std::int64_t mc_draws = 100000;
    int grid_size = 51;  // sparse-path output grid
    int threads = 1;
};

/// Orthonormal Fourier basis on [0,1]: rho_1 = 1,
/// rho_{2j}(t) = sqrt(2) sin(2 pi j t), rho_{2j+1}(t) = sqrt(2) cos(2 pi j t).
double fourier_basis(int k, double t);

/// Monomial basis rho_k(t) = t^{k-1}.
double monomial_basis(int k, double t);

/// Dense design: curves on 20 equally spaced points, exponential basis
/// coefficients, response by case.
DenseSample gen_sim1(const ScenarioConfig& cfg);

/// Sparse design: latent curves on a 56-point grid with normal
/// coefficients, 5 observation points per subject drawn without
/// replacement, additive N(0, 0.2) measurement noise.
SparseSample gen_sim2(const ScenarioConfig& cfg);

/// Same frame as gen_sim2 with exponential(rate 2) coefficients.
SparseSample gen_sim3(const ScenarioConfig& cfg);

struct PowerResult {
    double rejection_rate = 0.0;
    double se = 0.0;
    std::vector<double> p_values;  // NaN where a replicate errored
    int errored = 0;
    double runtime_sec = 0.0;
};

/// Runs `replicates` independent datasets through the matching test
/// (dense for SimI, sparse otherwise) and reports the rejection rate at
/// level alpha. Per-replicate substreams derive from (seed, index), so
/// results do not depend on the worker count.
PowerResult power_study(const ScenarioConfig& cfg);

/// Plain-text key=value scenario line, e.g.
///   design=sim2 case=1 n=300 delta=0.15 reps=300 alpha=0.05 seed=7
ScenarioConfig parse_scenario_line(const std::string& line);
std::string scenario_to_line(const ScenarioConfig& cfg);

std::string design_name(Design d);

}  // namespace ftau
