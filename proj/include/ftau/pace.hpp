#pragma once

#include "ftau/domain.hpp"

#include <Eigen/Cholesky>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ftau {

/// Settings for the sparse-FPCA smoothing steps. The kernel is fixed to
/// Epanechnikov; empty bandwidths mean 5-fold cross-validation over a
/// geometric grid spanning [span/20, span/2] of the (rescaled) domain.
struct SmootherConfig {
    std::optional<double> mean_bandwidth;
    std::optional<double> cov_bandwidth;
    int output_grid_size = 51;
    bool diag_exclusion = true;
};

/// The equally spaced grid on [0,1] that all PACE outputs live on.
Grid output_grid(const SmootherConfig& cfg);

/// Local linear estimate of the mean function from pooled observations,
/// evaluated on the output grid. Fails naming the evaluation point when
/// the kernel window holds fewer than two observations.
Eigen::VectorXd estimate_mean(const SparseSample& sample, const SmootherConfig& cfg);

struct CovarianceEstimate {
    Eigen::MatrixXd surface;  // g x g, symmetrized
    double sigma2 = 0.0;      // noise variance from the diagonal gap, >= 0
    double mean_bandwidth_used = 0.0;  // informational (0 when mean not refit here)
    double cov_bandwidth_used = 0.0;
};

/// Smooths the off-diagonal raw cross-products onto the output grid and
/// recovers the noise variance from the gap between the smoothed diagonal
/// of squared residuals and the surface diagonal, averaged over the
/// central half of the domain.
CovarianceEstimate estimate_covariance(const SparseSample& sample,
                                       const Eigen::VectorXd& mean,
                                       const SmootherConfig& cfg);

struct EigenDecomposition {
    std::vector<double> eigenvalues;  // k_max entries, descending, clamped at 0
    Eigen::MatrixXd eigenfunctions;   // k_max x g, unit L2 norm rows
};

/// Quadrature-discretized eigenproblem of a covariance surface:
/// symmetrized via Q^{1/2} S Q^{1/2}, eigenfunctions mapped back by
/// Q^{-1/2} so they are orthonormal in L2. Sign convention: the integral
/// of each eigenfunction is nonnegative; when that integral is below
/// 1e-8 in magnitude, the first coordinate is made nonnegative.
EigenDecomposition eigendecompose(const Eigen::MatrixXd& surface, const Grid& grid, int k_max);

/// Conditional-expectation scores for an arbitrary observation set:
/// xi_k = gamma_k phi_k(T)^T Sigma_G^{-1} (values - mu(T)), k = 1..K,
/// with mean and eigenfunctions linearly interpolated to the times.
std::vector<double> conditional_scores_at(const FpcaModel& model,
                                          std::span<const double> times,
                                          std::span<const double> values,
                                          int K);

/// Caches per-subject observation covariance factorizations so repeated
/// score queries are cheap. Immutable after construction.
class ScorePredictor {
public:
    ScorePredictor(const FpcaModel& model, const SparseSample& sample);

    /// Scores for subject i using the model's selected K.
    std::vector<double> conditional_scores(std::size_t i) const;
    std::vector<double> conditional_scores(std::size_t i, int K) const;

    std::size_t n_subjects() const { return subjects_.size(); }

private:
    struct SubjectCache {
        Eigen::MatrixXd phi;       // N_i x k_max
        Eigen::VectorXd weighted;  // Sigma_G^{-1} (values - mu)
    };
    std::vector<SubjectCache> subjects_;
    std::vector<double> gamma_;
    int default_k_ = 1;
};

/// Curves rebuilt from scores: X_i(t) = mu(t) + sum_k xi_ik phi_k(t).
/// Every score vector must have length K.
Eigen::MatrixXd reconstruct(const FpcaModel& model,
                            const std::vector<std::vector<double>>& scores);

/// Truncation choice by leave-one-observation-out cross-validation: one
/// held-out observation per subject with N_i >= 2 (choice seeded), scores
/// recomputed from the remainder, K with the smallest mean squared
/// prediction error wins; ties go to the smaller K.
int select_K(const SparseSample& sample, const SmootherConfig& cfg,
             const std::vector<int>& k_candidates, std::uint64_t seed);

/// Same selection against an already-fitted component model.
int select_K_with_model(const FpcaModel& model, const SparseSample& sample,
                        const std::vector<int>& k_candidates, std::uint64_t seed);

std::vector<int> default_k_candidates(int grid_size);

/// Full pipeline: mean, covariance, eigenpairs, noise variance, and K
/// (cross-validated unless fixed_k is given).
FpcaModel fit(const SparseSample& sample, const SmootherConfig& cfg,
              std::optional<int> fixed_k = std::nullopt, std::uint64_t cv_seed = 0);

/// Piecewise-linear interpolation of grid values at t (clamped to the
/// grid range).
double lininterp(const Grid& grid, const Eigen::VectorXd& values, double t);

}  // namespace ftau
