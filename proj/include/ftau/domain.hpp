#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ftau {

/// Ordered evaluation times, affinely rescaled to [0,1].
///
/// Every statistic downstream integrates over this domain, so inputs on
/// an arbitrary interval [a,b] are normalized once at validation and
/// never touched again.
struct Grid {
    std::vector<double> points;

    std::size_t size() const { return points.size(); }
    bool operator==(const Grid&) const = default;
};

/// Builds a Grid from raw times: validates (finite, strictly increasing,
/// at least 2 points) and rescales to [0,1].
Grid make_grid(std::vector<double> raw_times);

/// Equally spaced grid of g points on [0,1].
Grid uniform_grid(int g);

/// n curves observed on a shared grid plus n scalar responses.
struct DenseSample {
    Grid grid;
    Eigen::MatrixXd curves;     // n x m, row i = curve i on the grid
    Eigen::VectorXd responses;  // length n

    Eigen::Index n() const { return curves.rows(); }
    Eigen::Index m() const { return curves.cols(); }
};

bool operator==(const DenseSample& a, const DenseSample& b);

/// One subject's irregular observations: parallel (time, value) arrays,
/// times sorted ascending after validation.
struct SparseSubject {
    std::vector<double> times;
    std::vector<double> values;

    bool operator==(const SparseSubject&) const = default;
};

/// Per-subject irregular longitudinal observations plus responses.
struct SparseSample {
    std::vector<SparseSubject> subjects;
    Eigen::VectorXd responses;

    std::size_t n() const { return subjects.size(); }
    std::size_t total_observations() const;
};

/// The n empirical projection curves W_i on a grid. Each entry lies in
/// [-0.5, 0.5] by construction.
struct ProjectionSet {
    Grid grid;
    Eigen::MatrixXd projections;  // n x m
};

/// Ordered nonnegative eigenvalues of an estimated covariance operator,
/// with the truncation point d chosen by fraction of variance explained.
struct Spectrum {
    std::vector<double> eigenvalues;  // descending, clamped at 0
    std::size_t d = 1;                // 1 <= d <= eigenvalues.size()
    double fve = 1.0;                 // cumulative fraction of variance at d

    bool degenerate() const { return eigenvalues.empty() || eigenvalues.front() <= 0.0; }
};

/// Fitted sparse-FPCA model: mean curve, eigenpairs, noise variance and
/// the selected truncation K. Eigenfunction rows have unit L2 norm under
/// trapezoidal quadrature on `grid`.
struct FpcaModel {
    Grid grid;
    Eigen::VectorXd mean;             // length g
    std::vector<double> eigenvalues;  // descending, >= 0
    Eigen::MatrixXd eigenfunctions;   // K_max x g
    double sigma2 = 0.0;
    int K = 1;
    bool k_from_cv = true;

    int k_max() const { return static_cast<int>(eigenfunctions.rows()); }
};

/// Outcome of a dense or sparse association test.
struct TestReport {
    double statistic = 0.0;
    Spectrum eigenvalues_used;
    double p_value = 1.0;
    double p_value_mc_se = 0.0;
    std::optional<double> alpha;
    std::optional<double> alpha_critical;
    std::optional<bool> reject;
    std::map<std::string, double> diagnostics;  // n, m, d, K (sparse), tie counts, seed
};

/// Validates raw dense input and produces a canonical sample. The grid is
/// rescaled to [0,1]; validation of an already-valid sample is the identity.
DenseSample validate_dense(const std::vector<double>& raw_grid,
                           const std::vector<std::vector<double>>& raw_rows,
                           const std::vector<double>& raw_responses);

DenseSample validate_dense(const DenseSample& sample);

/// Validates raw sparse input: per-subject times sorted ascending,
/// duplicate (subject, time) pairs rejected, pooled times rescaled to
/// [0,1]. At least one subject must carry two or more observations,
/// otherwise the covariance is unidentifiable.
SparseSample validate_sparse(std::vector<SparseSubject> raw_subjects,
                             const std::vector<double>& raw_responses);

SparseSample validate_sparse(const SparseSample& sample);

}  // namespace ftau
