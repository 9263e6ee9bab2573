#include "ftau/domain.hpp"

#include "ftau/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ftau {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Affine map of [lo, hi] onto [0,1]. Monotone FP rounding keeps results
// inside [0,1], and an already-normalized input maps to itself bitwise.
double rescale(double t, double lo, double hi) { return (t - lo) / (hi - lo); }

}  // namespace

Grid make_grid(std::vector<double> raw_times) {
    require(raw_times.size() >= 2, "grid must have at least 2 points");
    require(all_finite(raw_times), "grid contains non-finite values");
    for (std::size_t j = 1; j < raw_times.size(); ++j)
        require(raw_times[j] > raw_times[j - 1], "grid not strictly increasing");
    const double lo = raw_times.front();
    const double hi = raw_times.back();
    for (double& t : raw_times) t = rescale(t, lo, hi);
    return Grid{std::move(raw_times)};
}

Grid uniform_grid(int g) {
    require(g >= 2, "grid must have at least 2 points");
    std::vector<double> pts(static_cast<std::size_t>(g));
    for (int j = 0; j < g; ++j) pts[static_cast<std::size_t>(j)] = static_cast<double>(j) / (g - 1);
    return Grid{std::move(pts)};
}

bool operator==(const DenseSample& a, const DenseSample& b) {
    return a.grid == b.grid && a.curves.rows() == b.curves.rows() &&
           a.curves.cols() == b.curves.cols() && a.curves == b.curves &&
           a.responses.size() == b.responses.size() && a.responses == b.responses;
}

std::size_t SparseSample::total_observations() const {
    std::size_t total = 0;
    for (const auto& s : subjects) total += s.times.size();
    return total;
}

DenseSample validate_dense(const std::vector<double>& raw_grid,
                           const std::vector<std::vector<double>>& raw_rows,
                           const std::vector<double>& raw_responses) {
    const std::size_t n = raw_rows.size();
    require(n >= 2, "n >= 2 required");
    require(raw_responses.size() == n, "response length mismatch");
    require(all_finite(raw_responses), "responses contain non-finite values");

    Grid grid = make_grid(raw_grid);
    const std::size_t m = grid.size();
    for (const auto& row : raw_rows) {
        require(row.size() == m, "curve rows not rectangular with the grid");
        require(all_finite(row), "curves contain non-finite values");
    }

    DenseSample out;
    out.grid = std::move(grid);
    out.curves.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            out.curves(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = raw_rows[i][j];
    out.responses.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) out.responses(static_cast<Eigen::Index>(i)) = raw_responses[i];
    return out;
}

DenseSample validate_dense(const DenseSample& sample) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(sample.n()));
    for (Eigen::Index i = 0; i < sample.n(); ++i) {
        rows[static_cast<std::size_t>(i)].assign(sample.curves.row(i).begin(),
                                                 sample.curves.row(i).end());
    }
    return validate_dense(sample.grid.points, rows,
                          {sample.responses.begin(), sample.responses.end()});
}

SparseSample validate_sparse(std::vector<SparseSubject> raw_subjects,
                             const std::vector<double>& raw_responses) {
    const std::size_t n = raw_subjects.size();
    require(n >= 2, "n >= 2 required");
    require(raw_responses.size() == n, "response length mismatch");
    require(all_finite(raw_responses), "responses contain non-finite values");

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    bool any_pair = false;
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = raw_subjects[i];
        require(!s.times.empty(), "subject " + std::to_string(i) + " has no observations");
        require(s.times.size() == s.values.size(),
                "subject " + std::to_string(i) + ": times/values length mismatch");
        require(all_finite(s.times) && all_finite(s.values),
                "subject " + std::to_string(i) + " has non-finite observations");
        if (s.times.size() >= 2) any_pair = true;

        std::vector<std::size_t> order(s.times.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return s.times[a] < s.times[b]; });
        SparseSubject sorted;
        sorted.times.reserve(order.size());
        sorted.values.reserve(order.size());
        for (std::size_t k : order) {
            sorted.times.push_back(s.times[k]);
            sorted.values.push_back(s.values[k]);
        }
        for (std::size_t k = 1; k < sorted.times.size(); ++k)
            require(sorted.times[k] != sorted.times[k - 1],
                    "subject " + std::to_string(i) + " has duplicate observation times");
        s = std::move(sorted);
        lo = std::min(lo, s.times.front());
        hi = std::max(hi, s.times.back());
    }
    require(any_pair, "covariance unidentifiable: every subject has a single observation");
    require(hi > lo, "degenerate time range: all observations share one time");

    for (auto& s : raw_subjects)
        for (double& t : s.times) t = rescale(t, lo, hi);

    SparseSample out;
    out.subjects = std::move(raw_subjects);
    out.responses.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) out.responses(static_cast<Eigen::Index>(i)) = raw_responses[i];
    return out;
}

SparseSample validate_sparse(const SparseSample& sample) {
    return validate_sparse(sample.subjects, {sample.responses.begin(), sample.responses.end()});
}

}  // namespace ftau
