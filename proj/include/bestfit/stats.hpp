// Batch-means error estimation. All Monte Carlo estimators in the toolkit
// report standard errors from 20 batches taken in sample order, which keeps
// the bands honest for correlated (MCMC) samples.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace bestfit {

constexpr int kBatchCount = 20;

// Contiguous batch ranges [begin, end) covering count items.
inline std::vector<std::pair<int, int>> batch_ranges(int count, int batches = kBatchCount) {
    std::vector<std::pair<int, int>> out;
    const int b = std::min(batches, count);
    for (int i = 0; i < b; ++i) {
        const int lo = static_cast<int>(static_cast<long long>(count) * i / b);
        const int hi = static_cast<int>(static_cast<long long>(count) * (i + 1) / b);
        if (hi > lo) out.emplace_back(lo, hi);
    }
    return out;
}

// Standard error of the grand mean from per-batch means (rows of `batch_means`
// are batches). Returns a vector of per-column standard errors.
inline Eigen::VectorXd stderr_from_batches(const Eigen::MatrixXd& batch_means) {
    const Eigen::Index b = batch_means.rows();
    Eigen::VectorXd grand = batch_means.colwise().mean();
    Eigen::VectorXd se = Eigen::VectorXd::Zero(batch_means.cols());
    if (b < 2) return se;
    for (Eigen::Index j = 0; j < batch_means.cols(); ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < b; ++i) {
            const double d = batch_means(i, j) - grand[j];
            s += d * d;
        }
        se[j] = std::sqrt(s / (b - 1) / b);
    }
    return se;
}

// Mean and standard error of a scalar series via batch means.
struct MeanWithError {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanWithError batch_mean(const Eigen::VectorXd& values, int batches = kBatchCount) {
    const int count = static_cast<int>(values.size());
    auto ranges = batch_ranges(count, batches);
    Eigen::MatrixXd bm(static_cast<Eigen::Index>(ranges.size()), 1);
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        bm(static_cast<Eigen::Index>(i), 0) =
            values.segment(ranges[i].first, ranges[i].second - ranges[i].first).mean();
    }
    MeanWithError out;
    out.mean = values.mean();
    out.se = stderr_from_batches(bm)[0];
    return out;
}

// Least-squares slope of y against x.
inline double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxy / sxx;
}

}  // namespace bestfit
