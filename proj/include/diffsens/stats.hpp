#pragma once

#include <vector>

#include "diffsens/types.hpp"

namespace diffsens::stats {

enum class Correlation { pearson, spearman };

// Median of the finite entries; NaN when there are none.
double median(std::vector<double> values);
double median(const Vector& values);

// Pearson correlation of two equally long vectors; NaN if either is constant.
double pearson(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y);
// Pearson correlation of the ranks (average ranks for ties).
double spearman(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y);
double correlation(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y, Correlation kind);
double cosine_similarity(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y);

// Row-by-row correlation of two batches.
Vector row_correlations(const Batch& x, const Batch& y, Correlation kind);

// Least-squares slope of y on x.
double slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace diffsens::stats
