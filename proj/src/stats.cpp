#include "diffsens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "diffsens/errors.hpp"

namespace diffsens::stats {

double median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double median(const Vector& values) { return median(std::vector<double>(values.begin(), values.end())); }

double pearson(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("pearson: need two equally long vectors");
  const Eigen::RowVectorXd xc = x.array() - x.mean();
  const Eigen::RowVectorXd yc = y.array() - y.mean();
  const double denom = xc.norm() * yc.norm();
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(xc.dot(yc) / denom, -1.0, 1.0);
}

namespace {

Eigen::RowVectorXd ranks(const Eigen::RowVectorXd& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[static_cast<Eigen::Index>(a)] < x[static_cast<Eigen::Index>(b)];
  });
  Eigen::RowVectorXd r(x.size());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[static_cast<Eigen::Index>(order[j + 1])] == x[static_cast<Eigen::Index>(order[i])]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[static_cast<Eigen::Index>(order[k])] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) { return pearson(ranks(x), ranks(y)); }

double correlation(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y, Correlation kind) {
  return kind == Correlation::pearson ? pearson(x, y) : spearman(x, y);
}

double cosine_similarity(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
  const double denom = x.norm() * y.norm();
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return x.dot(y) / denom;
}

Vector row_correlations(const Batch& x, const Batch& y, Correlation kind) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw DomainError("row_correlations: shape mismatch");
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = correlation(x.row(i), y.row(i), kind);
  return out;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("slope: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace diffsens::stats
