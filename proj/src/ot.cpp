#include "diffsens/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "diffsens/errors.hpp"

namespace diffsens {

namespace {

// Lexicographic comparison of the raw coordinates, used to pick a canonical
// orientation of the problem.
bool precedes(const Batch& a, const Batch& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

// log sum_k exp(shift_k + row_k) for contiguous rows.
double log_sum_exp(const double* row, const double* shift, Eigen::Index n, double* scratch) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    scratch[k] = row[k] + shift[k];
    mx = std::max(mx, scratch[k]);
  }
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) acc += std::exp(scratch[k] - mx);
  return mx + std::log(acc);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kCheckEvery = 10;

Coupling solve(const Batch& a, const Batch& b, const SinkhornOptions& opts) {
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.rows();
  // Potentials are kept divided by reg: f / reg and g / reg.
  const RowMatrix kernel = -squared_distances(a, b) / opts.reg;
  const RowMatrix kernel_t = kernel.transpose();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));

  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  std::vector<double> scratch(static_cast<std::size_t>(std::max(n, m)));

  Coupling c;
  c.reg = opts.reg;
  c.marginal_a = Vector::Constant(n, 1.0 / static_cast<double>(n));
  c.marginal_b = Vector::Constant(m, 1.0 / static_cast<double>(m));

  // Columns are exact right after the g update; rows carry the violation.
  auto row_violation = [&] {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) sum += std::exp(f[i] + g[j] + kernel(i, j));
      worst = std::max(worst, std::abs(sum - c.marginal_a[i]));
    }
    return worst;
  };

  for (std::size_t it = 1; it <= opts.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      f[i] = log_a - log_sum_exp(&kernel(i, 0), g.data(), m, scratch.data());
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      g[j] = log_b - log_sum_exp(&kernel_t(j, 0), f.data(), n, scratch.data());
    }
    c.iterations_used = it;
    if (it % kCheckEvery == 0 || it == opts.max_iter) {
      c.max_violation = row_violation();
      if (c.max_violation < opts.tol) {
        c.converged = true;
        break;
      }
    }
  }
  c.plan.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) c.plan(i, j) = std::exp(f[i] + g[j] + kernel(i, j));
  }
  return c;
}

}  // namespace

Matrix squared_distances(const Batch& a, const Batch& b) {
  if (a.cols() != b.cols()) throw DomainError("point clouds differ in dimension");
  Matrix cost(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) {
        const double diff = a(i, k) - b(j, k);
        acc += diff * diff;
      }
      cost(i, j) = acc;
    }
  }
  return cost;
}

Coupling sinkhorn_log(const Batch& a, const Batch& b, const SinkhornOptions& opts) {
  if (a.rows() == 0 || b.rows() == 0) throw DomainError("sinkhorn: empty point cloud");
  if (a.cols() != b.cols()) throw DomainError("sinkhorn: point clouds differ in dimension");
  if (!(opts.reg > 0.0)) throw DomainError("sinkhorn: regularization must be positive");
  if (!a.allFinite() || !b.allFinite()) throw DomainError("sinkhorn: non-finite points");
  if (precedes(b, a)) {
    Coupling c = solve(b, a, opts);
    c.plan.transposeInPlace();
    std::swap(c.marginal_a, c.marginal_b);
    return c;
  }
  return solve(a, b, opts);
}

Batch transport_rays(const Coupling& c, const Batch& sources, const Batch& targets) {
  if (c.plan.rows() != sources.rows() || c.plan.cols() != targets.rows() || sources.cols() != targets.cols()) {
    throw DomainError("transport_rays: shapes do not match the coupling");
  }
  Batch rays(sources.rows(), sources.cols());
  for (Eigen::Index i = 0; i < sources.rows(); ++i) {
    const double mass = c.plan.row(i).sum();
    if (!(mass > 0.0)) throw DomainError("transport_rays: plan row " + std::to_string(i) + " is zero");
    const Eigen::RowVectorXd image = (c.plan.row(i) * targets.matrix()) / mass;
    rays.row(i) = image - sources.row(i);
  }
  return rays;
}

void standardize_features(Batch& a, Batch& b) {
  if (a.cols() != b.cols()) throw DomainError("standardize: dimension mismatch");
  const double n = static_cast<double>(a.rows() + b.rows());
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    const double mean = (a.col(k).sum() + b.col(k).sum()) / n;
    const double var = ((a.col(k).array() - mean).square().sum() + (b.col(k).array() - mean).square().sum()) / n;
    const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    a.col(k) = (a.col(k).array() - mean) * scale;
    b.col(k) = (b.col(k).array() - mean) * scale;
  }
}

}  // namespace diffsens
