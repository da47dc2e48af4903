#include "diffsens/mixture.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "diffsens/errors.hpp"

namespace diffsens {

struct GaussianMixture::Scratch {
  Vector log_terms;
  Vector resp;
  Batch terms;  // K x d, row k = (mean_k - z) / var_k
  Vector mean_term;
  // Aligned copies of the query row, so reductions do not depend on where
  // the row sits in its batch (keeps results shard-invariant).
  Eigen::RowVectorXd z;
  Eigen::RowVectorXd u;
  double log_norm = 0.0;
  double precision_sum = 0.0;  // sum_k r_k / var_k

  explicit Scratch(const GaussianMixture& m)
      : log_terms(m.size()), resp(m.size()), terms(m.size(), m.dim()), mean_term(m.dim()), z(m.dim()), u(m.dim()) {}
};

GaussianMixture::GaussianMixture(Vector weights, Batch means, Vector variances)
    : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
  const Eigen::Index k = means_.rows();
  if (k == 0 || means_.cols() == 0) throw DomainError("mixture needs at least one component of dimension >= 1");
  if (weights_.size() != k || variances_.size() != k) {
    throw DomainError("mixture weights, means and variances disagree on component count");
  }
  if (!means_.allFinite()) throw DomainError("mixture means must be finite");
  if (!(weights_.array() >= 0.0).all() || !weights_.allFinite()) {
    throw DomainError("mixture weights must be nonnegative");
  }
  if (std::abs(weights_.sum() - 1.0) > 1e-12) {
    throw DomainError("mixture weights must sum to 1, got " + std::to_string(weights_.sum()));
  }
  if (!(variances_.array() >= 0.0).all() || !variances_.allFinite()) {
    throw DomainError("mixture variances must be finite and nonnegative");
  }
  log_weights_ = weights_.array().log();
}

GaussianMixture GaussianMixture::from_empirical(const Batch& points) {
  if (points.rows() == 0) throw DomainError("empirical measure needs at least one point");
  const Eigen::Index n = points.rows();
  return GaussianMixture(Vector::Constant(n, 1.0 / static_cast<double>(n)), points, Vector::Zero(n));
}

GaussianMixture GaussianMixture::single(const Vector& mean, double variance) {
  Batch means = mean.transpose();
  return GaussianMixture(Vector::Ones(1), std::move(means), Vector::Constant(1, variance));
}

bool GaussianMixture::has_atoms() const noexcept { return (variances_.array() == 0.0).any(); }

GaussianMixture GaussianMixture::blend(const GaussianMixture& other, double eta) const {
  if (other.dim() != dim()) throw DomainError("blend: dimension mismatch");
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("blend: weight outside [0, 1]");
  const Eigen::Index k1 = size();
  const Eigen::Index k2 = other.size();
  Vector w(k1 + k2);
  Batch mu(k1 + k2, dim());
  Vector var(k1 + k2);
  w << (1.0 - eta) * weights_, eta * other.weights_;
  mu << means_, other.means_;
  var << variances_, other.variances_;
  // Renormalize away the rounding of (1 - eta) + eta.
  w /= w.sum();
  return GaussianMixture(std::move(w), std::move(mu), std::move(var));
}

Batch GaussianMixture::sample(const NormalStream& normals, const NormalStream& picks,
                              std::uint64_t major, Eigen::Index n) const {
  Batch out = normals.batch(major, n, dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = picks.uniform(major, static_cast<std::uint64_t>(i));
    Eigen::Index k = 0;
    double acc = weights_[0];
    while (u >= acc && k + 1 < size()) acc += weights_[++k];
    out.row(i) = means_.row(k) + std::sqrt(variances_[k]) * out.row(i);
  }
  return out;
}

void GaussianMixture::check_evaluable() const {
  if (has_atoms()) {
    throw DomainError("mixture with point masses has no density; diffuse it to some s < t1 first");
  }
}

void GaussianMixture::evaluate(const double* z, Scratch& sc) const {
  const Eigen::Index d = dim();
  sc.z = Eigen::Map<const Eigen::RowVectorXd>(z, d);
  const Eigen::RowVectorXd& zr = sc.z;
  if (!zr.allFinite()) throw DomainError("evaluation point is not finite");
  const double half_d_log_2pi = 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  double max_term = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < size(); ++k) {
    const double v = variances_[k];
    sc.terms.row(k) = (means_.row(k) - zr) / v;
    const double sq = (means_.row(k) - zr).squaredNorm();
    sc.log_terms[k] = log_weights_[k] - half_d_log_2pi - 0.5 * static_cast<double>(d) * std::log(v) -
                      0.5 * sq / v;
    if (sc.log_terms[k] > max_term) max_term = sc.log_terms[k];
  }
  sc.resp = (sc.log_terms.array() - max_term).exp();
  const double total = sc.resp.sum();
  sc.log_norm = max_term + std::log(total);
  sc.resp /= total;
  sc.mean_term = sc.terms.transpose() * sc.resp;
  sc.precision_sum = (sc.resp.array() / variances_.array()).sum();
}

double GaussianMixture::log_density(const Vector& z) const {
  check_evaluable();
  if (z.size() != dim()) throw DomainError("log_density: dimension mismatch");
  Scratch sc(*this);
  evaluate(z.data(), sc);
  return sc.log_norm;
}

Vector GaussianMixture::score(const Vector& z) const {
  check_evaluable();
  if (z.size() != dim()) throw DomainError("score: dimension mismatch");
  Scratch sc(*this);
  evaluate(z.data(), sc);
  return sc.mean_term;
}

Matrix GaussianMixture::score_jacobian(const Vector& z) const {
  check_evaluable();
  if (z.size() != dim()) throw DomainError("score_jacobian: dimension mismatch");
  Scratch sc(*this);
  evaluate(z.data(), sc);
  const Eigen::Index d = dim();
  Matrix jac = -sc.precision_sum * Matrix::Identity(d, d);
  for (Eigen::Index k = 0; k < size(); ++k) {
    const Vector c = sc.terms.row(k).transpose() - sc.mean_term;
    jac.noalias() += sc.resp[k] * c * c.transpose();
  }
  return jac;
}

Vector GaussianMixture::score_jvp(const Vector& z, const Vector& u) const {
  Batch zb = z.transpose();
  Batch ub = u.transpose();
  return score_jvp_batch(zb, ub).row(0).transpose();
}

double GaussianMixture::divergence_of_score(const Vector& z) const {
  Batch zb = z.transpose();
  return divergence_of_score_batch(zb)[0];
}

Vector GaussianMixture::log_density_batch(const Batch& z) const {
  check_evaluable();
  if (z.cols() != dim()) throw DomainError("log_density: dimension mismatch");
  Scratch sc(*this);
  Vector out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    evaluate(z.row(i).data(), sc);
    out[i] = sc.log_norm;
  }
  return out;
}

Batch GaussianMixture::score_batch(const Batch& z) const {
  check_evaluable();
  if (z.cols() != dim()) throw DomainError("score: dimension mismatch");
  Scratch sc(*this);
  Batch out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    evaluate(z.row(i).data(), sc);
    out.row(i) = sc.mean_term.transpose();
  }
  return out;
}

Batch GaussianMixture::score_jvp_batch(const Batch& z, const Batch& u) const {
  check_evaluable();
  if (z.cols() != dim() || u.cols() != dim() || u.rows() != z.rows()) {
    throw DomainError("score_jvp: shape mismatch");
  }
  if (!u.allFinite()) throw DomainError("score_jvp: direction is not finite");
  Scratch sc(*this);
  Batch out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    evaluate(z.row(i).data(), sc);
    // H u = sum_k r_k c_k (c_k . u) - (sum_k r_k / var_k) u, c_k = e_k - mean(e)
    sc.u = u.row(i);
    Eigen::RowVectorXd acc = -sc.precision_sum * sc.u;
    for (Eigen::Index k = 0; k < size(); ++k) {
      const Eigen::RowVectorXd c = sc.terms.row(k) - sc.mean_term.transpose();
      acc += (sc.resp[k] * c.dot(sc.u)) * c;
    }
    out.row(i) = acc;
  }
  return out;
}

Vector GaussianMixture::divergence_of_score_batch(const Batch& z) const {
  check_evaluable();
  if (z.cols() != dim()) throw DomainError("divergence: dimension mismatch");
  Scratch sc(*this);
  Vector out(z.rows());
  const double d = static_cast<double>(dim());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    evaluate(z.row(i).data(), sc);
    double spread = 0.0;
    for (Eigen::Index k = 0; k < size(); ++k) {
      spread += sc.resp[k] * (sc.terms.row(k) - sc.mean_term.transpose()).squaredNorm();
    }
    out[i] = spread - d * sc.precision_sum;
  }
  return out;
}

DiffusedMeasure::DiffusedMeasure(GaussianMixture base, Schedule schedule)
    : base_(std::move(base)), schedule_(std::move(schedule)) {}

GaussianMixture DiffusedMeasure::at(double s) const {
  const auto [alpha, sigma] = schedule_.alpha_sigma(s);
  Vector var = (alpha * alpha) * base_.variances().array() + sigma * sigma;
  if (!(var.array() > 0.0).all()) {
    throw DomainError("diffused measure has a point mass at s = " + std::to_string(s));
  }
  return GaussianMixture(base_.weights(), alpha * base_.means(), std::move(var));
}

}  // namespace diffsens
