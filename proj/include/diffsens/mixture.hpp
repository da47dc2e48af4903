#pragma once

#include <cstdint>

#include "diffsens/rng.hpp"
#include "diffsens/schedule.hpp"
#include "diffsens/types.hpp"

namespace diffsens {

// Weighted mixture of isotropic Gaussians N(mean_k, variance_k I). A zero
// variance encodes a Dirac point mass; such a mixture can be sampled and
// diffused but not evaluated.
//
// Evaluation is done in log space: responsibilities are a softmax over
// per-component log terms, so densities far below the double range (high
// dimension, far tails) stay finite.
class GaussianMixture {
 public:
  GaussianMixture(Vector weights, Batch means, Vector variances);

  // Uniform weights over the rows of points, all variances zero.
  static GaussianMixture from_empirical(const Batch& points);
  static GaussianMixture single(const Vector& mean, double variance);

  Eigen::Index dim() const noexcept { return means_.cols(); }
  Eigen::Index size() const noexcept { return means_.rows(); }
  const Vector& weights() const noexcept { return weights_; }
  const Batch& means() const noexcept { return means_; }
  const Vector& variances() const noexcept { return variances_; }
  bool has_atoms() const noexcept;

  // (1 - eta) * this + eta * other, as a concatenated mixture.
  GaussianMixture blend(const GaussianMixture& other, double eta) const;

  // n iid draws; row i uses coordinates (major, i) of the stream.
  Batch sample(const NormalStream& normals, const NormalStream& picks, std::uint64_t major,
               Eigen::Index n) const;

  double log_density(const Vector& z) const;
  Vector score(const Vector& z) const;
  // Hessian of the log-density.
  Matrix score_jacobian(const Vector& z) const;
  Vector score_jvp(const Vector& z, const Vector& u) const;
  // Trace of the score Jacobian, without forming it.
  double divergence_of_score(const Vector& z) const;

  Vector log_density_batch(const Batch& z) const;
  Batch score_batch(const Batch& z) const;
  Batch score_jvp_batch(const Batch& z, const Batch& u) const;
  Vector divergence_of_score_batch(const Batch& z) const;

 private:
  struct Scratch;
  void check_evaluable() const;
  // Fills scratch for point z: log terms, responsibilities, per-component
  // score terms e_k = (mean_k - z) / var_k and their weighted mean.
  void evaluate(const double* z, Scratch& scratch) const;

  Vector weights_;
  Batch means_;
  Vector variances_;
  Vector log_weights_;
};

// The law of alpha(s) X + sigma(s) eps for X drawn from a base mixture.
class DiffusedMeasure {
 public:
  DiffusedMeasure(GaussianMixture base, Schedule schedule);

  const GaussianMixture& base() const noexcept { return base_; }
  const Schedule& schedule() const noexcept { return schedule_; }
  Eigen::Index dim() const noexcept { return base_.dim(); }

  // Snapshot at sampling time s: means alpha mu_k, variances
  // alpha^2 var_k + sigma^2. Throws DomainError if a Dirac base is queried
  // at the data end.
  GaussianMixture at(double s) const;

  double log_density(double s, const Vector& z) const { return at(s).log_density(z); }
  Vector score(double s, const Vector& z) const { return at(s).score(z); }
  Matrix score_jacobian(double s, const Vector& z) const { return at(s).score_jacobian(z); }
  double divergence_of_score(double s, const Vector& z) const {
    return at(s).divergence_of_score(z);
  }

 private:
  GaussianMixture base_;
  Schedule schedule_;
};

}  // namespace diffsens
