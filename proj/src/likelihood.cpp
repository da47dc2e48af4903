#include "diffsens/likelihood.hpp"

#include <cmath>
#include <numbers>

#include "diffsens/errors.hpp"
#include "diffsens/parallel.hpp"
#include "diffsens/rng.hpp"

namespace diffsens {

DivergenceEstimator DivergenceEstimator::hutchinson(std::size_t n_probes, std::uint64_t seed) {
  if (n_probes == 0) throw DomainError("Hutchinson estimator needs at least one probe");
  DivergenceEstimator est;
  est.mode = Mode::hutchinson;
  est.n_probes = n_probes;
  est.seed = seed;
  return est;
}

Vector divergence(const ScoreSource& src, const Schedule& sched, double s, const Batch& z,
                  const DivergenceEstimator& est, std::size_t step) {
  const auto [a, b] = sched.ode_coefficients(s);
  const Eigen::Index d = z.cols();
  if (est.mode == DivergenceEstimator::Mode::exact) {
    return (static_cast<double>(d) * a + b * src.score_divergence_batch(s, z).array()).matrix();
  }
  if (est.n_probes == 0) throw DomainError("Hutchinson estimator needs at least one probe");
  const NormalStream probes(est.seed, Substream::hutchinson);
  Vector acc = Vector::Zero(z.rows());
  Batch eps(z.rows(), d);
  for (std::size_t p = 0; p < est.n_probes; ++p) {
    const Eigen::RowVectorXd e = probes.draw(step, p, d).transpose();
    eps.rowwise() = e;
    const Batch jv = src.score_jvp_batch(s, z, eps);
    const double quad = e.squaredNorm();
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const Eigen::RowVectorXd ji = jv.row(i);
      acc[i] += a * quad + b * e.dot(ji);
    }
  }
  return acc / static_cast<double>(est.n_probes);
}

Vector standard_normal_log_density(const Batch& z) {
  const double c = -0.5 * static_cast<double>(z.cols()) * std::log(2.0 * std::numbers::pi);
  Vector out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::RowVectorXd zi = z.row(i);
    out[i] = c - 0.5 * zi.squaredNorm();
  }
  return out;
}

Matrix integrate_log_density(const ScoreSource& src, const Schedule& sched, const SamplePath& path,
                             const DivergenceEstimator& est, const Vector& initial_logp,
                             std::size_t workers) {
  if (path.kind != PathKind::ode) {
    throw UsageError("log-density integration is only defined along ODE paths");
  }
  if (path.stride != 1) throw UsageError("log-density integration needs every state (stride 1)");
  if (initial_logp.size() != path.batch_size()) throw DomainError("initial log-density size mismatch");
  const std::size_t n = path.grid.n_steps;
  Matrix logp(static_cast<Eigen::Index>(n + 1), path.batch_size());
  logp.row(0) = initial_logp.transpose();
  if (!src.concurrent()) workers = 1;
  for_each_shard(path.batch_size(), workers, [&](Eigen::Index begin, Eigen::Index end) {
    const Eigen::Index rows = end - begin;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = path.grid.time(i);
      const Batch z = path.state(i).middleRows(begin, rows);
      const Vector div = divergence(src, sched, s, z, est, i);
      const auto r = static_cast<Eigen::Index>(i);
      logp.block(r + 1, begin, 1, rows) = logp.block(r, begin, 1, rows) - path.grid.dt * div.transpose();
      if (!logp.block(r + 1, begin, 1, rows).allFinite()) {
        throw IntegrationError("non-finite log-density", i);
      }
    }
  });
  return logp;
}

}  // namespace diffsens
