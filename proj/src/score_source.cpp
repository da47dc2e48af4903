#include "diffsens/score_source.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "diffsens/errors.hpp"
#include "diffsens/subprocess.hpp"
#include "diffsens/wire.hpp"

namespace diffsens {

Batch ScoreSource::score_jvp_batch(double s, const Batch& z, const Batch& u) const {
  return fd_score_jvp_batch(*this, s, z, u);
}

Vector ScoreSource::score_divergence_batch(double s, const Batch& z) const {
  const Eigen::Index d = dim();
  Vector trace = Vector::Zero(z.rows());
  Batch basis = Batch::Zero(z.rows(), d);
  for (Eigen::Index j = 0; j < d; ++j) {
    basis.col(j).setOnes();
    trace += score_jvp_batch(s, z, basis).col(j);
    basis.col(j).setZero();
  }
  return trace;
}

Vector ScoreSource::log_density_batch(double, const Batch&) const {
  throw UsageError("score source has no closed-form density channel");
}

Vector ScoreSource::score(double s, const Vector& z) const {
  Batch zb = z.transpose();
  return score_batch(s, zb).row(0).transpose();
}

Vector ScoreSource::score_jvp(double s, const Vector& z, const Vector& u) const {
  Batch zb = z.transpose();
  Batch ub = u.transpose();
  return score_jvp_batch(s, zb, ub).row(0).transpose();
}

Batch fd_score_jvp_batch(const ScoreSource& src, double s, const Batch& z, const Batch& u) {
  if (z.rows() != u.rows() || z.cols() != u.cols()) throw DomainError("score_jvp: shape mismatch");
  if (!u.allFinite()) throw DomainError("score_jvp: direction is not finite");
  const Eigen::Index n = z.rows();
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  constexpr double tiny = std::numeric_limits<double>::min();

  Vector step(n);
  Batch probes(2 * n, z.cols());
  Eigen::Index live = 0;
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    // Copies keep the norms independent of the row's alignment in its batch.
    const Eigen::RowVectorXd ui = u.row(i);
    const Eigen::RowVectorXd zi = z.row(i);
    const double unorm = ui.norm();
    if (unorm == 0.0) continue;
    const double eps = root_eps * (1.0 + zi.norm()) / std::max(unorm, tiny);
    step[live] = eps;
    probes.row(2 * live) = z.row(i) + eps * u.row(i);
    probes.row(2 * live + 1) = z.row(i) - eps * u.row(i);
    rows.push_back(i);
    ++live;
  }
  Batch out = Batch::Zero(n, z.cols());
  if (live == 0) return out;
  const Batch values = src.score_batch(s, probes.topRows(2 * live));
  for (Eigen::Index k = 0; k < live; ++k) {
    out.row(rows[static_cast<std::size_t>(k)]) =
        (values.row(2 * k) - values.row(2 * k + 1)) / (2.0 * step[k]);
  }
  return out;
}

Batch AnalyticScoreSource::score_batch(double s, const Batch& z) const {
  return measure_.at(s).score_batch(z);
}

Batch AnalyticScoreSource::score_jvp_batch(double s, const Batch& z, const Batch& u) const {
  return measure_.at(s).score_jvp_batch(z, u);
}

Vector AnalyticScoreSource::score_divergence_batch(double s, const Batch& z) const {
  return measure_.at(s).divergence_of_score_batch(z);
}

Vector AnalyticScoreSource::log_density_batch(double s, const Batch& z) const {
  return measure_.at(s).log_density_batch(z);
}

ExternalScoreSource::ExternalScoreSource(const std::string& command, Eigen::Index dim)
    : dim_(dim), proc_(std::make_unique<Subprocess>(command)) {
  try {
    if (dim <= 0) throw TransportError("external score source needs a positive dimension");
    handshake();
  } catch (...) {
    proc_->kill();
    throw;
  }
}

void ExternalScoreSource::handshake() {
  const Eigen::Index dim = dim_;
  if (!proc_->write_line(wire::hello(dim))) throw TransportError("could not write hello to score process");
  const auto reply = proc_->read_line();
  if (!reply) throw TransportError("score process closed its output before hello");
  const Eigen::Index echoed = wire::parse_hello(*reply);
  if (echoed != dim) {
    throw TransportError("score process reports dimension " + std::to_string(echoed) + ", expected " +
                             std::to_string(dim),
                         *reply);
  }
  // Determinism echo: the same probe batch must come back bit-identical.
  Batch probe(2, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    probe(0, j) = 0.0;
    probe(1, j) = 0.25 + 0.5 * std::sin(static_cast<double>(j + 1));
  }
  const Batch first = request(0.5, probe);
  const Batch second = request(0.5, probe);
  if (!(first.array() == second.array()).all()) {
    throw TransportError("score process is not deterministic: repeated query returned different values");
  }
}

ExternalScoreSource::~ExternalScoreSource() {
  if (proc_ && !proc_->exited()) {
    proc_->write_line(wire::shutdown());
    proc_->close_stdin();
    proc_->wait();
  }
}

int ExternalScoreSource::shutdown() {
  std::lock_guard lock(mutex_);
  if (!proc_->exited()) {
    proc_->write_line(wire::shutdown());
    proc_->close_stdin();
  }
  return proc_->wait();
}

Batch ExternalScoreSource::request(double s, const Batch& z) const {
  if (z.cols() != dim_) throw TransportError("query dimension does not match the score process");
  if (proc_->exited()) throw TransportError("score process has exited");
  ++requests_;
  if (!proc_->write_line(wire::score_request(s, z))) {
    throw TransportError("could not write to score process (exited?)");
  }
  const auto reply = proc_->read_line();
  if (!reply) {
    const int status = proc_->wait();
    throw TransportError("score process exited with status " + std::to_string(status));
  }
  return wire::parse_score_reply(*reply, z.rows(), dim_);
}

Batch ExternalScoreSource::score_batch(double s, const Batch& z) const {
  std::lock_guard lock(mutex_);
  return request(s, z);
}

}  // namespace diffsens
